"""4D pose-grid enumeration, validity rules, validation split, and label
shuffling for the geometrically-decorrelated task variant."""

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError
from .pose import AOI, DEFAULT_CAMERA_HEIGHT, Pose, PoseLabel, pose_to_label
from .raster import LeanTriplet
from .scene import SceneModel, is_inside_building

# validity states
VALID = "valid"
INSIDE_BUILDING = "inside_building"
TOO_FEW_EDGES = "too_few_edges"
NO_SKYLINE = "no_skyline"
VALIDITY_STATES = (VALID, INSIDE_BUILDING, TOO_FEW_EDGES, NO_SKYLINE)

MIN_EDGE_COUNT = 8         # images with fewer visible edges are invalid
MIN_SKY_FRACTION = 0.5     # of the topmost pixel row

SPLIT_TRAIN = "train"
SPLIT_VALIDATION = "validation"
SPLIT_TEST = "test"
SPLITS = (SPLIT_TRAIN, SPLIT_VALIDATION, SPLIT_TEST)


class GridIndex(NamedTuple):
    i: int  # x position
    j: int  # y position
    k: int  # yaw
    l: int  # pitch


def _exact_steps(span: float, step: float, what: str) -> int:
    n = span / step
    if abs(n - round(n)) > 1e-9:
        raise ConfigurationError(f"{what} step {step} does not divide span {span}")
    return int(round(n))


@dataclass(frozen=True)
class GridSpec:
    """The 4D sampling lattice: positions every delta meters over the AOI,
    yaw/pitch on fixed angular steps, camera at a fixed height."""

    aoi: AOI
    delta: float
    yaw_step: float = 5.0
    pitch_min: float = 0.0
    pitch_max: float = 15.0
    pitch_step: float = 3.0
    z: float = DEFAULT_CAMERA_HEIGHT

    def __post_init__(self):
        if self.delta <= 0:
            raise ConfigurationError(f"grid step delta must be > 0, got {self.delta}")
        _exact_steps(360.0, self.yaw_step, "yaw")
        _exact_steps(self.pitch_max - self.pitch_min, self.pitch_step, "pitch")

    @property
    def nx(self) -> int:
        """Position samples along x (inclusive endpoints)."""
        return int(math.floor(self.aoi.width / self.delta + 1e-9)) + 1

    @property
    def ny(self) -> int:
        return int(math.floor(self.aoi.height / self.delta + 1e-9)) + 1

    @property
    def n_yaw(self) -> int:
        return _exact_steps(360.0, self.yaw_step, "yaw")

    @property
    def n_pitch(self) -> int:
        return _exact_steps(self.pitch_max - self.pitch_min, self.pitch_step, "pitch") + 1

    def grid_size(self) -> int:
        return self.nx * self.ny * self.n_yaw * self.n_pitch

    def midpoint_size(self) -> int:
        # yaw is periodic so it keeps all n_yaw midpoints
        return (self.nx - 1) * (self.ny - 1) * self.n_yaw * (self.n_pitch - 1)

    def pose_at(self, index: GridIndex) -> Pose:
        return Pose(
            x=self.aoi.x0 + index.i * self.delta,
            y=self.aoi.y0 + index.j * self.delta,
            yaw=index.k * self.yaw_step,
            pitch=self.pitch_min + index.l * self.pitch_step,
            z=self.z,
        )

    def midpoint_at(self, index: GridIndex) -> Pose:
        return Pose(
            x=self.aoi.x0 + (index.i + 0.5) * self.delta,
            y=self.aoi.y0 + (index.j + 0.5) * self.delta,
            yaw=(index.k + 0.5) * self.yaw_step,
            pitch=self.pitch_min + (index.l + 0.5) * self.pitch_step,
            z=self.z,
        )


def enumerate_grid(spec: GridSpec):
    """All training-grid (GridIndex, Pose) pairs in row-major (i, j, k, l) order."""
    for i in range(spec.nx):
        for j in range(spec.ny):
            for k in range(spec.n_yaw):
                for l in range(spec.n_pitch):
                    idx = GridIndex(i, j, k, l)
                    yield idx, spec.pose_at(idx)


def midpoint_grid(spec: GridSpec):
    """Hyper-cube-center test poses; the GridIndex names the enclosing cell.

    Midpoints sit half a step off the grid in all four dimensions, so every
    test pose is maximally far from the surrounding training poses. Yaw is
    periodic and keeps all n_yaw midpoints; the other axes have one fewer
    cell than grid lines.
    """
    for i in range(spec.nx - 1):
        for j in range(spec.ny - 1):
            for k in range(spec.n_yaw):
                for l in range(spec.n_pitch - 1):
                    idx = GridIndex(i, j, k, l)
                    yield idx, spec.midpoint_at(idx)


@dataclass
class SampleRecord:
    """One grid sample: pose, training label, validity, and split membership.

    label_source_id points at the record whose pose the label encodes; it
    differs from id only after label shuffling.
    """

    id: int
    index: GridIndex
    pose: Pose
    label: PoseLabel
    validity: str
    split: str
    label_source_id: int = -1

    def __post_init__(self):
        if self.label_source_id < 0:
            self.label_source_id = self.id

    @property
    def is_valid(self) -> bool:
        return self.validity == VALID


def check_validity(scene: SceneModel, pose: Pose, triplet: LeanTriplet) -> str:
    """Apply the validity rules in fixed order and report the first failure.

    1. pose inside a building footprint -> inside_building
    2. fewer than MIN_EDGE_COUNT visible edges -> too_few_edges
    3. less than half of the topmost pixel row is sky -> no_skyline
    """
    if is_inside_building(scene, (pose.x, pose.y)):
        return INSIDE_BUILDING
    if triplet.edge.visible_edge_count < MIN_EDGE_COUNT:
        return TOO_FEW_EDGES
    top = triplet.face[0]
    sky = int((top == 0).sum())
    # exactly 50% sky passes
    if 2 * sky < len(top):
        return NO_SKYLINE
    return VALID


def split_validation(records, fraction: float = 0.1, seed: int = 0):
    """Mark floor(fraction * N) of the records as the validation split.

    Records must be valid training samples; selection is uniform without
    replacement and deterministic per seed.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigurationError(f"validation fraction must be in (0, 1), got {fraction}")
    records = list(records)
    n_val = int(math.floor(fraction * len(records)))
    chosen = set(np.random.default_rng(seed).permutation(len(records))[:n_val].tolist())
    return [
        replace(r, split=SPLIT_VALIDATION if pos in chosen else SPLIT_TRAIN)
        for pos, r in enumerate(records)
    ]


def shuffle_labels(records, seed: int = 0):
    """Permute labels uniformly across records (the decorrelated variant).

    Every record keeps its images and pose but carries another record's
    label; label_source_id records the donor so evaluation can still find
    the target pose.
    """
    records = list(records)
    perm = np.random.default_rng(seed).permutation(len(records))
    return [
        replace(r, label=records[p].label, label_source_id=records[p].id)
        for r, p in zip(records, perm)
    ]


def record_for_pose(sample_id: int, index: GridIndex, pose: Pose, aoi: AOI,
                    validity: str, split: str) -> SampleRecord:
    return SampleRecord(
        id=sample_id,
        index=index,
        pose=pose,
        label=pose_to_label(pose, aoi),
        validity=validity,
        split=split,
    )
