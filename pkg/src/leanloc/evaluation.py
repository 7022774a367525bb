"""Scoring of pose predictions: nearest-neighbor grid retrieval for the
matching tasks, hyper-cube Manhattan distances for interpolation, plain
L2 error statistics, and the per-position success heatmap.

All distances that mix position and angles are expressed in grid steps
(each axis divided by its own sampling step, yaw wrapped on its cycle), so
results are comparable across grid densities.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import Manifest, PredictionSet
from .errors import DataIntegrityError
from .pose import Pose, label_to_pose, quat_angular_distance
from .sampler import (
    GridIndex,
    GridSpec,
    INSIDE_BUILDING,
    SPLIT_TEST,
    SPLIT_TRAIN,
    SPLIT_VALIDATION,
)

TASK_MATCHING = "matching"
TASK_INTERPOLATION = "interpolation"

HEATMAP_RULES = ("rank1", "rank3", "2d_d1", "2d_d3", "4d_d1", "4d_d3")


@dataclass
class EvalReport:
    """Per-task metric bundle; unused metric groups stay None."""

    task: str
    n_scored: int
    n_candidates: int = 0
    nn1: float = None
    nn3: float = None
    d_fractions: dict = None   # keys: 2d_d1, 2d_d3, 4d_d1, 4d_d3
    l2: dict = None            # position/orientation mean and median

    def to_json(self) -> dict:
        out = {"task": self.task, "n_scored": self.n_scored}
        if self.n_candidates:
            out["n_candidates"] = self.n_candidates
        if self.nn1 is not None:
            out["nn"] = {"1nn": self.nn1, "3nn": self.nn3}
        if self.d_fractions is not None:
            out["manhattan"] = dict(self.d_fractions)
        if self.l2 is not None:
            out["l2"] = dict(self.l2)
        return out


@dataclass
class HeatmapGrid:
    """Per-position success rates aggregated over orientations.

    rates is NaN where a cell has no scored samples; building marks cells
    whose position falls inside a footprint.
    """

    rates: np.ndarray     # (ny, nx) float
    counts: np.ndarray    # (ny, nx) int
    building: np.ndarray  # (ny, nx) bool
    rule: str
    delta: float
    origin: tuple


def grid_distance(a: Pose, b: Pose, spec: GridSpec) -> float:
    """Euclidean distance in grid-step units with yaw wrapped to [-180, 180]."""
    dx = (a.x - b.x) / spec.delta
    dy = (a.y - b.y) / spec.delta
    dyaw = ((a.yaw - b.yaw + 180.0) % 360.0 - 180.0) / spec.yaw_step
    dp = (a.pitch - b.pitch) / spec.pitch_step
    return math.sqrt(dx * dx + dy * dy + dyaw * dyaw + dp * dp)


def _pose_matrix(poses, spec: GridSpec) -> np.ndarray:
    """Poses as (n, 4) rows of step-normalized coordinates."""
    arr = np.array([[p.x, p.y, p.yaw, p.pitch] for p in poses], dtype=np.float64)
    arr[:, 0] /= spec.delta
    arr[:, 1] /= spec.delta
    arr[:, 2] /= spec.yaw_step
    arr[:, 3] /= spec.pitch_step
    return arr


def _distances_sq(pred_row: np.ndarray, cand: np.ndarray, n_yaw: int) -> np.ndarray:
    d = cand - pred_row
    d[:, 2] = (d[:, 2] + n_yaw / 2.0) % n_yaw - n_yaw / 2.0
    return np.einsum("ij,ij->i", d, d)


def rank_of_truth(pred: Pose, truth_id: int, candidates, spec: GridSpec) -> int:
    """Rank of the true pose among candidates ordered by grid distance to the
    prediction; ties broken by smaller sample id.

    candidates: sequence of (id, Pose); must contain truth_id.
    """
    ids = np.array([c[0] for c in candidates])
    where = np.flatnonzero(ids == truth_id)
    if len(where) == 0:
        raise DataIntegrityError(f"truth id {truth_id} not among candidates")
    cand = _pose_matrix([c[1] for c in candidates], spec)
    pred_row = _pose_matrix([pred], spec)[0]
    d = _distances_sq(pred_row, cand, spec.n_yaw)
    dt = d[where[0]]
    better = (d < dt) | ((d == dt) & (ids < truth_id))
    return int(better.sum()) + 1


def _spec_of(manifest: Manifest) -> GridSpec:
    from .dataset import grid_spec_from_json

    return grid_spec_from_json(manifest.header["grid"])


def _scored_records(preds: PredictionSet, manifest: Manifest, allowed_splits):
    """Records the predictions must cover, with strict coverage checks."""
    name = manifest.header.get("name", "")
    if preds.manifest_name and name and preds.manifest_name != name:
        raise DataIntegrityError(
            f"prediction set answers manifest {preds.manifest_name!r}, got {name!r}"
        )
    split = preds.split
    if split not in allowed_splits:
        raise DataIntegrityError(
            f"prediction split {split!r} not usable here (expected {sorted(allowed_splits)})"
        )
    wanted = {SPLIT_TRAIN, SPLIT_VALIDATION} if split == "trainval" else {split}
    scored = manifest.select(split=wanted, valid_only=True)
    scored_ids = {r.id for r in scored}
    missing = sorted(scored_ids - set(preds.labels))
    if missing:
        shown = ", ".join(map(str, missing[:10]))
        raise DataIntegrityError(
            f"predictions missing {len(missing)} ids from split {split!r}: {shown}"
            + ("..." if len(missing) > 10 else "")
        )
    extra = sorted(set(preds.labels) - scored_ids)
    if extra:
        shown = ", ".join(map(str, extra[:10]))
        raise DataIntegrityError(
            f"predictions carry {len(extra)} ids outside split {split!r}: {shown}"
            + ("..." if len(extra) > 10 else "")
        )
    return scored


def matching_report(preds: PredictionSet, manifest: Manifest) -> EvalReport:
    """1nn/3nn fractions: how often the true grid pose is the nearest
    (or among the three nearest) training poses to the predicted pose."""
    spec = _spec_of(manifest)
    scored = _scored_records(
        preds, manifest, (SPLIT_TRAIN, SPLIT_VALIDATION, "trainval")
    )
    candidates = manifest.select(split={SPLIT_TRAIN, SPLIT_VALIDATION}, valid_only=True)
    cand_ids = np.array([r.id for r in candidates])
    cand = _pose_matrix([r.pose for r in candidates], spec)
    aoi = manifest.aoi

    hits1 = hits3 = 0
    for rec in scored:
        pred_pose = label_to_pose(preds.labels[rec.id], aoi)
        pred_row = _pose_matrix([pred_pose], spec)[0]
        d = _distances_sq(pred_row, cand, spec.n_yaw)
        truth_id = rec.label_source_id
        where = np.flatnonzero(cand_ids == truth_id)
        if len(where) == 0:
            raise DataIntegrityError(f"truth id {truth_id} not in candidate set")
        dt = d[where[0]]
        rank = int(((d < dt) | ((d == dt) & (cand_ids < truth_id))).sum()) + 1
        hits1 += rank == 1
        hits3 += rank <= 3
    n = len(scored)
    return EvalReport(
        task=TASK_MATCHING,
        n_scored=n,
        n_candidates=len(candidates),
        nn1=hits1 / n if n else 0.0,
        nn3=hits3 / n if n else 0.0,
    )


def cube_of(pose: Pose, spec: GridSpec):
    """Enclosing hyper-cube of a pose. Returns (GridIndex, out_of_area).

    Positions outside the AOI clamp to the border cells and set the flag;
    yaw is periodic.
    """
    eps = 1e-9
    fx = (pose.x - spec.aoi.x0) / spec.delta
    fy = (pose.y - spec.aoi.y0) / spec.delta
    ncx, ncy = spec.nx - 1, spec.ny - 1
    i = min(max(int(math.floor(fx + eps)), 0), ncx - 1)
    j = min(max(int(math.floor(fy + eps)), 0), ncy - 1)
    out = not (
        spec.aoi.x0 - 1e-9 <= pose.x <= spec.aoi.x0 + spec.aoi.width + 1e-9
        and spec.aoi.y0 - 1e-9 <= pose.y <= spec.aoi.y0 + spec.aoi.height + 1e-9
    )
    k = int(math.floor(pose.yaw / spec.yaw_step + eps)) % spec.n_yaw
    l = min(
        max(int(math.floor((pose.pitch - spec.pitch_min) / spec.pitch_step + eps)), 0),
        spec.n_pitch - 2,
    )
    return GridIndex(i, j, k, l), out


def manhattan_cell_distance(a: GridIndex, b: GridIndex, spec: GridSpec, dims: str = "4d") -> int:
    """Manhattan distance between hyper-cubes; yaw wraps on its cycle."""
    d = abs(a.i - b.i) + abs(a.j - b.j)
    if dims == "2d":
        return d
    if dims != "4d":
        raise ValueError(f"dims must be '2d' or '4d', got {dims!r}")
    dk = abs(a.k - b.k)
    return d + min(dk, spec.n_yaw - dk) + abs(a.l - b.l)


def interpolation_report(preds: PredictionSet, manifest: Manifest) -> EvalReport:
    """Fractions of midpoint test samples whose predicted pose falls in the
    same hyper-cube (D<1) or within Manhattan cell distance 3 (D<3)."""
    spec = _spec_of(manifest)
    scored = _scored_records(preds, manifest, (SPLIT_TEST,))
    aoi = manifest.aoi
    counts = {"2d_d1": 0, "2d_d3": 0, "4d_d1": 0, "4d_d3": 0}
    for rec in scored:
        pred_pose = label_to_pose(preds.labels[rec.id], aoi)
        cell, _ = cube_of(pred_pose, spec)
        d2 = manhattan_cell_distance(cell, rec.index, spec, "2d")
        d4 = manhattan_cell_distance(cell, rec.index, spec, "4d")
        counts["2d_d1"] += d2 < 1
        counts["2d_d3"] += d2 < 3
        counts["4d_d1"] += d4 < 1
        counts["4d_d3"] += d4 < 3
    n = len(scored)
    fractions = {k: (v / n if n else 0.0) for k, v in counts.items()}
    return EvalReport(task=TASK_INTERPOLATION, n_scored=n, d_fractions=fractions)


def l2_report(preds: PredictionSet, manifest: Manifest) -> dict:
    """Mean/median position error (meters) and orientation error (degrees).

    The truth is taken from the record's label (so shuffled manifests are
    scored against their assigned targets), predictions go through
    label_to_pose first.
    """
    allowed = (SPLIT_TRAIN, SPLIT_VALIDATION, SPLIT_TEST, "trainval")
    scored = _scored_records(preds, manifest, allowed)
    aoi = manifest.aoi
    pos_err, ang_err = [], []
    for rec in scored:
        pred_label = preds.labels[rec.id]
        pred_pose = label_to_pose(pred_label, aoi)
        truth_pose = label_to_pose(rec.label, aoi, z=rec.pose.z)
        pos_err.append(math.hypot(pred_pose.x - truth_pose.x, pred_pose.y - truth_pose.y))
        ang_err.append(quat_angular_distance(pred_label.quat.normalized(), rec.label.quat))
    pos = np.array(pos_err) if pos_err else np.zeros(1)
    ang = np.array(ang_err) if ang_err else np.zeros(1)
    return {
        "position_mean": float(pos.mean()),
        "position_median": float(np.median(pos)),
        "orientation_mean": float(ang.mean()),
        "orientation_median": float(np.median(ang)),
        "n": len(pos_err),
    }


def _success_flags(preds, manifest, scored, rule: str) -> list:
    spec = _spec_of(manifest)
    aoi = manifest.aoi
    if rule in ("rank1", "rank3"):
        limit = 1 if rule == "rank1" else 3
        candidates = manifest.select(split={SPLIT_TRAIN, SPLIT_VALIDATION}, valid_only=True)
        cand_ids = np.array([r.id for r in candidates])
        cand = _pose_matrix([r.pose for r in candidates], spec)
        flags = []
        for rec in scored:
            pred_pose = label_to_pose(preds.labels[rec.id], aoi)
            pred_row = _pose_matrix([pred_pose], spec)[0]
            d = _distances_sq(pred_row, cand, spec.n_yaw)
            where = np.flatnonzero(cand_ids == rec.label_source_id)
            if len(where) == 0:
                raise DataIntegrityError(f"truth id {rec.label_source_id} not in candidate set")
            dt = d[where[0]]
            rank = int(((d < dt) | ((d == dt) & (cand_ids < rec.label_source_id))).sum()) + 1
            flags.append(rank <= limit)
        return flags
    dims = "2d" if rule.startswith("2d") else "4d"
    limit = 1 if rule.endswith("d1") else 3
    flags = []
    for rec in scored:
        pred_pose = label_to_pose(preds.labels[rec.id], aoi)
        cell, _ = cube_of(pred_pose, spec)
        flags.append(manhattan_cell_distance(cell, rec.index, spec, dims) < limit)
    return flags


def heatmap(preds: PredictionSet, manifest: Manifest, rule: str = "4d_d1") -> HeatmapGrid:
    """Success rate per (i, j) position, aggregated over all orientations.

    Cells with no valid scored samples are NaN; cells whose position lies
    inside a building are flagged separately (from the recorded
    inside_building validity, no scene needed).
    """
    if rule not in HEATMAP_RULES:
        raise DataIntegrityError(f"unknown heatmap rule {rule!r}; expected one of {HEATMAP_RULES}")
    spec = _spec_of(manifest)
    allowed = (SPLIT_TRAIN, SPLIT_VALIDATION, SPLIT_TEST, "trainval")
    scored = _scored_records(preds, manifest, allowed)
    is_test = preds.split == SPLIT_TEST
    nx = spec.nx - 1 if is_test else spec.nx
    ny = spec.ny - 1 if is_test else spec.ny

    hits = np.zeros((ny, nx))
    counts = np.zeros((ny, nx), dtype=np.int64)
    for rec, ok in zip(scored, _success_flags(preds, manifest, scored, rule)):
        hits[rec.index.j, rec.index.i] += ok
        counts[rec.index.j, rec.index.i] += 1

    building = np.zeros((ny, nx), dtype=bool)
    relevant = {SPLIT_TEST} if is_test else {SPLIT_TRAIN, SPLIT_VALIDATION}
    for rec in manifest.records:
        if rec.split in relevant and rec.validity == INSIDE_BUILDING:
            if rec.index.j < ny and rec.index.i < nx:
                building[rec.index.j, rec.index.i] = True

    with np.errstate(invalid="ignore"):
        rates = np.where(counts > 0, hits / np.maximum(counts, 1), np.nan)
    return HeatmapGrid(
        rates=rates,
        counts=counts,
        building=building,
        rule=rule,
        delta=spec.delta,
        origin=(spec.aoi.x0, spec.aoi.y0),
    )


def heatmap_to_csv(grid: HeatmapGrid, path):
    """Numeric export: one row per j (bottom row last), nan = no samples,
    -1 = building cell."""
    ny, nx = grid.rates.shape
    with open(path, "w", encoding="utf-8") as fh:
        for j in range(ny):
            row = []
            for i in range(nx):
                if grid.building[j, i]:
                    row.append("-1")
                elif grid.counts[j, i] == 0:
                    row.append("nan")
                else:
                    row.append(f"{grid.rates[j, i]:.6f}")
            fh.write(",".join(row) + "\n")


def heatmap_to_png(grid: HeatmapGrid, path, cell_px: int = 12):
    """Color-mapped raster: red = high success, blue = low, buildings white,
    unsampled cells gray. Row 0 (smallest y) is at the bottom of the image."""
    from matplotlib import colormaps
    from PIL import Image

    cmap = colormaps["jet"]
    ny, nx = grid.rates.shape
    rgb = np.zeros((ny, nx, 3), dtype=np.uint8)
    filled = (grid.counts > 0) & ~grid.building
    vals = np.nan_to_num(grid.rates, nan=0.0)
    colored = (np.asarray(cmap(vals))[:, :, :3] * 255).astype(np.uint8)
    rgb[filled] = colored[filled]
    rgb[~filled] = (160, 160, 160)
    rgb[grid.building] = (255, 255, 255)
    rgb = np.kron(rgb[::-1, :, :], np.ones((cell_px, cell_px, 1), dtype=np.uint8))
    Image.fromarray(rgb, mode="RGB").save(path)


def write_report(report: EvalReport, path, extra: dict = None):
    out = report.to_json()
    if extra:
        out.update(extra)
    Path(path).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out
