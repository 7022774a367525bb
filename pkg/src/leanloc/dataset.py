"""Dataset persistence: lean images on disk, line-delimited JSON manifests,
prediction sets, and channel stacking for training input.

Directory layout:
    <out>/manifest.jsonl       header line + one record line per sample
    <out>/edge/00000123.png    8-bit grayscale, 0/255
    <out>/face/00000123.png    8-bit grayscale, 0/255
    <out>/depth/00000123.png   16-bit grayscale, linear in [near, far]

Only valid samples carry image files; invalid records keep their validity
reason so maps of the sampling area can be reconstructed.
"""

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataIntegrityError
from .pose import AOI, Pose, PoseLabel
from .raster import LeanTriplet
from .sampler import GridIndex, SampleRecord, SPLITS, VALIDITY_STATES

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.jsonl"
MANIFEST_KIND = "leanloc-manifest"
PREDICTIONS_KIND = "leanloc-predictions"
IMAGE_KINDS = ("edge", "face", "depth")

COMBOS = ("E", "F", "D", "EF", "EFD")  # channel stacking variants


def save_mask_png(path, mask: np.ndarray):
    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def load_mask_png(path) -> np.ndarray:
    return (np.asarray(Image.open(path), dtype=np.uint8) > 127).astype(np.uint8)


def encode_depth(depth: np.ndarray, near: float, far: float) -> np.ndarray:
    """Linear 16-bit quantization: near -> 0, far -> 65535."""
    code = np.round((np.asarray(depth) - near) / (far - near) * 65535.0)
    return np.clip(code, 0, 65535).astype(np.uint16)


def decode_depth(code: np.ndarray, near: float, far: float) -> np.ndarray:
    return near + code.astype(np.float64) / 65535.0 * (far - near)


def save_depth_png(path, depth: np.ndarray, near: float, far: float):
    Image.fromarray(encode_depth(depth, near, far)).save(path, format="PNG")  # 16-bit


def load_depth_png(path, near: float, far: float) -> np.ndarray:
    code = np.asarray(Image.open(path), dtype=np.uint16)
    return decode_depth(code, near, far)


def _record_to_json(rec: SampleRecord, files) -> dict:
    return {
        "id": rec.id,
        "index": list(rec.index),
        "pose": [rec.pose.x, rec.pose.y, rec.pose.z, rec.pose.yaw, rec.pose.pitch],
        "label": list(rec.label.as_tuple()),
        "validity": rec.validity,
        "split": rec.split,
        "label_source_id": rec.label_source_id,
        "files": files,
    }


def _record_from_json(obj: dict, line_no: int, path) -> tuple:
    try:
        x, y, z, yaw, pitch = obj["pose"]
        rec = SampleRecord(
            id=int(obj["id"]),
            index=GridIndex(*obj["index"]),
            pose=Pose(x=x, y=y, z=z, yaw=yaw, pitch=pitch),
            label=PoseLabel.from_tuple(obj["label"]),
            validity=obj["validity"],
            split=obj["split"],
            label_source_id=int(obj["label_source_id"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataIntegrityError(f"{path}:{line_no}: malformed record ({exc})")
    if rec.validity not in VALIDITY_STATES:
        raise DataIntegrityError(f"{path}:{line_no}: unknown validity {rec.validity!r}")
    if rec.split not in SPLITS:
        raise DataIntegrityError(f"{path}:{line_no}: unknown split {rec.split!r}")
    return rec, obj.get("files")


@dataclass
class Manifest:
    """Dataset index: a generation-parameter header plus per-sample records.

    The header carries everything needed to re-render the dataset (scene
    source, grid, camera, tolerances, seeds), so a manifest alone fully
    determines its images.
    """

    header: dict
    records: list
    files: dict  # id -> {edge|face|depth: relative path} or None
    root: Path = None

    @property
    def aoi(self) -> AOI:
        a = self.header["grid"]["aoi"]
        return AOI(a[0], a[1], a[2], a[3])

    @property
    def near(self) -> float:
        return self.header["camera"]["near"]

    @property
    def far(self) -> float:
        return self.header["camera"]["far"]

    @property
    def shuffled(self) -> bool:
        return bool(self.header.get("shuffled", False))

    def by_id(self) -> dict:
        return {r.id: r for r in self.records}

    def select(self, split=None, valid_only=True):
        out = []
        wanted = None if split is None else set([split] if isinstance(split, str) else split)
        for r in self.records:
            if valid_only and not r.is_valid:
                continue
            if wanted is not None and r.split not in wanted:
                continue
            out.append(r)
        return out

    def image_path(self, sample_id: int, kind: str) -> Path:
        rel = (self.files.get(sample_id) or {}).get(kind)
        if rel is None:
            raise DataIntegrityError(f"sample {sample_id} has no {kind} image")
        return (self.root or Path(".")) / rel


def grid_spec_to_json(spec) -> dict:
    return {
        "aoi": [spec.aoi.x0, spec.aoi.y0, spec.aoi.width, spec.aoi.height],
        "delta": spec.delta,
        "yaw_step": spec.yaw_step,
        "pitch_min": spec.pitch_min,
        "pitch_max": spec.pitch_max,
        "pitch_step": spec.pitch_step,
        "z": spec.z,
    }


def grid_spec_from_json(obj: dict):
    from .sampler import GridSpec

    return GridSpec(
        aoi=AOI(*obj["aoi"]),
        delta=obj["delta"],
        yaw_step=obj["yaw_step"],
        pitch_min=obj["pitch_min"],
        pitch_max=obj["pitch_max"],
        pitch_step=obj["pitch_step"],
        z=obj["z"],
    )


class DatasetWriter:
    """Streaming writer: images land as samples arrive, the manifest is
    appended once by the finalizing caller."""

    def __init__(self, out_dir, header: dict):
        self.root = Path(out_dir)
        self.header = dict(header)
        self.header.setdefault("schema_version", SCHEMA_VERSION)
        self.header.setdefault("kind", MANIFEST_KIND)
        self.header.setdefault("units", "1 unit = 1 meter")
        self._rows = []
        self._ids = set()
        for kind in IMAGE_KINDS:
            (self.root / kind).mkdir(parents=True, exist_ok=True)

    def add(self, record: SampleRecord, triplet: LeanTriplet = None,
            encoded: dict = None):
        """Add one record; valid records need a triplet or pre-encoded PNG bytes."""
        if record.id in self._ids:
            raise DataIntegrityError(f"duplicate sample id {record.id}")
        self._ids.add(record.id)
        files = None
        if triplet is not None or encoded is not None:
            files = {k: f"{k}/{record.id:08d}.png" for k in IMAGE_KINDS}
            if encoded is not None:
                for kind in IMAGE_KINDS:
                    (self.root / files[kind]).write_bytes(encoded[kind])
            else:
                near, far = self.header["camera"]["near"], self.header["camera"]["far"]
                save_mask_png(self.root / files["edge"], triplet.edge.mask)
                save_mask_png(self.root / files["face"], triplet.face)
                save_depth_png(self.root / files["depth"], triplet.depth, near, far)
        elif record.is_valid:
            raise DataIntegrityError(f"valid sample {record.id} has no images")
        self._rows.append((record, files))

    def finalize(self) -> Manifest:
        self._rows.sort(key=lambda rf: rf[0].id)
        path = self.root / MANIFEST_NAME
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(self.header, sort_keys=True) + "\n")
            for rec, files in self._rows:
                fh.write(json.dumps(_record_to_json(rec, files), sort_keys=True) + "\n")
        return read_manifest(path)


def write_dataset(records, triplets, out_dir, header: dict) -> Manifest:
    """Persist aligned records and triplets (triplets: id -> LeanTriplet,
    missing/None for invalid records) and return the parsed manifest."""
    writer = DatasetWriter(out_dir, header)
    for rec in records:
        writer.add(rec, triplets.get(rec.id) if hasattr(triplets, "get") else None)
    return writer.finalize()


def read_manifest(path, check_files: bool = True) -> Manifest:
    """Parse and structurally validate a manifest; optionally verify that
    every referenced image file exists."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataIntegrityError(f"{path}: empty manifest")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataIntegrityError(f"{path}:1: bad header ({exc})")
    if header.get("kind") != MANIFEST_KIND:
        raise DataIntegrityError(f"{path}: not a manifest (kind={header.get('kind')!r})")
    if header.get("schema_version") != SCHEMA_VERSION:
        raise DataIntegrityError(
            f"{path}: unsupported schema version {header.get('schema_version')!r}"
        )
    for key in ("grid", "camera", "scene", "seeds"):
        if key not in header:
            raise DataIntegrityError(f"{path}: header lacks {key!r}")

    records, files = [], {}
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataIntegrityError(f"{path}:{line_no}: bad record ({exc})")
        rec, f = _record_from_json(obj, line_no, path)
        if rec.id in files:
            raise DataIntegrityError(f"{path}:{line_no}: duplicate id {rec.id}")
        records.append(rec)
        files[rec.id] = f

    manifest = Manifest(header=header, records=records, files=files, root=path.parent)
    if check_files:
        for rec in records:
            for kind, rel in (files[rec.id] or {}).items():
                full = path.parent / rel
                if not full.exists():
                    raise DataIntegrityError(
                        f"{path}: sample {rec.id} references missing file {rel}"
                    )
    return manifest


def write_manifest_copy(manifest: Manifest, records, out_path, header_update=None):
    """Write a sibling manifest with replaced records (used for shuffles)."""
    header = dict(manifest.header)
    if header_update:
        header.update(header_update)
    out_path = Path(out_path)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in sorted(records, key=lambda r: r.id):
            fh.write(json.dumps(_record_to_json(rec, manifest.files.get(rec.id)), sort_keys=True) + "\n")
    return read_manifest(out_path, check_files=False)


@dataclass
class PredictionSet:
    """Predicted 6-number labels for the samples of one manifest split."""

    manifest_name: str
    split: str
    labels: dict  # id -> PoseLabel

    def __len__(self):
        return len(self.labels)


def write_predictions(preds: PredictionSet, path):
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "kind": PREDICTIONS_KIND,
            "manifest": preds.manifest_name,
            "schema_version": SCHEMA_VERSION,
            "split": preds.split,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for sid in sorted(preds.labels):
            row = {"id": sid, "label": list(preds.labels[sid].as_tuple())}
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_predictions(path) -> PredictionSet:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataIntegrityError(f"{path}: empty prediction file")
    header = json.loads(lines[0])
    if header.get("kind") != PREDICTIONS_KIND:
        raise DataIntegrityError(f"{path}: not a prediction set (kind={header.get('kind')!r})")
    labels = {}
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            sid = int(obj["id"])
            label = PoseLabel.from_tuple(obj["label"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataIntegrityError(f"{path}:{line_no}: malformed prediction ({exc})")
        if sid in labels:
            raise DataIntegrityError(f"{path}:{line_no}: duplicate prediction for id {sid}")
        labels[sid] = label
    return PredictionSet(
        manifest_name=header.get("manifest", ""),
        split=header.get("split", ""),
        labels=labels,
    )


def stack_channels(triplet: LeanTriplet, combo: str, near: float = None,
                   far: float = None) -> np.ndarray:
    """Stack the requested lean images channel-wise, edge/face/depth order.

    Returns (H, W, C) float32; masks as 0/1, depth rescaled to [0, 1] by
    (d - near) / (far - near).
    """
    if combo not in COMBOS:
        raise DataIntegrityError(f"unknown channel combo {combo!r}; expected one of {COMBOS}")
    channels = []
    if "E" in combo:
        channels.append(triplet.edge.mask.astype(np.float32))
    if "F" in combo:
        channels.append(triplet.face.astype(np.float32))
    if "D" in combo:
        if near is None or far is None:
            raise DataIntegrityError("depth stacking needs near/far")
        channels.append(((triplet.depth - near) / (far - near)).astype(np.float32))
    return np.stack(channels, axis=-1)
