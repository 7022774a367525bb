"""Reading leanloc dataset directories.

This package talks to the generator only through its on-disk formats:
a manifest.jsonl (one header line, then one JSON record per sample) next to
edge/ face/ depth/ PNG directories. Masks are 8-bit 0/255; depth is 16-bit,
linear in [near, far], so code/65535 is already the unit-scaled depth
channel the network consumes.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

COMBOS = ("E", "F", "D", "EF", "EFD")
KIND_OF_CHANNEL = {"E": "edge", "F": "face", "D": "depth"}


@dataclass
class Record:
    id: int
    label: np.ndarray       # 6 floats: xn, yn, qw, qx, qy, qz
    split: str
    validity: str
    files: dict             # kind -> relative path, or None


@dataclass
class DatasetIndex:
    root: Path
    name: str
    header: dict
    records: list

    def select(self, splits, valid_only=True):
        wanted = {splits} if isinstance(splits, str) else set(splits)
        return [
            r for r in self.records
            if r.split in wanted and (not valid_only or r.validity == "valid")
        ]


def load_index(manifest_path) -> DatasetIndex:
    manifest_path = Path(manifest_path)
    lines = manifest_path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{manifest_path}: empty manifest")
    header = json.loads(lines[0])
    if header.get("kind") != "leanloc-manifest":
        raise ValueError(f"{manifest_path}: not a leanloc manifest")
    records = []
    for line in lines[1:]:
        if not line.strip():
            continue
        obj = json.loads(line)
        records.append(
            Record(
                id=int(obj["id"]),
                label=np.asarray(obj["label"], dtype=np.float32),
                split=obj["split"],
                validity=obj["validity"],
                files=obj.get("files"),
            )
        )
    return DatasetIndex(
        root=manifest_path.parent,
        name=header.get("name", ""),
        header=header,
        records=records,
    )


def _load_channel(path, kind) -> np.ndarray:
    img = Image.open(path)
    arr = np.asarray(img)
    if kind == "depth":
        return (arr.astype(np.float32) / 65535.0)
    return (arr > 127).astype(np.float32)


def load_tensors(index: DatasetIndex, records, combo: str, resize=None):
    """Eagerly load a split into (inputs, targets, ids) tensors.

    inputs: (N, C, H, W) float32 with channels in E, F, D order;
    targets: (N, 6) float32. Small datasets only; everything stays in RAM.
    """
    if combo not in COMBOS:
        raise ValueError(f"unknown combo {combo!r}; expected one of {COMBOS}")
    kinds = [KIND_OF_CHANNEL[c] for c in combo]
    images, targets, ids = [], [], []
    for rec in records:
        if not rec.files:
            raise ValueError(f"sample {rec.id} has no image files")
        missing = [k for k in kinds if k not in rec.files]
        if missing:
            raise ValueError(f"sample {rec.id} lacks channels {missing} for combo {combo}")
        channels = [_load_channel(index.root / rec.files[k], k) for k in kinds]
        images.append(np.stack(channels, axis=0))
        targets.append(rec.label)
        ids.append(rec.id)
    if not images:
        c = len(kinds)
        return (torch.zeros(0, c, 1, 1), torch.zeros(0, 6), [])
    x = torch.from_numpy(np.stack(images))
    y = torch.from_numpy(np.stack(targets))
    if resize is not None:
        w, h = resize
        x = torch.nn.functional.interpolate(
            x, size=(h, w), mode="bilinear", align_corners=False
        )
    return x, y, ids
