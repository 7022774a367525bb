"""Inference: emit a prediction file in the evaluator's documented format,
one raw 6-number label per valid sample of the requested split."""

import json
from pathlib import Path

import torch

from .data import load_index, load_tensors
from .model import build_model

SPLIT_SETS = {
    "train": {"train"},
    "validation": {"validation"},
    "test": {"test"},
    "trainval": {"train", "validation"},
}


def predict(checkpoint_path, manifest_path, split: str, out_path) -> Path:
    if split not in SPLIT_SETS:
        raise ValueError(f"unknown split {split!r}; expected one of {sorted(SPLIT_SETS)}")
    ckpt = torch.load(checkpoint_path, map_location="cpu", weights_only=False)
    meta = ckpt["meta"]
    model = build_model(meta["preset"], meta["in_channels"])
    model.load_state_dict(ckpt["state_dict"])
    model.eval()

    index = load_index(manifest_path)
    records = sorted(index.select(SPLIT_SETS[split]), key=lambda r: r.id)
    resize = tuple(meta["resize"]) if meta.get("resize") else None

    rows = []
    batch = 256
    with torch.no_grad():
        for i in range(0, len(records), batch):
            chunk = records[i : i + batch]
            x, _, ids = load_tensors(index, chunk, meta["combo"], resize)
            out = model(x)
            for sid, label in zip(ids, out.tolist()):
                rows.append({"id": sid, "label": [float(v) for v in label]})

    out_path = Path(out_path)
    with open(out_path, "w", encoding="utf-8") as fh:
        header = {
            "kind": "leanloc-predictions",
            "manifest": index.name,
            "schema_version": 1,
            "split": split,
        }
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return out_path
