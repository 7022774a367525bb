"""Training loop: minimize the position + orientation L2 loss, keep the
best-validation weights for interpolation runs, save an opaque checkpoint
named by the config hash."""

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch

from .data import load_index, load_tensors
from .model import build_model, pose_loss

TRAIN_MATCHING = "matching"           # overfit the training grid, no early stop
TRAIN_INTERPOLATION = "interpolation"  # keep the best validation-loss weights


@dataclass
class TrainConfig:
    manifest: str
    combo: str = "EF"
    preset: str = "tiny"
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    lr_schedule: str = "constant"  # constant | cosine
    seed: int = 0
    mode: str = TRAIN_MATCHING
    init_checkpoint: str = None
    out_dir: str = "runs"
    resize: tuple = None  # (width, height) downsampling before the network

    def __post_init__(self):
        if self.mode not in (TRAIN_MATCHING, TRAIN_INTERPOLATION):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")
        if self.resize is not None:
            self.resize = tuple(int(v) for v in self.resize)


def config_hash(config: TrainConfig) -> str:
    payload = asdict(config)
    payload["manifest"] = str(Path(config.manifest).resolve())
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class TrainResult:
    checkpoint: Path
    curves: list = field(default_factory=list)

    @property
    def first_epoch_val_loss(self):
        for row in self.curves:
            if row.get("val_loss") is not None:
                return row["val_loss"]
        return None


def _epoch_loss(model, x, y, batch_size):
    model.eval()
    total, n = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(x), batch_size):
            xb, yb = x[i : i + batch_size], y[i : i + batch_size]
            total += pose_loss(model(xb), yb).item() * len(xb)
            n += len(xb)
    return total / max(n, 1)


def train(config: TrainConfig) -> TrainResult:
    index = load_index(config.manifest)
    train_recs = index.select("train")
    if not train_recs:
        raise ValueError(f"{config.manifest}: training split is empty")
    val_recs = index.select("validation")

    x, y, _ = load_tensors(index, train_recs, config.combo, config.resize)
    xv = yv = None
    if val_recs:
        xv, yv, _ = load_tensors(index, val_recs, config.combo, config.resize)

    torch.manual_seed(config.seed)
    model = build_model(config.preset, x.shape[1])
    if config.init_checkpoint:
        prior = torch.load(config.init_checkpoint, map_location="cpu", weights_only=False)
        model.load_state_dict(prior["state_dict"])

    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    gen = torch.Generator().manual_seed(config.seed)

    curves = []
    best_val = math.inf
    best_state = None
    for epoch in range(config.epochs):
        if config.lr_schedule == "cosine":
            scale = 0.5 * (1 + math.cos(math.pi * epoch / max(config.epochs, 1)))
            for group in opt.param_groups:
                group["lr"] = config.lr * scale
        model.train()
        perm = torch.randperm(len(x), generator=gen)
        running, seen = 0.0, 0
        for i in range(0, len(x), config.batch_size):
            idx = perm[i : i + config.batch_size]
            xb, yb = x[idx], y[idx]
            opt.zero_grad()
            loss = pose_loss(model(xb), yb)
            loss.backward()
            opt.step()
            running += loss.item() * len(xb)
            seen += len(xb)
        row = {"epoch": epoch, "train_loss": running / seen}
        if xv is not None and len(xv):
            row["val_loss"] = _epoch_loss(model, xv, yv, config.batch_size)
            if config.mode == TRAIN_INTERPOLATION and row["val_loss"] < best_val:
                best_val = row["val_loss"]
                best_state = copy.deepcopy(model.state_dict())
        curves.append(row)

    if config.mode == TRAIN_INTERPOLATION and best_state is not None:
        model.load_state_dict(best_state)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / f"ckpt_{config_hash(config)}.pt"
    torch.save(
        {
            "state_dict": model.state_dict(),
            "meta": {
                "preset": config.preset,
                "in_channels": int(x.shape[1]),
                "combo": config.combo,
                "resize": list(config.resize) if config.resize else None,
                "manifest_name": index.name,
                "mode": config.mode,
                "seed": config.seed,
                "optimizer": "adam",
                "lr": config.lr,
                "lr_schedule": config.lr_schedule,
                "epochs": config.epochs,
                "config_hash": config_hash(config),
            },
            "curves": curves,
        },
        ckpt_path,
    )
    (out_dir / f"curves_{config_hash(config)}.json").write_text(
        json.dumps(curves, indent=2) + "\n"
    )
    return TrainResult(checkpoint=ckpt_path, curves=curves)
