"""leanloc-trainer: CNN pose regression on leanloc lean-image datasets.

Consumes dataset directories written by the generator (manifest.jsonl plus
PNG channels), trains a regression network on the 6-number pose labels, and
writes prediction files the evaluator scores directly.
"""

__version__ = "0.1.0"

from .data import DatasetIndex, load_index, load_tensors
from .model import PRESETS, build_model, pose_loss
from .predict import predict
from .train import TrainConfig, TrainResult, config_hash, train
