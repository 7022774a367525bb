import subprocess
import sys

import pytest

MICRO_DATASET_CONFIG = """\
[scene]
type = synth
extent = 100 100
block = 30
street = 20
height = 10 20
jitter = 0.2
seed = 3

[grid]
delta = 25
yaw_step = 90
pitch = 0 15 15

[output]
dir = {out}
combo = EFD
name = micro

[split]
fraction = 0.1
seed = 0
"""

AB_CITY_CONFIG = """\
[scene]
type = synth
extent = 120 120
block = 10
street = 10
height = 4 10
jitter = 0.3
seed = {scene_seed}

[grid]
delta = 20
yaw_step = 15
pitch = 0 10 5

[output]
dir = {out}
combo = EF
name = {name}

[split]
fraction = 0.1
seed = 0
"""


def generate_dataset(tmp, config_text, **fmt):
    """Run the generator CLI (the external interface) and return the manifest path."""
    cfg = tmp / "exp.ini"
    cfg.write_text(config_text.format(**fmt))
    subprocess.run(
        [sys.executable, "-m", "leanloc.cli", "generate", "-c", str(cfg), "--workers", "0"],
        check=True,
        capture_output=True,
    )
    return tmp / fmt["out"] / "manifest.jsonl"


@pytest.fixture(scope="session")
def micro_manifest(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("micro")
    return generate_dataset(tmp, MICRO_DATASET_CONFIG, out="data")


@pytest.fixture(scope="session")
def ab_city(tmp_path_factory):
    """The task A/B fixture city plus its label-shuffled twin manifest."""
    tmp = tmp_path_factory.mktemp("ab_city")
    manifest = generate_dataset(tmp, AB_CITY_CONFIG, out="data", scene_seed=7, name="ab_city")
    shuffled = manifest.parent / "manifest.shuffled.jsonl"
    subprocess.run(
        [sys.executable, "-m", "leanloc.cli", "shuffle", str(manifest),
         "--seed", "1", "-o", str(shuffled)],
        check=True,
        capture_output=True,
    )
    return manifest, shuffled


@pytest.fixture(scope="session")
def second_city(tmp_path_factory):
    """A second area with the same layout statistics (for transfer runs)."""
    tmp = tmp_path_factory.mktemp("second_city")
    return generate_dataset(tmp, AB_CITY_CONFIG, out="data", scene_seed=21, name="second_city")
