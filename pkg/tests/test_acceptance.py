"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. The throughput target is stated for an 8-core desktop; on machines
with fewer cores it is prorated per core (the per-core requirement is
unchanged).
"""

import math
import os
import time
from multiprocessing import Pool

import numpy as np
import pytest

from helpers import (
    edge_grazing_mask,
    empty_scene,
    make_box_scene,
    random_street_poses,
    raycast_image,
)
from test_cli import MICRO_CONFIG, tree_digest, write_config
from test_evaluation import build_manifest, random_label, rec

from leanloc import dataset as ds
from leanloc.cli import cmd_generate, load_config
from leanloc.dataset import PredictionSet
from leanloc.evaluation import (
    interpolation_report,
    l2_report,
    manhattan_cell_distance,
    matching_report,
    rank_of_truth,
)
from leanloc.pose import AOI, Pose
from leanloc.raster import CameraIntrinsics, render_depth, render_triplet
from leanloc.sampler import (
    GridIndex,
    GridSpec,
    INSIDE_BUILDING,
    NO_SKYLINE,
    SPLIT_TEST,
    SPLIT_TRAIN,
    TOO_FEW_EDGES,
    VALID,
    check_validity,
    enumerate_grid,
    midpoint_grid,
)
from leanloc.scene import SynthCityConfig, synth_city

SEED7 = SynthCityConfig(extent_x=200, extent_y=200, block=40, street=10,
                        height_min=8, height_max=24, jitter=0.3, seed=7)


def _verdict(name, ok):
    print(f"\nACCEPTANCE {'PASS' if ok else 'FAIL'}: {name}")
    assert ok, name


def test_grid_arithmetic():
    spec = GridSpec(aoi=AOI(0, 0, 400, 400), delta=20)
    n_train = sum(1 for _ in enumerate_grid(spec))
    n_test = sum(1 for _ in midpoint_grid(spec))
    ok = (
        n_train == 21 * 21 * 72 * 6 == 190_512
        and n_test == 20 * 20 * 72 * 5 == 144_000
        and spec.grid_size() == n_train
        and spec.midpoint_size() == n_test
    )
    _verdict("grid arithmetic (190,512 train / 144,000 midpoint poses)", ok)


def test_renderer_matches_ray_cast_oracle():
    scene = synth_city(SEED7)
    cam = CameraIntrinsics()
    rng = np.random.default_rng(2024)
    poses = random_street_poses(scene, rng, 100)
    t0 = time.time()
    agree = considered = 0
    for pose in poses:
        d = render_depth(scene, pose, cam)
        rc = raycast_image(scene, pose, cam)
        graze = edge_grazing_mask(scene, pose, cam)
        ok = np.abs(d - rc) <= 1e-3 * rc
        considered += (~graze).sum()
        agree += (ok & ~graze).sum()
    elapsed = time.time() - t0
    frac = agree / considered
    print(f"\n  oracle agreement {frac:.6f} over {considered} pixels, {elapsed:.1f}s")
    _verdict(
        f"renderer vs ray-cast oracle (agreement {frac:.6f} >= 0.999, "
        f"{elapsed:.0f}s < 300s)",
        frac >= 0.999 and elapsed < 300.0,
    )


def validity_cases():
    """12 hand-constructed (scene, pose) cases with hand-assigned outcomes."""
    cam = CameraIntrinsics()
    fx = cam.fx
    box = (0.0, 0.0, 10.0, 10.0, 8.0)
    two_boxes = [box, (20.0, 0.0, 30.0, 10.0, 12.0)]
    # a broad box whose side plane contains the optical axis covers exactly
    # the left image half; short helper boxes on the right supply edges
    big = (5.0, 0.0, 15.0, 20.0, 10.0)
    big_shifted = (5.0, -1.4 * 5.0 / fx, 15.0, 20.0, 10.0)  # covers one more column
    helpers = [(60.0, -12.0, 68.0, -6.0, 4.0), (60.0, -30.0, 68.0, -22.0, 4.0)]
    canyon = [
        (2.0, 4.0, 50.0, 12.0, 40.0),
        (2.0, -12.0, 50.0, -4.0, 40.0),
        (60.0, 2.0, 68.0, 12.0, 25.0),
        (60.0, -12.0, 68.0, -2.0, 25.0),
        (75.0, -12.0, 83.0, 12.0, 25.0),
    ]
    seed7 = synth_city(SEED7)
    fp5_corner = seed7.footprints[5].polygon[0]  # a building corner, boundary = outside
    centroid9 = seed7.footprints[9].polygon.mean(axis=0)
    box7_yaw = math.degrees(math.atan2(5 + 15, 5 - 20)) % 360

    return [
        # (name, scene, pose, expected)
        ("pose at a footprint centroid", make_box_scene([box]),
         Pose(5, 5, 0, 0), INSIDE_BUILDING),
        ("pose inside the second of two buildings", make_box_scene(two_boxes),
         Pose(25, 5, 300, 9), INSIDE_BUILDING),
        ("box corner view with exactly 7 visible edges", make_box_scene([box]),
         Pose(20, -15, box7_yaw, 0), TOO_FEW_EDGES),
        ("empty scene, zero edges", empty_scene(),
         Pose(0, 0, 0, 0), TOO_FEW_EDGES),
        ("two buildings across a street, edge-rich with sky", make_box_scene(two_boxes),
         Pose(15, -25, 90, 0), VALID),
        ("building fills exactly half the top row (sky = 50%)",
         make_box_scene([big] + helpers), Pose(0, 0, 0, 0), VALID),
        ("building covers one extra column (sky = 79/160)",
         make_box_scene([big_shifted] + helpers), Pose(0, 0, 0, 0), NO_SKYLINE),
        ("street canyon, many edges but no skyline", make_box_scene(canyon),
         Pose(0, 0, 0, 0), NO_SKYLINE),
        ("open intersection view in the synthetic city", seed7,
         Pose(45, 45, 0, 6), VALID),
        ("pose on a footprint corner (boundary counts as outside)", seed7,
         Pose(fp5_corner[0], fp5_corner[1], 225, 6), TOO_FEW_EDGES),
        ("pose at a synthetic-city building centroid", seed7,
         Pose(centroid9[0], centroid9[1], 0, 0), INSIDE_BUILDING),
        ("camera point-blank in front of a wall", make_box_scene([(5, -10, 15, 10, 10)]),
         Pose(4, 0, 0, 0), TOO_FEW_EDGES),
    ]


def test_validity_rules_fixture_suite():
    cam = CameraIntrinsics()
    failures = []
    for name, scene, pose, expected in validity_cases():
        triplet = render_triplet(scene, pose, cam)
        got = check_validity(scene, pose, triplet)
        if got != expected:
            failures.append(f"{name}: expected {expected}, got {got}")
        if "7 visible edges" in name and triplet.edge.visible_edge_count != 7:
            failures.append(f"{name}: edge count {triplet.edge.visible_edge_count} != 7")
        if "50%" in name:
            sky = int((triplet.face[0] == 0).sum())
            if sky != 80:
                failures.append(f"{name}: top-row sky {sky} != 80")
        if "79/160" in name:
            sky = int((triplet.face[0] == 0).sum())
            if sky != 79:
                failures.append(f"{name}: top-row sky {sky} != 79")
    for f in failures:
        print(f"  {f}")
    _verdict("validity rules on 12 hand-assigned cases", not failures)


def test_metric_oracles_brute_force():
    rng = np.random.default_rng(4096)
    spec = GridSpec(aoi=AOI(0, 0, 200, 200), delta=20, yaw_step=45,
                    pitch_max=15, pitch_step=5)

    def oracle_rank(pred, truth_id, cands):
        def dist(a, b):
            dyaw = abs(a.yaw - b.yaw) % 360.0
            dyaw = min(dyaw, 360.0 - dyaw)
            return math.sqrt(
                ((a.x - b.x) / spec.delta) ** 2 + ((a.y - b.y) / spec.delta) ** 2
                + (dyaw / spec.yaw_step) ** 2
                + ((a.pitch - b.pitch) / spec.pitch_step) ** 2
            )
        order = sorted(cands, key=lambda c: (dist(pred, c[1]), c[0]))
        return 1 + [cid for cid, _ in order].index(truth_id)

    def oracle_manhattan(a, b, dims):
        d = abs(a.i - b.i) + abs(a.j - b.j)
        if dims == "4d":
            dk = min(abs(a.k - (b.k + m * spec.n_yaw)) for m in (-1, 0, 1))
            d += dk + abs(a.l - b.l)
        return d

    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(2, 100))
        cands = [
            (cid, Pose(rng.uniform(0, 200), rng.uniform(0, 200),
                       rng.uniform(0, 360), rng.uniform(0, 15)))
            for cid in range(n)
        ]
        pred = Pose(rng.uniform(0, 200), rng.uniform(0, 200),
                    rng.uniform(0, 360), rng.uniform(0, 15))
        truth_id = int(rng.integers(0, n))
        if rank_of_truth(pred, truth_id, cands, spec) != oracle_rank(pred, truth_id, cands):
            mismatches += 1
        a = GridIndex(*(int(v) for v in rng.integers(0, (10, 10, 8, 3))))
        b = GridIndex(*(int(v) for v in rng.integers(0, (10, 10, 8, 3))))
        for dims in ("2d", "4d"):
            if manhattan_cell_distance(a, b, spec, dims) != oracle_manhattan(a, b, dims):
                mismatches += 1
    # explicit yaw-wrap rank case: 358 vs 2 degrees are adjacent
    cands = [(0, Pose(0, 0, 2, 0)), (1, Pose(0, 0, 180, 0))]
    wrap_ok = rank_of_truth(Pose(0, 0, 358, 0), 0, cands, spec) == 1
    _verdict("metric oracles vs exhaustive brute force (1000 instances)",
             mismatches == 0 and wrap_ok)


def test_report_identities_and_monotonicity():
    spec = GridSpec(aoi=AOI(0, 0, 80, 80), delta=20, yaw_step=90,
                    pitch_max=15, pitch_step=15)
    train = [rec(spec, i, pose, idx) for i, (idx, pose) in enumerate(enumerate_grid(spec))]
    test = [
        rec(spec, len(train) + i, pose, idx, split=SPLIT_TEST)
        for i, (idx, pose) in enumerate(midpoint_grid(spec))
    ]
    manifest = build_manifest(spec, train + test)

    perfect_m = PredictionSet("fixture", SPLIT_TRAIN, {r.id: r.label for r in train})
    report = matching_report(perfect_m, manifest)
    perfect_i = PredictionSet("fixture", SPLIT_TEST, {r.id: r.label for r in test})
    ireport = interpolation_report(perfect_i, manifest)
    l2 = l2_report(perfect_i, manifest)
    identities = (
        report.nn1 == 1.0 and report.nn3 == 1.0
        and all(v == 1.0 for v in ireport.d_fractions.values())
        and l2["position_mean"] < 1e-9 and l2["orientation_mean"] < 1e-4
    )

    rng = np.random.default_rng(555)
    mono = True
    for _ in range(100):
        pm = PredictionSet("fixture", SPLIT_TRAIN, {r.id: random_label(rng) for r in train})
        rm = matching_report(pm, manifest)
        pi = PredictionSet("fixture", SPLIT_TEST, {r.id: random_label(rng) for r in test})
        ri = interpolation_report(pi, manifest).d_fractions
        mono &= rm.nn3 >= rm.nn1
        mono &= ri["2d_d3"] >= ri["2d_d1"] and ri["4d_d3"] >= ri["4d_d1"]
        mono &= ri["4d_d1"] <= ri["2d_d1"]
    _verdict("report identities (perfect = 1.0 / zero) and monotonicity "
             "(100 random prediction sets)", identities and mono)


def test_generation_determinism_across_parallelism(tmp_path):
    (tmp_path / "a_dir").mkdir(exist_ok=True)
    (tmp_path / "b_dir").mkdir(exist_ok=True)
    ca = load_config(write_config(tmp_path / "a_dir", out_name="out_a"))
    cb = load_config(write_config(tmp_path / "b_dir", out_name="out_b"))
    cmd_generate(ca, workers=1)
    cmd_generate(cb, workers=2)
    da, db = tree_digest(ca.out_dir), tree_digest(cb.out_dir)
    _verdict("byte-identical datasets across reruns and parallelism degrees", da == db)


def _throughput_task(args):
    return render_triplet(_THROUGHPUT["scene"], args, _THROUGHPUT["cam"]).edge.visible_edge_count


_THROUGHPUT = {}


def _init_throughput(scene, cam):
    _THROUGHPUT["scene"] = scene
    _THROUGHPUT["cam"] = cam


def test_render_throughput():
    """Engineering target: 200 triplets/s on 8 cores = 25/s per core."""
    scene = synth_city(SEED7)
    cam = CameraIntrinsics()
    rng = np.random.default_rng(99)
    workers = min(8, os.cpu_count() or 1)
    poses = random_street_poses(scene, rng, 40 * workers)
    # warm up in-process (edge table, numpy caches)
    render_triplet(scene, poses[0], cam)
    if workers == 1:
        _init_throughput(scene, cam)
        t0 = time.time()
        for pose in poses:
            _throughput_task(pose)
        elapsed = time.time() - t0
    else:
        with Pool(workers, initializer=_init_throughput, initargs=(scene, cam)) as pool:
            pool.map(_throughput_task, poses[:workers])  # warm worker caches
            t0 = time.time()
            pool.map(_throughput_task, poses)
            elapsed = time.time() - t0
    rate = len(poses) / elapsed
    needed = 200.0 * workers / 8.0
    print(f"\n  {rate:.0f} triplets/s with {workers} workers (need {needed:.0f})")
    _verdict(
        f"render throughput {rate:.0f}/s >= {needed:.0f}/s on {workers} cores "
        f"(200/s at 8 cores)",
        rate >= needed,
    )
