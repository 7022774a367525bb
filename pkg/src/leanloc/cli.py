"""End-to-end pipeline orchestration from flat INI config files.

Subcommands: synth-city, generate, shuffle, evaluate, heatmap.
Exit codes: 0 success, 1 usage/configuration, 2 data integrity, 3 I/O.
"""

import argparse
import configparser
import io
import os
import sys
from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path

from . import dataset as ds
from .errors import ConfigurationError, DataIntegrityError, LeanlocError
from .evaluation import (
    TASK_INTERPOLATION,
    TASK_MATCHING,
    heatmap,
    heatmap_to_csv,
    heatmap_to_png,
    interpolation_report,
    l2_report,
    matching_report,
    write_report,
)
from .pose import AOI
from .raster import (
    CREASE_ANGLE_DEG,
    DEPTH_BIAS_ABS,
    DEPTH_BIAS_REL,
    EDGE_MIN_PIXELS,
    CameraIntrinsics,
    render_triplet,
)
from .sampler import (
    GridSpec,
    NO_SKYLINE,
    SPLIT_TEST,
    SPLIT_TRAIN,
    SPLIT_VALIDATION,
    TOO_FEW_EDGES,
    VALID,
    INSIDE_BUILDING,
    MIN_EDGE_COUNT,
    SampleRecord,
    enumerate_grid,
    midpoint_grid,
    pose_to_label,
    shuffle_labels,
    split_validation,
)
from .scene import SceneModel, SynthCityConfig, is_inside_building, load_mesh, synth_city, write_mesh


@dataclass
class ExperimentConfig:
    """One experiment = scene source + grid + camera + output; the unit of
    reproducibility, mirrored into the manifest header."""

    scene_type: str                  # "synth" | "mesh"
    synth: SynthCityConfig
    mesh_path: str
    grid: GridSpec
    camera: CameraIntrinsics
    combo: str
    out_dir: Path
    name: str
    split_fraction: float = 0.1
    split_seed: int = 0

    def load_scene(self) -> SceneModel:
        if self.scene_type == "mesh":
            return load_mesh(self.mesh_path)
        return synth_city(self.synth)


def _floats(s, n, what):
    parts = s.replace(",", " ").split()
    if len(parts) != n:
        raise ConfigurationError(f"{what}: expected {n} numbers, got {s!r}")
    return [float(p) for p in parts]


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read(path)

    try:
        scene_sec = cp["scene"]
    except KeyError:
        raise ConfigurationError(f"{path}: missing [scene] section")
    scene_type = scene_sec.get("type", "synth").strip()
    synth = None
    mesh_path = None
    if scene_type == "synth":
        ex, ey = _floats(scene_sec.get("extent", "200 200"), 2, "scene.extent")
        hmin, hmax = _floats(scene_sec.get("height", "8 24"), 2, "scene.height")
        synth = SynthCityConfig(
            extent_x=ex,
            extent_y=ey,
            block=scene_sec.getfloat("block", 40.0),
            street=scene_sec.getfloat("street", 10.0),
            height_min=hmin,
            height_max=hmax,
            jitter=scene_sec.getfloat("jitter", 0.3),
            seed=scene_sec.getint("seed", 0),
        )
        default_aoi = (0.0, 0.0, ex, ey)
    elif scene_type == "mesh":
        mesh_path = scene_sec.get("path")
        if not mesh_path:
            raise ConfigurationError(f"{path}: scene.type=mesh needs scene.path")
        if not Path(mesh_path).is_absolute():
            mesh_path = str((path.parent / mesh_path).resolve())
        default_aoi = None
    else:
        raise ConfigurationError(f"{path}: unknown scene.type {scene_type!r}")

    grid_sec = cp["grid"] if cp.has_section("grid") else {}
    aoi_str = grid_sec.get("aoi") if grid_sec else None
    if aoi_str:
        x0, y0, w, h = _floats(aoi_str, 4, "grid.aoi")
        aoi = AOI(x0, y0, w, h)
    elif default_aoi:
        aoi = AOI(*default_aoi)
    else:
        raise ConfigurationError(f"{path}: grid.aoi is required for mesh scenes")
    pitch = _floats(grid_sec.get("pitch", "0 15 3") if grid_sec else "0 15 3", 3, "grid.pitch")
    grid = GridSpec(
        aoi=aoi,
        delta=float(grid_sec.get("delta", 20.0)) if grid_sec else 20.0,
        yaw_step=float(grid_sec.get("yaw_step", 5.0)) if grid_sec else 5.0,
        pitch_min=pitch[0],
        pitch_max=pitch[1],
        pitch_step=pitch[2],
        z=float(grid_sec.get("height", 1.7)) if grid_sec else 1.7,
    )

    cam_sec = cp["camera"] if cp.has_section("camera") else {}
    if cam_sec and cam_sec.get("size"):
        cw, ch = _floats(cam_sec.get("size"), 2, "camera.size")
    else:
        cw, ch = 160, 120
    camera = CameraIntrinsics(
        width=int(cw),
        height=int(ch),
        hfov_deg=float(cam_sec.get("hfov", 60.0)) if cam_sec else 60.0,
        near=float(cam_sec.get("near", 0.1)) if cam_sec else 0.1,
        far=float(cam_sec.get("far", 2000.0)) if cam_sec else 2000.0,
    )

    out_sec = cp["output"] if cp.has_section("output") else {}
    out_dir = Path(out_sec.get("dir", "out")) if out_sec else Path("out")
    if not out_dir.is_absolute():
        out_dir = path.parent / out_dir
    combo = (out_sec.get("combo", "EFD") if out_sec else "EFD").strip().upper()
    if combo not in ds.COMBOS:
        raise ConfigurationError(f"{path}: output.combo must be one of {ds.COMBOS}, got {combo!r}")
    name = (out_sec.get("name", "") if out_sec else "") or out_dir.name

    split_sec = cp["split"] if cp.has_section("split") else {}
    return ExperimentConfig(
        scene_type=scene_type,
        synth=synth,
        mesh_path=mesh_path,
        grid=grid,
        camera=camera,
        combo=combo,
        out_dir=out_dir,
        name=name,
        split_fraction=float(split_sec.get("fraction", 0.1)) if split_sec else 0.1,
        split_seed=int(split_sec.get("seed", 0)) if split_sec else 0,
    )


def build_header(config: ExperimentConfig, shuffled=False, shuffle_seed=None) -> dict:
    scene = (
        {"type": "mesh", "path": str(config.mesh_path)}
        if config.scene_type == "mesh"
        else {
            "type": "synth",
            "extent": [config.synth.extent_x, config.synth.extent_y],
            "block": config.synth.block,
            "street": config.synth.street,
            "height": [config.synth.height_min, config.synth.height_max],
            "jitter": config.synth.jitter,
            "seed": config.synth.seed,
        }
    )
    return {
        "kind": ds.MANIFEST_KIND,
        "schema_version": ds.SCHEMA_VERSION,
        "name": config.name,
        "units": "1 unit = 1 meter",
        "scene": scene,
        "grid": ds.grid_spec_to_json(config.grid),
        "camera": {
            "width": config.camera.width,
            "height": config.camera.height,
            "hfov_deg": config.camera.hfov_deg,
            "near": config.camera.near,
            "far": config.camera.far,
        },
        "tolerances": {
            "crease_angle_deg": CREASE_ANGLE_DEG,
            "depth_bias_abs": DEPTH_BIAS_ABS,
            "depth_bias_rel": DEPTH_BIAS_REL,
            "edge_min_pixels": EDGE_MIN_PIXELS,
            "min_edge_count": MIN_EDGE_COUNT,
        },
        "combo": config.combo,
        "seeds": {"split": config.split_seed, "split_fraction": config.split_fraction},
        "shuffled": shuffled,
        "shuffle_seed": shuffle_seed,
    }


# -- parallel render workers --------------------------------------------------

_WORKER = {}


def _init_worker(scene, cam):
    _WORKER["scene"] = scene
    _WORKER["cam"] = cam


def _encode_triplet(triplet, cam) -> dict:
    out = {}
    for kind, save in (
        ("edge", lambda b: ds.save_mask_png(b, triplet.edge.mask)),
        ("face", lambda b: ds.save_mask_png(b, triplet.face)),
        ("depth", lambda b: ds.save_depth_png(b, triplet.depth, cam.near, cam.far)),
    ):
        buf = io.BytesIO()
        save(buf)
        out[kind] = buf.getvalue()
    return out


def _render_task(task):
    """Render one pose and apply the post-position validity rules.

    The inside-building rule is checked by the dispatcher, so only the edge
    and skyline rules remain here.
    """
    sid, pose = task
    scene, cam = _WORKER["scene"], _WORKER["cam"]
    triplet = render_triplet(scene, pose, cam)
    if triplet.edge.visible_edge_count < MIN_EDGE_COUNT:
        return sid, TOO_FEW_EDGES, None
    top = triplet.face[0]
    if 2 * int((top == 0).sum()) < len(top):
        return sid, NO_SKYLINE, None
    return sid, VALID, _encode_triplet(triplet, cam)


def cmd_generate(config: ExperimentConfig, workers: int = 0) -> dict:
    """Run the full generation pipeline; returns the summary dict."""
    scene = config.load_scene()
    spec = config.grid
    cam = config.camera

    samples = []  # (sid, index, pose, split)
    for idx, pose in enumerate_grid(spec):
        samples.append((len(samples), idx, pose, SPLIT_TRAIN))
    n_train = len(samples)
    for idx, pose in midpoint_grid(spec):
        samples.append((len(samples), idx, pose, SPLIT_TEST))

    inside = [is_inside_building(scene, (p.x, p.y)) for _, _, p, _ in samples]
    tasks = [(sid, pose) for (sid, _, pose, _), ins in zip(samples, inside) if not ins]

    workers = workers or os.cpu_count() or 1
    results = {}
    if workers == 1 or len(tasks) < 2:
        _init_worker(scene, cam)
        for task in tasks:
            sid, validity, encoded = _render_task(task)
            results[sid] = (validity, encoded)
        _WORKER.clear()
    else:
        chunk = max(1, len(tasks) // (workers * 8))
        with Pool(workers, initializer=_init_worker, initargs=(scene, cam)) as pool:
            for sid, validity, encoded in pool.imap(_render_task, tasks, chunksize=chunk):
                results[sid] = (validity, encoded)

    records, encodings = [], {}
    for (sid, idx, pose, split), ins in zip(samples, inside):
        validity, encoded = (INSIDE_BUILDING, None) if ins else results[sid]
        records.append(
            SampleRecord(
                id=sid,
                index=idx,
                pose=pose,
                label=pose_to_label(pose, spec.aoi),
                validity=validity,
                split=split,
            )
        )
        if encoded is not None:
            encodings[sid] = encoded

    train_records = records[:n_train]
    valid_train = [r for r in train_records if r.is_valid]
    split_map = {
        r.id: r.split
        for r in split_validation(valid_train, config.split_fraction, config.split_seed)
    }
    for r in train_records:
        if r.id in split_map:
            r.split = split_map[r.id]

    writer = ds.DatasetWriter(config.out_dir, build_header(config))
    for rec in records:
        writer.add(rec, encoded=encodings.get(rec.id))
    manifest = writer.finalize()

    summary = {
        "out_dir": str(config.out_dir),
        "buildings": len(scene.footprints),
        "train_poses": n_train,
        "test_poses": len(samples) - n_train,
        "validity": {},
        "splits": {},
    }
    for split in (SPLIT_TRAIN, SPLIT_VALIDATION, SPLIT_TEST):
        group = [r for r in records if r.split == split]
        summary["splits"][split] = len(group)
        counts = {}
        for r in group:
            counts[r.validity] = counts.get(r.validity, 0) + 1
        summary["validity"][split] = counts
    summary["valid_train"] = len(valid_train)
    summary["valid_test"] = sum(1 for r in records[n_train:] if r.is_valid)
    return summary


def cmd_shuffle(manifest_path, seed: int, out_path=None) -> Path:
    """Write a sibling manifest with labels permuted across the valid
    training-grid records; refuses to shuffle twice."""
    manifest = ds.read_manifest(manifest_path, check_files=False)
    if manifest.shuffled:
        raise DataIntegrityError(
            f"{manifest_path}: manifest is already shuffled (marker present)"
        )
    pool = manifest.select(split={SPLIT_TRAIN, SPLIT_VALIDATION}, valid_only=True)
    shuffled = {r.id: r for r in shuffle_labels(pool, seed)}
    new_records = [shuffled.get(r.id, r) for r in manifest.records]
    out_path = Path(out_path) if out_path else Path(manifest_path).with_suffix(".shuffled.jsonl")
    ds.write_manifest_copy(
        manifest,
        new_records,
        out_path,
        header_update={"shuffled": True, "shuffle_seed": seed},
    )
    return out_path


def cmd_evaluate(manifest_path, predictions_path, task: str, out_path=None,
                 heatmap_prefix=None, heatmap_rule=None) -> dict:
    manifest = ds.read_manifest(manifest_path, check_files=False)
    preds = ds.read_predictions(predictions_path)
    if task == TASK_MATCHING:
        report = matching_report(preds, manifest)
    elif task == TASK_INTERPOLATION:
        report = interpolation_report(preds, manifest)
        report.l2 = l2_report(preds, manifest)
    else:
        raise ConfigurationError(f"unknown task {task!r}")
    out_path = Path(out_path) if out_path else Path(predictions_path).with_suffix(".report.json")
    result = write_report(report, out_path, extra={"split": preds.split})
    if heatmap_prefix:
        rule = heatmap_rule or ("4d_d1" if task == TASK_INTERPOLATION else "rank1")
        grid = heatmap(preds, manifest, rule)
        heatmap_to_png(grid, str(heatmap_prefix) + ".png")
        heatmap_to_csv(grid, str(heatmap_prefix) + ".csv")
    return result


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="leanloc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="render a full dataset from a config file")
    g.add_argument("-c", "--config", required=True)
    g.add_argument("--workers", type=int, default=0, help="render processes (0 = all cores)")

    s = sub.add_parser("synth-city", help="emit the procedural city as a mesh file")
    s.add_argument("-c", "--config", required=True)
    s.add_argument("-o", "--out", required=True)

    sh = sub.add_parser("shuffle", help="permute labels for the decorrelated variant")
    sh.add_argument("manifest")
    sh.add_argument("--seed", type=int, required=True)
    sh.add_argument("-o", "--out", default=None)

    e = sub.add_parser("evaluate", help="score a prediction set against a manifest")
    e.add_argument("manifest")
    e.add_argument("predictions")
    e.add_argument("--task", choices=(TASK_MATCHING, TASK_INTERPOLATION), required=True)
    e.add_argument("-o", "--out", default=None)
    e.add_argument("--heatmap", default=None, metavar="PREFIX",
                   help="also write PREFIX.png / PREFIX.csv")
    e.add_argument("--rule", default=None, choices=("rank1", "rank3", "2d_d1", "2d_d3", "4d_d1", "4d_d3"))

    h = sub.add_parser("heatmap", help="per-position success-rate map")
    h.add_argument("manifest")
    h.add_argument("predictions")
    h.add_argument("-o", "--out", required=True, metavar="PREFIX")
    h.add_argument("--rule", default="4d_d1", choices=("rank1", "rank3", "2d_d1", "2d_d3", "4d_d1", "4d_d3"))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            summary = cmd_generate(load_config(args.config), workers=args.workers)
            print(f"wrote dataset to {summary['out_dir']}")
            print(f"scene: {summary['buildings']} buildings")
            print(f"poses: {summary['train_poses']} grid + {summary['test_poses']} midpoint")
            for split, counts in summary["validity"].items():
                pretty = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
                print(f"{split}: {pretty or 'empty'}")
        elif args.command == "synth-city":
            config = load_config(args.config)
            if config.scene_type != "synth":
                raise ConfigurationError("synth-city needs a config with scene.type=synth")
            scene = synth_city(config.synth)
            write_mesh(scene, args.out)
            print(f"wrote {len(scene.footprints)} buildings, "
                  f"{scene.n_triangles} triangles to {args.out}")
        elif args.command == "shuffle":
            out = cmd_shuffle(args.manifest, args.seed, args.out)
            print(f"wrote shuffled manifest to {out}")
        elif args.command == "evaluate":
            result = cmd_evaluate(args.manifest, args.predictions, args.task,
                                  args.out, args.heatmap, args.rule)
            for key in ("nn", "manhattan", "l2"):
                if key in result:
                    pretty = ", ".join(f"{k}={v:.4g}" for k, v in sorted(result[key].items()))
                    print(f"{key}: {pretty}")
        elif args.command == "heatmap":
            manifest = ds.read_manifest(args.manifest, check_files=False)
            preds = ds.read_predictions(args.predictions)
            grid = heatmap(preds, manifest, args.rule)
            heatmap_to_png(grid, args.out + ".png")
            heatmap_to_csv(grid, args.out + ".csv")
            print(f"wrote {args.out}.png and {args.out}.csv")
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataIntegrityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
