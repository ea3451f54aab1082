"""Command-line interface.

Exit codes: 0 on success, 1 on a domain error (one-line diagnostic on
stderr), 2 on a usage error.  All CSV output is headerless; column meanings
are documented per subcommand.  A ``key = value`` config file can preset any
flag listed in CONFIG_KEYS; explicit flags win.
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import io as rio
from . import metrics as rmetrics
from .autodiff import Tensor
from .blocks import save_checkpoint
from .config import load_config, precision, set_precision
from .dam import SpeConfig, init_dam_params, dam_forward, spe_vector
from .errors import RangeDamError
from .gradcheck import DEFAULT_EPS, DEFAULT_TOL, run_suite
from .projection import (
    FieldOfView,
    backproject,
    infer_rings,
    normalize_intensity,
    pixel_angles,
    project_cloud,
)
from .training import TrainConfig, ablation_run, loss_curve_csv, train
from .synthetic import generate

CONFIG_KEYS = {
    "width": int,
    "height": int,
    "lvfov": float,
    "hvfov": float,
    "lhfov": float,
    "hhfov": float,
    "seed": int,
    "precision": str,
    "class_map": str,
    "normalize_intensity": lambda s: s.lower() in ("1", "true", "yes"),
}


def _apply_config(args: argparse.Namespace) -> None:
    """Fill unset flags from --config; values keep CLI precedence."""
    path = getattr(args, "config", None)
    if not path:
        return
    settings = load_config(path)
    for key, value in settings.items():
        if key not in CONFIG_KEYS:
            raise RangeDamError(f"unknown config key {key!r}")
        attr = key
        if getattr(args, attr, None) is None:
            setattr(args, attr, CONFIG_KEYS[key](value))


def _fov_from(args) -> FieldOfView:
    return FieldOfView(lvfov=args.lvfov, hvfov=args.hvfov, lhfov=args.lhfov, hhfov=args.hhfov)


def _project_one(bin_path: Path, out_path: Path, args) -> None:
    cloud = rio.read_point_cloud_bin(bin_path)
    if args.normalize_intensity:
        cloud = normalize_intensity(cloud)
    rings = None
    if args.ring:
        ring_path = Path(args.ring)
        if ring_path.is_dir():
            ring_path = ring_path / (bin_path.stem + ".ring")
        rings = rio.read_rings(ring_path, expected_n=len(cloud))
    img = project_cloud(cloud, args.height, args.width, rings=rings)
    rio.write_range_image(img, out_path)


def _cmd_project(args) -> int:
    src = Path(args.input)
    if src.is_dir():
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        files = sorted(src.glob("*.bin"))
        if not files:
            raise RangeDamError(f"no .bin files in {src}")
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            jobs = [
                pool.submit(_project_one, f, out_dir / (f.stem + ".rimg"), args) for f in files
            ]
            for job in jobs:
                job.result()
        print(f"projected {len(files)} scans to {out_dir}")
    else:
        _project_one(src, Path(args.out), args)
    return 0


def _cmd_backproject(args) -> int:
    img = rio.read_range_image(args.input)
    if img.channels < 4:
        raise RangeDamError(f"{args.input}: need a range channel (C >= 4), got C={img.channels}")
    geom = pixel_angles(_fov_from(args), img.height, img.width)
    rows, cols = np.nonzero(img.valid)
    xyz = backproject(img.data[3, rows, cols], geom.alpha[rows], geom.theta[cols])
    intensity = img.data[4, rows, cols] if img.channels >= 5 else np.zeros(rows.shape[0])
    rio.write_point_cloud_bin(rio.PointCloud(xyz=xyz, intensity=intensity), args.out)
    print(f"wrote {rows.shape[0]} points to {args.out}")
    return 0


def _cmd_rings(args) -> int:
    cloud = rio.read_point_cloud_bin(args.input)
    rings = infer_rings(cloud, args.height)
    rio.write_rings(rings, args.out)
    used = int(rings.max()) + 1 if rings.size else 0
    print(f"inferred {used} rings for {len(cloud)} points")
    return 0


def _cmd_spe(args) -> int:
    z = spe_vector(SpeConfig(channels=args.channels, dim=args.dim))
    lines = "\n".join(f"{pos},{value:.12f}" for pos, value in enumerate(z)) + "\n"
    if args.out:
        Path(args.out).write_text(lines)
    else:
        sys.stdout.write(lines)
    return 0


def _cmd_dam_forward(args) -> int:
    img = rio.read_range_image(args.input)
    rng = np.random.default_rng(args.seed)
    params = init_dam_params(
        img.channels,
        rng,
        hidden=args.hidden,
        use_gap=not args.no_gap,
        use_spe=not args.no_spe,
        dim=args.dim,
    )
    out = dam_forward(Tensor(img.data.astype(np.float64)), params)
    rio.write_range_image(
        rio.RangeImage(data=out.data, valid=img.valid, lut=img.lut), args.out
    )
    print(f"recalibrated {img.channels} channels -> {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    results = run_suite(seeds=args.seeds, eps=args.eps, base_seed=args.seed)
    failed = []
    for name, err in results.items():
        status = "ok" if err < args.tol else "FAIL"
        print(f"{name:28s} max_rel_err={err:.3e} {status}")
        if err >= args.tol:
            failed.append(name)
    if failed:
        print(f"{len(failed)} ops exceeded tol={args.tol}", file=sys.stderr)
        return 1
    return 0


def _labels_for_eval(path: Path, class_map) -> np.ndarray:
    labels = rio.read_labels(path)
    if class_map is not None:
        labels = rio.remap_labels(labels, class_map)
    return labels.semantic


def _cmd_eval(args) -> int:
    class_map = rio.load_class_map(args.class_map) if args.class_map else None
    gt_path, pred_path = Path(args.gt), Path(args.pred)
    cm = rmetrics.ConfusionMatrix(args.classes, ignore_id=args.ignore)
    if gt_path.is_dir() != pred_path.is_dir():
        raise RangeDamError("--gt and --pred must both be files or both be directories")
    if gt_path.is_dir():
        gt_files = sorted(gt_path.glob("*.label"))
        if not gt_files:
            raise RangeDamError(f"no .label files in {gt_path}")

        def score_one(gt_file: Path) -> rmetrics.ConfusionMatrix:
            pred_file = pred_path / gt_file.name
            part = rmetrics.ConfusionMatrix(args.classes, ignore_id=args.ignore)
            part.accumulate(
                _labels_for_eval(gt_file, class_map), _labels_for_eval(pred_file, class_map)
            )
            return part

        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            for part in pool.map(score_one, gt_files):
                cm = rmetrics.merge(cm, part)
    else:
        cm.accumulate(_labels_for_eval(gt_path, class_map), _labels_for_eval(pred_path, class_map))

    per_class = cm.per_class_iou()
    miou = cm.miou()
    csv_lines = [
        f"{k},{per_class[k]:.6f}" for k in range(args.classes) if not np.isnan(per_class[k])
    ]
    csv_lines.append(f"miou,{miou:.6f}")
    if args.csv:
        Path(args.csv).write_text("\n".join(csv_lines) + "\n")
    print(f"{'class':>8} {'IoU':>8}")
    for k in range(args.classes):
        if not np.isnan(per_class[k]):
            print(f"{k:>8d} {per_class[k]:8.4f}")
    print(f"{'mIoU':>8} {miou:8.4f}")
    return 0


def _cmd_featdiv(args) -> int:
    img = rio.read_range_image(args.input)
    print(f"{rmetrics.channel_cosine_distance(img.data.astype(np.float64)):.12f}")
    return 0


def _cmd_train_toy(args) -> int:
    config = TrainConfig(
        use_gap=not args.no_gap,
        use_spe=not args.no_spe,
        steps=args.steps,
        lr=args.lr,
        momentum=args.momentum,
        seed=args.seed,
    )
    scenes = generate(args.seed, args.scenes)
    result = train(config, scenes)
    if args.loss_out:
        Path(args.loss_out).write_text(loss_curve_csv(result.losses))
    if args.ckpt:
        save_checkpoint(args.ckpt, result.model.state_dict())
    print(
        f"trained {config.steps} steps: loss {result.losses[0]:.4f} -> {result.losses[-1]:.4f}"
    )
    return 0


def _cmd_ablate(args) -> int:
    report = ablation_run(seed=args.seed, steps=args.steps, lr=args.lr, momentum=args.momentum)
    if args.out:
        Path(args.out).write_text(report.to_csv())
    print(report.to_table())
    print(f"elapsed {report.elapsed_s:.1f}s")
    return 0


def _cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    n, height, width = args.points, args.height, args.width
    rings = np.sort(rng.integers(0, height, size=n))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    r = rng.uniform(2.0, 80.0, size=n)
    z = rng.uniform(-3.0, 8.0, size=n)
    cloud = rio.PointCloud(
        xyz=np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1).astype(np.float32),
        intensity=rng.uniform(0.0, 1.0, size=n).astype(np.float32),
        ring=rings,
    )
    with precision("fast"):
        best = float("inf")
        for _ in range(args.repeat):
            started = time.perf_counter()
            project_cloud(cloud, height, width)
            best = min(best, time.perf_counter() - started)
    ms = best * 1000.0
    print(f"projected {n} points to {height}x{width} in {ms:.2f} ms (best of {args.repeat})")
    if ms >= 50.0:
        print("warning: projection exceeded the 50 ms single-thread target", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rangedam",
        description="Range-image projection, depth-aware channel recalibration, and evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--precision",
        choices=("verify", "fast"),
        default=None,
        help="float64 with checks (verify) or float32 (fast); default from RANGE_DAM_PRECISION",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="project .bin point clouds to .rimg range images")
    p.add_argument("--in", dest="input", required=True, help="scan .bin file or directory")
    p.add_argument("--out", required=True, help="output .rimg file or directory")
    p.add_argument("--ring", default=None, help="ring sidecar file or directory (default: infer)")
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--normalize-intensity", dest="normalize_intensity", action="store_true", default=None)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--config", default=None, help="key = value config file")
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("backproject", help="reconstruct a point cloud from a range image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lvfov", type=float, default=None)
    p.add_argument("--hvfov", type=float, default=None)
    p.add_argument("--lhfov", type=float, default=None)
    p.add_argument("--hhfov", type=float, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_backproject)

    p = sub.add_parser("rings", help="infer ring indices from firing order, write a sidecar")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_rings)

    p = sub.add_parser("spe", help="emit the positional encoding as CSV rows pos,value")
    p.add_argument("--channels", type=int, required=True)
    p.add_argument("--dim", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=_cmd_spe)

    p = sub.add_parser("dam-forward", help="recalibrate a feature-map container")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--dim", type=int, default=0)
    p.add_argument("--no-gap", action="store_true")
    p.add_argument("--no-spe", action="store_true")
    p.set_defaults(func=_cmd_dam_forward)

    p = sub.add_parser("gradcheck", help="finite-difference check of every tape op")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--seeds", type=int, default=5, help="random instances per op")
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("eval", help="IoU/mIoU of predicted vs ground-truth .label files")
    p.add_argument("--gt", required=True, help=".label file or directory")
    p.add_argument("--pred", required=True, help=".label file or directory")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--ignore", type=int, default=rio.IGNORE_ID)
    p.add_argument("--class-map", dest="class_map", default=None)
    p.add_argument("--csv", default=None, help="also write rows class,iou and miou,value")
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("featdiv", help="channel cosine distance of a feature container")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=_cmd_featdiv)

    p = sub.add_parser("train-toy", help="train the toy segmenter on synthetic scenes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--scenes", type=int, default=4)
    p.add_argument("--no-gap", action="store_true")
    p.add_argument("--no-spe", action="store_true")
    p.add_argument("--loss-out", default=None, help="CSV rows step,loss")
    p.add_argument("--ckpt", default=None, help="write final weights as a checkpoint")
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("ablate", help="4-row pooling/encoding ablation report")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--out", default=None, help="CSV rows use_gap,use_spe,miou,final_loss")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("bench", help="time one scan projection (reporting only)")
    p.add_argument("--points", type=int, default=130_000)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=2048)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_bench)

    return parser


_DEFAULTS = {"width": 2048, "height": 64, "normalize_intensity": False}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        for key, value in _DEFAULTS.items():
            if getattr(args, key, "absent") is None:
                setattr(args, key, value)
        if getattr(args, "precision", None):
            set_precision(args.precision)
        for key in ("lvfov", "hvfov", "lhfov", "hhfov"):
            if getattr(args, key, "absent") is None:
                raise RangeDamError(f"--{key} is required (flag or config file)")
        return args.func(args)
    except RangeDamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
