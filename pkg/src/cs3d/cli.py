"""Command-line entry points: eval, hist, targets, decode, edgehead, msgm, augment.

Exit codes: 0 on success, 1 for usage errors, 2 for unreadable or malformed
data. All outputs are deterministic for fixed inputs, seeds, and thread
counts; the thread count only fans out per-frame work and never reorders
results.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import augment as aug
from .corner_targets import GridConfig, TargetGrid, build_targets, decode_boxes, extract_peaks
from .edgehead import control_group_residuals, edgehead_residuals, standard_residuals
from .geometry import bev_iou
from .io import (
    DataError,
    RunReport,
    eval_report,
    load_frames,
    merge_eval_inputs,
    read_tensors,
    write_frames,
    write_tensors,
)
from .metrics import EvalConfig, Frame, GtObject, evaluate, gcs_histogram, proportion_difference
from .msgm import MsgmParams, msgm_forward


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"config {path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise DataError(f"config {path}: expected a JSON object")
    return obj


def _eval_config(config: dict, alpha: float | None = None) -> EvalConfig:
    values = {
        k: config[k]
        for k in (
            "alpha",
            "recall_points",
            "difficulty_filter",
            "class_filter",
            "cs_abs_via_bev",
        )
        if k in config
    }
    if "thresholds" in config:
        base = EvalConfig().thresholds
        base.update({k: float(v) for k, v in config["thresholds"].items()})
        values["thresholds"] = base
    if alpha is not None:
        values["alpha"] = alpha
    try:
        return EvalConfig(**values)
    except (TypeError, ValueError) as exc:
        raise DataError(f"bad evaluation config: {exc}") from exc


def _grid_config(config: dict) -> GridConfig:
    grid = config.get("grid", {})
    values = {}
    for key in ("x_range", "y_range"):
        if key in grid:
            values[key] = tuple(float(v) for v in grid[key])
    for key in ("cell_size", "tau", "min_overlap"):
        if key in grid:
            values[key] = float(grid[key])
    for key in ("stride",):
        if key in grid:
            values[key] = int(grid[key])
    for key in ("sigma_mode", "dtype"):
        if key in grid:
            values[key] = str(grid[key])
    try:
        return GridConfig(**values)
    except (TypeError, ValueError) as exc:
        raise DataError(f"bad grid config: {exc}") from exc


def _resolve_threads(args: argparse.Namespace) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("CS3D_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise DataError(f"CS3D_THREADS must be an integer, got {env!r}") from exc
        if value < 1:
            raise DataError("CS3D_THREADS must be >= 1")
        return value
    return 1


def run_eval(
    gt_path: str,
    pred_path: str,
    cfg: EvalConfig,
    threads: int = 1,
    out_path: str | None = None,
) -> RunReport:
    """Evaluate predictions against ground truths and emit the AP table."""
    frames, counts = merge_eval_inputs(load_frames(gt_path), load_frames(pred_path))
    try:
        outcome = evaluate(frames, cfg, threads=threads)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    counts.update(
        frames=outcome.num_frames,
        valid_gts=outcome.num_valid_gts,
        preds=outcome.num_preds,
    )
    report = eval_report(outcome.aps, cfg, counts)
    if out_path is not None:
        Path(out_path).write_text(report.eval_csv())
    return report


def run_hist(
    gt_path: str,
    pred_a_path: str,
    pred_b_path: str,
    cfg: EvalConfig,
    interval: tuple[float, float] = (0.0, 2.0),
    bins: int = 20,
    out_path: str | None = None,
) -> RunReport:
    """Compare two models' closer-surfaces gap distributions bin by bin."""
    gt_frames = load_frames(gt_path)
    frames_a, _ = merge_eval_inputs(gt_frames, load_frames(pred_a_path))
    frames_b, _ = merge_eval_inputs(gt_frames, load_frames(pred_b_path))
    try:
        hist_a = gcs_histogram(frames_a, cfg, interval, bins)
        hist_b = gcs_histogram(frames_b, cfg, interval, bins)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    diff = proportion_difference(hist_a.proportions, hist_b.proportions)
    rows = [
        (
            float(hist_a.bin_edges[i]),
            float(hist_a.bin_edges[i + 1]),
            float(hist_a.proportions[i]),
            float(hist_b.proportions[i]),
            float(diff[i]),
        )
        for i in range(bins)
    ]
    counts = {
        "matched_a": hist_a.total_in_interval,
        "matched_b": hist_b.total_in_interval,
        "empty_a": int(hist_a.empty),
        "empty_b": int(hist_b.empty),
    }
    report = RunReport(hist_rows=rows, counts=counts)
    if out_path is not None:
        Path(out_path).write_text(report.hist_csv())
    return report


def _targets_to_tensors(target: TargetGrid) -> dict[str, np.ndarray]:
    return {
        "heatmap": target.heatmap,
        "offset": target.offset,
        "corner_z": target.corner_z,
        "size": target.size,
        "yaw": target.yaw,
        "c2c": target.c2c,
    }


def _tensors_to_targets(tensors: dict[str, np.ndarray], classes: tuple[str, ...]) -> TargetGrid:
    try:
        return TargetGrid(
            heatmap=tensors["heatmap"],
            offset=tensors["offset"],
            corner_z=tensors["corner_z"],
            size=tensors["size"],
            yaw=tensors["yaw"],
            c2c=tensors["c2c"],
            classes=classes,
        )
    except KeyError as exc:
        raise DataError(f"missing tensor {exc.args[0]!r}") from exc


def run_targets(
    frames_path: str, out_dir: str, grid: GridConfig, classes: tuple[str, ...] | None = None
) -> list[str]:
    """Encode each frame's ground truths into a tensor file under out_dir."""
    frames = load_frames(frames_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    for frame in sorted(frames, key=lambda f: f.frame_id):
        target = build_targets(frame.gts, grid, classes)
        meta = {
            "frame": frame.frame_id,
            "classes": list(target.classes),
            "skipped": target.skipped,
            "grid": {
                "x_range": list(grid.x_range),
                "y_range": list(grid.y_range),
                "cell_size": grid.cell_size,
                "stride": grid.stride,
            },
        }
        path = out / f"{frame.frame_id}.cs3d"
        write_tensors(path, _targets_to_tensors(target), meta)
        written.append(str(path))
    return written


def run_decode(
    input_paths: list[str],
    out_path: str,
    grid: GridConfig,
    top_k: int = 100,
    score_thresh: float = 0.1,
) -> tuple[int, int]:
    """Decode tensor files back into prediction frames (JSONL)."""
    frames: list[Frame] = []
    total_rejected = 0
    for path in input_paths:
        tensors, meta = read_tensors(path)
        classes = tuple(meta.get("classes", ["Car"]))
        target = _tensors_to_targets(tensors, classes)
        preds = []
        for ci, cls in enumerate(classes):
            peaks = extract_peaks(target.heatmap[ci], top_k=top_k, score_thresh=score_thresh)
            decoded, rejected = decode_boxes(peaks, target, grid, cls=cls)
            preds.extend(decoded)
            total_rejected += rejected
        frame_id = str(meta.get("frame", Path(path).stem))
        frames.append(Frame(frame_id, [], preds))
    write_frames(out_path, sorted(frames, key=lambda f: f.frame_id))
    return sum(len(f.preds) for f in frames), total_rejected


def run_edgehead(
    gt_path: str,
    anchor_path: str,
    out_path: str,
    mode: str = "edgehead",
    rotation: str = "set",
) -> int:
    """Encode per-anchor refinement residuals as JSONL records.

    Anchors are the prediction entries; each pairs with the ground truth of
    the same class it overlaps most in BEV (zero-overlap anchors are
    skipped). Records are keyed by frame id and anchor index.
    """
    frames, _ = merge_eval_inputs(load_frames(gt_path), load_frames(anchor_path))
    lines: list[str] = []
    for frame in sorted(frames, key=lambda f: f.frame_id):
        for idx, anchor in enumerate(frame.preds):
            best_iou, best_j = 0.0, -1
            for j, gt in enumerate(frame.gts):
                if gt.cls != anchor.cls:
                    continue
                iou = bev_iou(anchor.box, gt.box)
                if iou > best_iou:
                    best_iou, best_j = iou, j
            if best_j < 0:
                continue
            gt_box = frame.gts[best_j].box
            record: dict = {"frame": frame.frame_id, "anchor": idx, "gt": best_j}
            if mode == "edgehead":
                r = edgehead_residuals(anchor.box, gt_box, rotation)
                record.update(dx_cv=r.dx_cv, dy_cv=r.dy_cv, dtheta=r.dtheta)
            elif mode == "standard":
                s = standard_residuals(anchor.box, gt_box)
                record.update(
                    dx=s.dx, dy=s.dy, dz=s.dz, dl=s.dl, dw=s.dw, dh=s.dh, dtheta=s.dtheta
                )
            elif mode == "control":
                dx, dy, dtheta = control_group_residuals(anchor.box, gt_box)
                record.update(dx=dx, dy=dy, dtheta=dtheta)
            else:
                raise DataError(f"unknown residual mode {mode!r}")
            lines.append(json.dumps(record, sort_keys=True))
    Path(out_path).write_text("\n".join(lines) + ("\n" if lines else ""))
    return len(lines)


def run_msgm(input_path: str, params_path: str, out_path: str) -> None:
    """Run the gated multi-scale merge on a stored feature map."""
    tensors, meta = read_tensors(input_path)
    if "features" not in tensors:
        raise DataError(f"{input_path}: missing 'features' tensor")
    param_tensors, _ = read_tensors(params_path)
    try:
        params = MsgmParams.from_tensors(param_tensors)
        out = msgm_forward(tensors["features"], params)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    write_tensors(out_path, {"features": out}, {"source": str(input_path), **meta})


def run_augment(
    frames_path: str,
    out_path: str,
    mode: str,
    factors: tuple[float, float, float] | None = None,
    factor_range: tuple[float, float] = aug.DEFAULT_SCALE_RANGE,
    seed: int | None = None,
    source_stats: aug.SizeStats | None = None,
    target_stats: aug.SizeStats | None = None,
) -> int:
    """Scale (ros) or size-normalize (sn) every ground truth in a frame file.

    ros uses the given factors for every object, or one fresh seeded draw
    per object when factors are omitted. Objects without stored points are
    transformed with an empty point set.
    """
    frames = load_frames(frames_path)
    master = np.random.default_rng(seed)
    transformed = 0
    for frame in frames:
        new_gts: list[GtObject] = []
        for gt in frame.gts:
            points = gt.points if gt.points is not None else np.zeros((0, 3))
            try:
                sample = aug.ObjectSample(gt.box, points)
                if mode == "ros":
                    f = factors
                    if f is None:
                        f = aug.rng_factors(factor_range, int(master.integers(0, 2**63)))
                    sample = aug.ros_scale(sample, f)
                elif mode == "sn":
                    if source_stats is None or target_stats is None:
                        raise DataError("sn mode requires source and target stats")
                    sample = aug.sn_normalize(sample, source_stats, target_stats)
                else:
                    raise DataError(f"unknown augmentation mode {mode!r}")
            except ValueError as exc:
                raise DataError(f"frame {frame.frame_id}: {exc}") from exc
            new_gts.append(
                GtObject(
                    box=sample.box,
                    cls=gt.cls,
                    difficulty=gt.difficulty,
                    points=sample.points if gt.points is not None else None,
                )
            )
            transformed += 1
        frame.gts = new_gts
    write_frames(out_path, frames)
    return transformed


def _parse_stats(path: str) -> aug.SizeStats:
    try:
        obj = json.loads(Path(path).read_text())
        return aug.SizeStats(float(obj["mean_l"]), float(obj["mean_w"]), float(obj["mean_h"]))
    except OSError as exc:
        raise DataError(f"cannot read stats {path}: {exc}") from exc
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"bad stats file {path}: {exc}") from exc


def _parse_triple(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise DataError(f"expected three comma-separated values, got {text!r}")
    return (float(parts[0]), float(parts[1]), float(parts[2]))


def _build_parser() -> _Parser:
    parser = _Parser(prog="cs3d", description=__doc__)
    parser.add_argument("--config", help="JSON config file (eval settings, grid)")
    parser.add_argument("--seed", type=int, help="seed for randomized subcommands")
    parser.add_argument("--threads", type=int, help="worker threads (or env CS3D_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="evaluate predictions and write the AP table")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--alpha", type=float, help="closer-surfaces penalty ratio")

    p = sub.add_parser("hist", help="compare gap histograms of two prediction sets")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred-a", required=True)
    p.add_argument("--pred-b", required=True)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float, default=2.0)
    p.add_argument("--bins", type=int, default=20)

    p = sub.add_parser("targets", help="encode ground truths into corner target grids")
    p.add_argument("--frames", required=True)
    p.add_argument("--outdir", required=True)

    p = sub.add_parser("decode", help="decode target grids back into boxes")
    p.add_argument("--tensors", required=True, nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--top-k", type=int, default=100)
    p.add_argument("--score-thresh", type=float, default=0.1)

    p = sub.add_parser("edgehead", help="emit refinement residuals per anchor")
    p.add_argument("--gt", required=True)
    p.add_argument("--anchors", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("edgehead", "standard", "control"), default="edgehead")
    p.add_argument("--rotation", choices=("set", "add"), default="set")

    p = sub.add_parser("msgm", help="run the gated multi-scale merge")
    p.add_argument("--input", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("augment", help="scale or size-normalize objects")
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("ros", "sn"), required=True)
    p.add_argument("--factors", help="l,w,h scale factors (ros)")
    p.add_argument("--range", dest="factor_range", help="lo,hi for seeded draws (ros)")
    p.add_argument("--source-stats", help="JSON size stats of the source domain (sn)")
    p.add_argument("--target-stats", help="JSON size stats of the target domain (sn)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        threads = _resolve_threads(args)
        if args.command == "eval":
            cfg = _eval_config(config, alpha=args.alpha)
            report = run_eval(args.gt, args.pred, cfg, threads=threads, out_path=args.out)
            sys.stdout.write(report.eval_csv())
        elif args.command == "hist":
            cfg = _eval_config(config)
            report = run_hist(
                args.gt,
                args.pred_a,
                args.pred_b,
                cfg,
                interval=(args.lo, args.hi),
                bins=args.bins,
                out_path=args.out,
            )
            sys.stdout.write(report.hist_csv())
        elif args.command == "targets":
            written = run_targets(args.frames, args.outdir, _grid_config(config))
            print(f"wrote {len(written)} target files to {args.outdir}")
        elif args.command == "decode":
            kept, rejected = run_decode(
                args.tensors,
                args.out,
                _grid_config(config),
                top_k=args.top_k,
                score_thresh=args.score_thresh,
            )
            print(f"decoded {kept} boxes ({rejected} rejected)")
        elif args.command == "edgehead":
            n = run_edgehead(args.gt, args.anchors, args.out, args.mode, args.rotation)
            print(f"wrote {n} residual records")
        elif args.command == "msgm":
            run_msgm(args.input, args.params, args.out)
            print(f"wrote {args.out}")
        elif args.command == "augment":
            factors = _parse_triple(args.factors) if args.factors else None
            factor_range = aug.DEFAULT_SCALE_RANGE
            if args.factor_range:
                parts = args.factor_range.split(",")
                if len(parts) != 2:
                    raise DataError(f"--range expects lo,hi, got {args.factor_range!r}")
                factor_range = (float(parts[0]), float(parts[1]))
            n = run_augment(
                args.frames,
                args.out,
                args.mode,
                factors=factors,
                factor_range=factor_range,
                seed=args.seed,
                source_stats=_parse_stats(args.source_stats) if args.source_stats else None,
                target_stats=_parse_stats(args.target_stats) if args.target_stats else None,
            )
            print(f"augmented {n} objects")
    except DataError as exc:
        print(f"cs3d: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
