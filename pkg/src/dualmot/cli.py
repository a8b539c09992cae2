"""Command-line front end.

Subcommands: validate, stats, evaluate, track, gen, gradcheck, pfm-demo.
Tables show ratio metrics as percentages with three decimals; ``--format
json`` emits the raw values losslessly. Exit codes: 0 success, 1 a
semantic failure (bad data, failed check), 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import harness, metrics, store
from .data import (
    FormatError,
    GROUPABLE_PLATFORMS,
    TrajectorySet,
    dataset_stats,
    detections_by_frame,
    parse_annotations,
    serialize_annotations,
)
from .fusion import arraydoc, checks, pfm
from .metrics import SequenceItem, SequenceScores, evaluate, evaluate_pair
from .tracker import TrackerConfig, merge_modal_detections, track_sequence

JOBS_ENV = "DUALMOT_JOBS"


class CliError(Exception):
    """Semantic failure: reported on stderr, exit code 1."""


def _default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise CliError(f"{JOBS_ENV} must be an integer, got {raw!r}")
    if n < 1:
        raise CliError(f"{JOBS_ENV} must be >= 1, got {n}")
    return n


def _parallel_map(fn, keys, jobs: int) -> dict:
    """Apply fn to each key, in parallel when jobs > 1; dict keyed by input
    so output order never depends on scheduling."""
    keys = list(keys)
    if jobs <= 1 or len(keys) <= 1:
        return {k: fn(k) for k in keys}
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return dict(zip(keys, pool.map(fn, keys)))


def _pct(v: float) -> str:
    return f"{100.0 * v:.3f}"


def _table(headers, rows, right=None) -> str:
    """Plain aligned columns; ``right`` marks right-aligned column indexes
    (all numeric columns by convention)."""
    right = set(right if right is not None else range(1, len(headers)))
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    lines = []
    for r in cells:
        parts = [r[i].rjust(widths[i]) if i in right else r[i].ljust(widths[i])
                 for i in range(len(r))]
        lines.append("  ".join(parts).rstrip())
    return "\n".join(lines) + "\n"


def _emit_json(payload) -> None:
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


# ---------------------------------------------------------------------------
# validate

def _cmd_validate(args) -> int:
    names = store.list_sequences(args.dataset)
    if not names:
        raise CliError(f"no sequences found under {args.dataset}")
    reports = _parallel_map(
        lambda n: store.validate_sequence(os.path.join(args.dataset, n)),
        names, args.jobs)
    reports = [reports[n] for n in names]
    n_valid = sum(r.is_valid for r in reports)
    if args.format == "json":
        _emit_json({"n_sequences": len(reports), "n_valid": n_valid,
                    "sequences": [r.to_dict() for r in reports]})
    else:
        for r in reports:
            if r.is_valid and not r.issues:
                print(f"{r.sequence}: ok")
            else:
                status = "ok (with warnings)" if r.is_valid else "INVALID"
                print(f"{r.sequence}: {status}")
                for issue in r.issues:
                    print(f"  [{issue.severity}] {issue.location}: {issue.message}")
        print(f"{n_valid}/{len(reports)} sequences valid")
    return 0 if n_valid == len(reports) else 1


# ---------------------------------------------------------------------------
# stats

_SCALE_LABELS = ("<=11^2", "<=22^2", "<=32^2", "<=64^2", "<=96^2", ">96^2")


def _cmd_stats(args) -> int:
    names = store.list_sequences(args.dataset)
    if not names:
        raise CliError(f"no sequences found under {args.dataset}")

    def load(name):
        seq_dir = os.path.join(args.dataset, name)
        meta = store.load_sequence_meta(seq_dir)
        return meta, store.load_annotations(seq_dir, meta)

    loaded = _parallel_map(load, names, args.jobs)
    stats = dataset_stats(loaded[n] for n in names)
    if args.format == "json":
        _emit_json({
            "n_videos": stats.n_videos, "n_frames": stats.n_frames,
            "n_tracks": stats.n_tracks, "n_boxes": stats.n_boxes,
            "density": stats.density, "avg_length_s": stats.avg_length_s,
            "scale_histogram": list(stats.scale_histogram),
            "class_tracks": list(stats.class_tracks),
            "class_boxes": list(stats.class_boxes),
        })
        return 0
    rows = [
        ("videos", stats.n_videos),
        ("frames", stats.n_frames),
        ("tracks", stats.n_tracks),
        ("boxes", stats.n_boxes),
        ("boxes per frame", f"{stats.density:.3f}"),
        ("avg length (s)", f"{stats.avg_length_s:.2f}"),
        ("class-1 tracks / boxes", f"{stats.class_tracks[0]} / {stats.class_boxes[0]}"),
        ("class-2 tracks / boxes", f"{stats.class_tracks[1]} / {stats.class_boxes[1]}"),
    ]
    rows += [(f"boxes with area {lbl}", n)
             for lbl, n in zip(_SCALE_LABELS, stats.scale_histogram)]
    sys.stdout.write(_table(("statistic", "value"), rows))
    return 0


# ---------------------------------------------------------------------------
# evaluate

_METRIC_COLUMNS = ("HOTA", "DetA", "AssA", "MOTA", "MOTP", "IDF1",
                   "FP", "FN", "IDSW")


def _metric_cells(s: SequenceScores):
    return (_pct(s.hota.hota), _pct(s.hota.deta), _pct(s.hota.assa),
            _pct(s.clear.mota), _pct(s.clear.motp), _pct(s.ident.idf1),
            s.clear.fp, s.clear.fn, s.clear.idsw)


def _scores_dict(s: SequenceScores) -> dict:
    return {
        "hota": s.hota.hota, "deta": s.hota.deta, "assa": s.hota.assa,
        "mota": s.clear.mota, "motp": s.clear.motp, "idf1": s.ident.idf1,
        "n_gt": s.clear.n_gt, "tp": s.clear.tp, "fn": s.clear.fn,
        "fp": s.clear.fp, "idsw": s.clear.idsw,
        "idtp": s.ident.idtp, "idfp": s.ident.idfp, "idfn": s.ident.idfn,
    }


def _load_eval_items(dataset: str, pred_dir: str, jobs: int):
    names = store.list_sequences(dataset)
    if not names:
        raise CliError(f"no sequences found under {dataset}")

    def load(name):
        seq_dir = os.path.join(dataset, name)
        meta = store.load_sequence_meta(seq_dir)
        gt_ann = store.load_annotations(seq_dir, meta)
        pred_path = os.path.join(pred_dir, name + ".txt")
        if not os.path.isfile(pred_path):
            raise CliError(f"missing prediction file {pred_path}")
        with open(pred_path, encoding="utf-8") as f:
            pred_ann = parse_annotations(f.read(), seq_length=meta.seq_length)
        return SequenceItem(
            name=name,
            gt=TrajectorySet.from_annotations(gt_ann),
            pred=TrajectorySet.from_annotations(pred_ann, include_invalid=True),
            n_frames=meta.seq_length,
            platform=meta.platform)

    loaded = _parallel_map(load, names, jobs)
    return [loaded[n] for n in names]


def _cmd_evaluate(args) -> int:
    items = _load_eval_items(args.dataset, args.pred, args.jobs)
    by_name = {it.name: it for it in items}
    scores = _parallel_map(
        lambda n: evaluate_pair(by_name[n].gt, by_name[n].pred,
                                by_name[n].n_frames,
                                iou_threshold=args.iou_threshold),
        [it.name for it in items], args.jobs)
    report = evaluate(items, protocol=args.protocol, scores=scores)

    platform_groups = [g for g in report.groups if g.name != "all"]
    overall = report.group("all")
    if args.format == "json":
        payload = {
            "protocol": report.protocol,
            "iou_threshold": args.iou_threshold,
            "groups": [
                {"name": g.name,
                 "pooled": _scores_dict(g.pooled),
                 "sequences": {n: _scores_dict(s) for n, s in g.sequences.items()}}
                for g in report.groups
            ],
        }
        if args.protocol == 2 and platform_groups:
            payload["group_mean"] = {
                key: sum(_scores_dict(g.pooled)[key] for g in platform_groups)
                / len(platform_groups)
                for key in ("hota", "deta", "assa", "mota", "motp", "idf1")
            }
        _emit_json(payload)
        return 0

    rows = []
    if args.protocol == 1:
        for name, s in overall.sequences.items():
            rows.append((name, *_metric_cells(s)))
        rows.append(("all", *_metric_cells(overall.pooled)))
    else:
        for g in platform_groups:
            rows.append((f"{g.name} ({len(g.sequences)})",
                         *_metric_cells(g.pooled)))
        rows.append((f"all ({len(overall.sequences)})",
                     *_metric_cells(overall.pooled)))
        if platform_groups:
            # unweighted mean over platform groups; counts do not average
            pooled = [g.pooled for g in platform_groups]
            mean = [sum(getattr(getattr(s, part), attr) for s in pooled) / len(pooled)
                    for part, attr in (("hota", "hota"), ("hota", "deta"),
                                       ("hota", "assa"), ("clear", "mota"),
                                       ("clear", "motp"), ("ident", "idf1"))]
            rows.append(("group mean", *[_pct(v) for v in mean], "-", "-", "-"))
    sys.stdout.write(_table(("sequence" if args.protocol == 1 else "group",
                             *_METRIC_COLUMNS), rows))
    return 0


# ---------------------------------------------------------------------------
# track

def _cmd_track(args) -> int:
    names = store.list_sequences(args.dataset)
    if not names:
        raise CliError(f"no sequences found under {args.dataset}")
    cfg = TrackerConfig(assoc_iou=args.assoc_iou, max_age=args.max_age,
                        min_hits=args.min_hits, score_birth=args.score_birth,
                        nms_iou=args.nms_iou)
    os.makedirs(args.out, exist_ok=True)

    def run(name):
        seq_dir = os.path.join(args.dataset, name)
        meta = store.load_sequence_meta(seq_dir)
        det_path = os.path.join(seq_dir, store.DET_FILE)
        if not os.path.isfile(det_path):
            raise CliError(f"{name}: no detections at {det_path}")
        dets = store.load_detections(seq_dir)
        frames = detections_by_frame(dets, meta.seq_length)
        if not args.no_merge:
            frames = [
                merge_modal_detections(
                    [d for d in fr if d.modality != "T"],
                    [d for d in fr if d.modality == "T"],
                    nms_iou=cfg.nms_iou)
                for fr in frames
            ]
        result = track_sequence(frames, cfg)
        ann = result.to_annotations()
        store.write_text_atomic(os.path.join(args.out, name + ".txt"),
                                serialize_annotations(ann))
        return meta.seq_length, len(ann.track_ids()), len(ann)

    results = _parallel_map(run, names, args.jobs)
    rows = [(n, *results[n]) for n in names]
    sys.stdout.write(_table(("sequence", "frames", "tracks", "boxes"), rows))
    return 0


# ---------------------------------------------------------------------------
# gen

def _cmd_gen(args) -> int:
    if args.sequences < 1:
        raise CliError("--sequences must be >= 1")
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for i in range(args.sequences):
        name = f"seq-{i + 1:04d}"
        spec = harness.ScenarioSpec(
            name=name,
            n_tracks=args.n_tracks,
            n_frames=args.n_frames,
            motion=args.motion or harness.MOTIONS[i % len(harness.MOTIONS)],
            drop_rate=args.drop_rate,
            jitter_px=args.jitter_px,
            fp_rate=args.fp_rate,
            seed=args.seed + i,
            platform=args.platform
            or GROUPABLE_PLATFORMS[i % len(GROUPABLE_PLATFORMS)])
        seq = harness.generate_synthetic_sequence(spec)
        store.write_sequence_tree(os.path.join(args.out, name), seq.meta,
                                  seq.annotations, seq.detections)
        rows.append((name, spec.platform, spec.motion, spec.n_frames,
                     spec.n_tracks, len(seq.annotations),
                     len(seq.detections), seq.n_dropped, seq.n_false))
    sys.stdout.write(_table(
        ("sequence", "platform", "motion", "frames", "tracks", "gt boxes",
         "detections", "dropped", "false"), rows, right=range(3, 9)))
    return 0


# ---------------------------------------------------------------------------
# gradcheck

def _cmd_gradcheck(args) -> int:
    names = args.check or sorted(checks.CHECKS)
    reports = {}
    for name in names:
        reports[name] = checks.run_check(name, h=args.step)
    failed = [n for n, r in reports.items() if not r.ok(args.tol)]
    if args.format == "json":
        _emit_json({
            "step": args.step, "tol": args.tol,
            "checks": {
                n: {"n_checked": r.n_checked, "max_abs_err": r.max_abs_err,
                    "max_rel_err": r.max_rel_err,
                    "worst": [r.worst[0], list(r.worst[1])],
                    "ok": r.ok(args.tol)}
                for n, r in reports.items()
            },
            "ok": not failed,
        })
    else:
        rows = [(n, r.n_checked, f"{r.max_abs_err:.3e}", f"{r.max_rel_err:.3e}",
                 "ok" if r.ok(args.tol) else "FAIL")
                for n, r in reports.items()]
        sys.stdout.write(_table(
            ("check", "coords", "max abs err", "max rel err", "status"), rows))
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# pfm-demo

_STAGE_ORDER = ("tokens_vis", "tokens_ir", "heatmap", "tokens_heatmap",
                "enhanced_vis", "enhanced_ir", "fused")


def _parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(p) for p in text.lower().split("x"))
    except ValueError:
        raise CliError(f"--size must look like 64x64, got {text!r}")
    if h < pfm.PATCH or w < pfm.PATCH or h % pfm.PATCH or w % pfm.PATCH:
        raise CliError(f"--size must be positive multiples of {pfm.PATCH}")
    return h, w


def _demo_boxes(h: int, w: int):
    from .assignment import Box
    return [Box(w / 8.0, h / 8.0, w / 5.0, h / 5.0),
            Box(w / 2.0, h / 3.0, w / 6.0, h / 4.0)]


def _cmd_pfm_demo(args) -> int:
    if args.init:
        h, w = _parse_size(args.size)
        params = pfm.init_pfm_params(seed=args.seed, d=args.d,
                                     n_heads=args.heads,
                                     stem_channels=args.stem_channels,
                                     variant=args.variant)
        rng = np.random.default_rng(args.seed)
        images = {k: rng.uniform(0.0, 1.0, (1, h, w))
                  for k in ("vis_t", "vis_prev", "ir_t", "ir_prev")}
        arraydoc.save_pfm_fixture(args.fixture, params, images,
                                  _demo_boxes(h, w))
        tokens = (h // pfm.PATCH) * (w // pfm.PATCH)
        print(f"wrote {args.fixture}: variant={args.variant} d={args.d} "
              f"heads={args.heads} image={h}x{w} tokens={tokens}")
        return 0

    if not os.path.isfile(args.fixture):
        raise CliError(f"no fixture at {args.fixture} (use --init to create one)")
    params, images, boxes = arraydoc.load_pfm_fixture(args.fixture)
    out, cache = pfm.pfm_forward(images["vis_t"], images["vis_prev"],
                                 images["ir_t"], images["ir_prev"],
                                 boxes, params)
    stages = cache[3]
    ordered = [(n, stages[n]) for n in _STAGE_ORDER if n in stages]
    if args.out:
        arraydoc.save_arrays(
            args.out,
            {f"stage.{n}": a for n, a in ordered} | {"output": out},
            meta={"kind": "pfm_demo_output", "variant": params.variant})
    if args.format == "json":
        _emit_json({
            "variant": params.variant, "d": params.d,
            "n_heads": params.n_heads,
            "image_shape": list(images["vis_t"].shape),
            "stages": {n: {"shape": list(a.shape),
                           "l2": float(np.linalg.norm(a))}
                       for n, a in ordered},
            "output": {"shape": list(out.shape),
                       "l2": float(np.linalg.norm(out))},
        })
    else:
        print(f"variant={params.variant} d={params.d} heads={params.n_heads} "
              f"image={images['vis_t'].shape[1]}x{images['vis_t'].shape[2]}")
        rows = [(n, "x".join(str(s) for s in a.shape),
                 f"{np.linalg.norm(a):.6f}") for n, a in ordered]
        sys.stdout.write(_table(("stage", "shape", "l2 norm"), rows))
        if args.out:
            print(f"arrays written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualmot",
        description="Dual visible/thermal tracking dataset and evaluation tools.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_format(p):
        p.add_argument("--format", choices=("table", "json"), default="table",
                       help="output format (json is lossless)")

    def add_jobs(p):
        p.add_argument("--jobs", type=int, default=None,
                       help=f"worker threads (default ${JOBS_ENV} or 1)")

    p = sub.add_parser("validate", help="check sequence trees for format defects")
    p.add_argument("dataset")
    add_format(p)
    add_jobs(p)
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("stats", help="corpus statistics over a dataset")
    p.add_argument("dataset")
    add_format(p)
    add_jobs(p)
    p.set_defaults(fn=_cmd_stats)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("dataset")
    p.add_argument("--pred", required=True,
                   help="directory of <sequence>.txt prediction files")
    p.add_argument("--protocol", type=int, choices=(1, 2), default=1,
                   help="1 pools everything; 2 groups by platform")
    p.add_argument("--iou-threshold", type=float, default=metrics.DEFAULT_IOU_THRESHOLD,
                   help="match threshold for MOTA/MOTP/IDF1")
    add_format(p)
    add_jobs(p)
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("track", help="run the tracker over stored detections")
    p.add_argument("dataset")
    p.add_argument("--out", required=True, help="directory for <sequence>.txt results")
    p.add_argument("--assoc-iou", type=float, default=TrackerConfig.assoc_iou)
    p.add_argument("--max-age", type=int, default=TrackerConfig.max_age)
    p.add_argument("--min-hits", type=int, default=TrackerConfig.min_hits)
    p.add_argument("--score-birth", type=float, default=TrackerConfig.score_birth)
    p.add_argument("--nms-iou", type=float, default=TrackerConfig.nms_iou)
    p.add_argument("--no-merge", action="store_true",
                   help="skip the cross-modal duplicate merge")
    add_jobs(p)
    p.set_defaults(fn=_cmd_track)

    p = sub.add_parser("gen", help="generate synthetic sequences")
    p.add_argument("out")
    p.add_argument("--sequences", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-frames", type=int, default=100)
    p.add_argument("--n-tracks", type=int, default=3)
    p.add_argument("--drop-rate", type=float, default=0.05)
    p.add_argument("--jitter-px", type=float, default=2.0)
    p.add_argument("--fp-rate", type=float, default=0.2)
    p.add_argument("--motion", choices=harness.MOTIONS, default=None,
                   help="fix the motion model (default: cycle)")
    p.add_argument("--platform", choices=GROUPABLE_PLATFORMS, default=None,
                   help="fix the platform tag (default: cycle)")
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("gradcheck", help="finite-difference checks of the fusion ops")
    p.add_argument("--check", action="append", choices=sorted(checks.CHECKS),
                   help="run only this check (repeatable; default: all)")
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    add_format(p)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("pfm-demo", help="run the token-fusion module on a fixture")
    p.add_argument("fixture", help="fixture file (JSON array document)")
    p.add_argument("--init", action="store_true",
                   help="create the fixture instead of running it")
    p.add_argument("--variant", choices=pfm.VARIANTS, default="full")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", default="64x64", help="image size as HxW")
    p.add_argument("--d", type=int, default=64, help="token width")
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--stem-channels", type=int, default=8)
    p.add_argument("--out", default=None,
                   help="also write stage arrays to this file")
    add_format(p)
    p.set_defaults(fn=_cmd_pfm_demo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "jobs", 1) is None:
            args.jobs = _default_jobs()
        if getattr(args, "jobs", 1) < 1:
            raise CliError("--jobs must be >= 1")
        return args.fn(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (FormatError, FileNotFoundError, NotADirectoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
