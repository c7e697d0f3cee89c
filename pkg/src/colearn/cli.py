"""Command-line front end: align, filter, assign, eval, simulate.

Each subcommand reads JSON/TOML inputs, writes its outputs atomically
(temp file + rename), prints a one-line summary to stdout and reports
problems on stderr. Exit codes: 0 success, 2 invalid input/schema/flags,
1 runtime failure. Internal parallelism is capped by COLEARN_THREADS.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass

from .align import align_dataset, default_lexicon, issues_to_obj, load_lexicon
from .assign import Anchor, assign_topk
from .errors import ColearnError, ConfigError, SchemaError, ValidationError
from .metrics import EvalReport, evaluate_dataset
from .model import (
    BBox,
    Dataset,
    Detection,
    load_dataset,
    save_dataset,
    write_json_atomic,
    write_text_atomic,
)
from .pseudo import (
    ThresholdState,
    ThresholdTraceRecord,
    filter_pseudo_labels,
    trace_to_jsonl,
    update_thresholds,
)
from .sim import SimConfig, load_sim_config, run_colearning_sim


@dataclass(frozen=True)
class CommandResult:
    """Outcome of one CLI invocation; exit 0 iff all outputs were written."""

    exit_code: int
    summary: str
    artifacts: tuple[str, ...] = ()


def _write_csv_atomic(path, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    write_text_atomic(path, buf.getvalue())


def _save_figure_atomic(render, path) -> str:
    """Render a figure through a temp file so failures leave no partial PNG."""
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".png")
    os.close(fd)
    try:
        render(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return os.fspath(path)


def _cmd_align(args) -> CommandResult:
    dataset = load_dataset(args.dataset)
    if args.lexicon:
        lexicon = load_lexicon(args.lexicon, dataset.vocabulary)
    else:
        lexicon = default_lexicon(dataset.vocabulary)
    result = align_dataset(dataset, lexicon)
    report_path = args.report or _sibling(args.out, ".report.json")
    save_dataset(result.dataset, args.out)
    write_json_atomic(report_path, issues_to_obj(result.issues))
    changed = sum(
        1 for before, after in zip(dataset.ground_truth, result.dataset.ground_truth)
        if before.class_id != after.class_id
    )
    summary = (
        f"aligned {len(result.dataset.ground_truth)} boxes "
        f"({changed} relabeled, {len(result.issues)} issues) -> {args.out}"
    )
    return CommandResult(0, summary, (os.fspath(args.out), os.fspath(report_path)))


def _sibling(path, suffix: str) -> str:
    base = os.fspath(path)
    if base.endswith(".json"):
        base = base[: -len(".json")]
    return base + suffix


def _cmd_filter(args) -> CommandResult:
    dataset = load_dataset(args.dataset)
    if dataset.detections is None:
        raise SchemaError(f"{args.dataset}: no 'detections' array to filter")
    state = ThresholdState(
        floor=args.floor, cap=args.cap, rate=args.rate, initial=args.initial
    )
    scores_by_class: dict[int, list[float]] = {}
    for det in dataset.detections:
        scores_by_class.setdefault(det.class_id, []).append(det.score)
    raw = update_thresholds(state, scores_by_class)
    pseudo = filter_pseudo_labels(dataset.detections, state, args.nms_iou)
    filtered = Dataset(
        dataset.vocabulary, dataset.images, dataset.ground_truth, pseudo.detections
    )
    save_dataset(filtered, args.out)
    artifacts = [os.fspath(args.out)]
    if args.trace:
        records = [
            ThresholdTraceRecord(
                iteration=state.iteration,
                class_name=dataset.vocabulary.name(c),
                raw_threshold=raw.get(c),
                smoothed_threshold=state.threshold(c),
                n_scores=len(scores_by_class.get(c, ())),
                kept_count=pseudo.count_for(c),
            )
            for c in sorted(scores_by_class)
        ]
        write_text_atomic(args.trace, trace_to_jsonl(records))
        artifacts.append(os.fspath(args.trace))
    summary = (
        f"kept {len(pseudo.detections)}/{len(dataset.detections)} detections "
        f"as pseudo-labels -> {args.out}"
    )
    return CommandResult(0, summary, tuple(artifacts))


def _parse_anchor_file(path) -> list[tuple[Anchor, int, str | None]]:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(obj, dict) or not isinstance(obj.get("anchors"), list):
        raise SchemaError(f"{path}: expected an object with an 'anchors' array")
    rows = []
    for idx, rec in enumerate(obj["anchors"]):
        where = f"anchors[{idx}]"
        if not isinstance(rec, dict):
            raise SchemaError(f"{where}: expected an object")
        for key in ("image_id", "bbox", "score"):
            if key not in rec:
                raise SchemaError(f"{where}: missing required field {key!r}")
        bbox = rec["bbox"]
        if not isinstance(bbox, list) or len(bbox) != 4:
            raise SchemaError(f"{where}: bbox must be a [x,y,w,h] array")
        heads = None
        if rec.get("heads") is not None:
            if not isinstance(rec["heads"], list) or not rec["heads"]:
                raise SchemaError(f"{where}: heads must be a non-empty array of boxes")
            heads = tuple(BBox(*map(float, h)) for h in rec["heads"])
        class_name = rec.get("class")
        if class_name is not None and not isinstance(class_name, str):
            raise SchemaError(f"{where}: class must be a string")
        try:
            anchor = Anchor(BBox(*map(float, bbox)), float(rec["score"]), heads)
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None
        rows.append((anchor, rec["image_id"], class_name))
    return rows


def _cmd_assign(args) -> CommandResult:
    labels_ds = load_dataset(args.labels)
    if labels_ds.detections is None:
        raise SchemaError(f"{args.labels}: no 'detections' array to assign against")
    anchor_rows = _parse_anchor_file(args.anchors)

    groups: dict[tuple, tuple[list[int], list[int]]] = {}
    for gi, (anchor, image_id, class_name) in enumerate(anchor_rows):
        class_id = labels_ds.vocabulary.index(class_name) if class_name is not None else None
        groups.setdefault((image_id, class_id), ([], []))[0].append(gi)
    for li, det in enumerate(labels_ds.detections):
        for (image_id, class_id), (_, label_idx) in groups.items():
            if det.image_id == image_id and class_id in (None, det.class_id):
                label_idx.append(li)

    out_labels: list[int | None] = [None] * len(anchor_rows)
    out_costs: list[float | None] = [None] * len(anchor_rows)
    for (image_id, class_id), (anchor_idx, label_idx) in sorted(
        groups.items(), key=lambda kv: (kv[0][0], -1 if kv[0][1] is None else kv[0][1])
    ):
        sub_anchors = [anchor_rows[i][0] for i in anchor_idx]
        sub_labels = [labels_ds.detections[j] for j in label_idx]
        assignment = assign_topk(
            sub_anchors, sub_labels, k=args.k, mode=args.mode,
            w_cls=args.w_cls, w_reg=args.w_reg, iou_thresh=args.iou_thresh,
        )
        for local, (lab, cost) in enumerate(zip(assignment.labels, assignment.costs)):
            if lab is not None:
                out_labels[anchor_idx[local]] = label_idx[lab]
                out_costs[anchor_idx[local]] = cost

    records = [
        {
            "anchor_index": i,
            "label_index": lab if lab is not None else "bg",
            "cost": cost,
            "mode": args.mode,
        }
        for i, (lab, cost) in enumerate(zip(out_labels, out_costs))
    ]
    write_json_atomic(args.out, records)
    n_pos = sum(1 for lab in out_labels if lab is not None)
    summary = f"assigned {n_pos}/{len(anchor_rows)} anchors ({args.mode}) -> {args.out}"
    return CommandResult(0, summary, (os.fspath(args.out),))


def _remap_detections(det_ds: Dataset, gt_ds: Dataset) -> list[Detection]:
    dets = []
    for idx, det in enumerate(det_ds.detections):
        name = det_ds.vocabulary.name(det.class_id)
        if name not in gt_ds.vocabulary:
            raise ValidationError(
                f"detections[{idx}]: class {name!r} not in ground-truth vocabulary"
            )
        dets.append(Detection(det.image_id, det.bbox, gt_ds.vocabulary.index(name), det.score))
    return dets


def _eval_csv_rows(report: EvalReport) -> list[list]:
    rows: list[list] = [["class", "ap", "n_gt", "n_det", "n_tp", "n_fp"]]
    for name in report.per_class_ap:
        ap = report.per_class_ap[name]
        c = report.counts[name]
        rows.append([name, "" if ap is None else ap, c.n_gt, c.n_det, c.n_tp, c.n_fp])
    rows.append(["mAP", report.map_score, "", "", "", ""])
    return rows


def _cmd_eval(args) -> CommandResult:
    gt_ds = load_dataset(args.gt)
    det_ds = load_dataset(args.det)
    if det_ds.detections is None:
        raise SchemaError(f"{args.det}: no 'detections' array to evaluate")
    dets = _remap_detections(det_ds, gt_ds)
    report = evaluate_dataset(gt_ds, dets, args.iou)
    write_json_atomic(args.out, report.to_obj())
    artifacts = [os.fspath(args.out)]
    if args.csv:
        _write_csv_atomic(args.csv, _eval_csv_rows(report))
        artifacts.append(os.fspath(args.csv))
    if args.figdir:
        from . import plots

        os.makedirs(args.figdir, exist_ok=True)
        artifacts.append(_save_figure_atomic(
            lambda p: plots.save_pr_curves(report, p),
            os.path.join(args.figdir, "pr_curves.png"),
        ))
        artifacts.append(_save_figure_atomic(
            lambda p: plots.save_ap_bars({"eval": report}, p),
            os.path.join(args.figdir, "ap_bars.png"),
        ))
    summary = f"mAP@{args.iou:g} = {report.map_score:.4f} over {len(dets)} detections -> {args.out}"
    return CommandResult(0, summary, tuple(artifacts))


def _cmd_simulate(args) -> CommandResult:
    if args.config:
        cfg = load_sim_config(args.config)
    else:
        cfg = SimConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"seed must be non-negative: {args.seed}")
        cfg = SimConfig(**{**_config_kwargs(cfg), "seed": args.seed})
    report = run_colearning_sim(cfg)
    write_json_atomic(args.out, report.to_obj())
    artifacts = [os.fspath(args.out)]
    if args.csv:
        _write_csv_atomic(args.csv, report.timeseries_rows())
        artifacts.append(os.fspath(args.csv))
    if args.trace:
        write_text_atomic(args.trace, trace_to_jsonl(report.threshold_trace()))
        artifacts.append(os.fspath(args.trace))
    if args.figdir:
        from . import plots

        os.makedirs(args.figdir, exist_ok=True)
        artifacts.append(_save_figure_atomic(
            lambda p: plots.save_threshold_series(report, p),
            os.path.join(args.figdir, "thresholds.png"),
        ))
        artifacts.append(_save_figure_atomic(
            lambda p: plots.save_pseudo_counts(report, p),
            os.path.join(args.figdir, "pseudo_counts.png"),
        ))
        artifacts.append(_save_figure_atomic(
            lambda p: plots.save_ap_bars(dict(report.final_eval), p),
            os.path.join(args.figdir, "ap_bars.png"),
        ))
    summary = (
        f"simulated {cfg.iterations} iterations (seed {cfg.seed}): "
        f"mAP aligned {report.final_map('aligned'):.4f}, "
        f"unaligned {report.final_map('unaligned'):.4f} -> {args.out}"
    )
    return CommandResult(0, summary, tuple(artifacts))


def _config_kwargs(cfg: SimConfig) -> dict:
    fields = (
        "seed", "image_width", "image_height", "objects_min", "objects_max",
        "classes", "class_weights", "noise", "iterations", "images_per_iteration",
        "labeled_fraction", "k", "w_cls", "w_reg", "threshold_floor",
        "threshold_cap", "initial_threshold", "smoothing_rate", "ema_momentum",
        "heads_per_anchor", "anchors_per_object", "window_size", "nms_iou",
        "student_decay", "holdout_images",
    )
    return {name: getattr(cfg, name) for name in fields}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="colearn",
        description="Annotation alignment, pseudo-label filtering, anchor "
        "assignment, AP evaluation and the co-learning simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("align", formatter_class=fmt,
                       help="canonicalize ground-truth labels from descriptions")
    p.add_argument("--dataset", required=True, help="input dataset JSON")
    p.add_argument("--lexicon", default=None, help="lexicon JSON (default: built-in)")
    p.add_argument("--out", required=True, help="aligned dataset JSON to write")
    p.add_argument("--report", default=None,
                   help="side report JSON (default: <out>.report.json)")
    p.set_defaults(func=_cmd_align)

    p = sub.add_parser("filter", formatter_class=fmt,
                       help="dynamic-threshold score filtering with class-wise NMS")
    p.add_argument("--dataset", required=True, help="dataset JSON with detections")
    p.add_argument("--out", required=True, help="filtered dataset JSON to write")
    p.add_argument("--trace", default=None, help="threshold trace JSONL to write")
    p.add_argument("--nms-iou", type=float, default=0.5, help="NMS IoU threshold")
    p.add_argument("--floor", type=float, default=0.30, help="threshold floor")
    p.add_argument("--cap", type=float, default=0.95, help="threshold cap")
    p.add_argument("--rate", type=float, default=0.0,
                   help="smoothing toward --initial; 0 uses the fitted threshold directly")
    p.add_argument("--initial", type=float, default=0.9,
                   help="threshold for classes whose fit is degenerate")
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("assign", formatter_class=fmt,
                       help="anchor-to-label assignment by matching cost")
    p.add_argument("--labels", required=True,
                   help="dataset JSON whose detections are the targets")
    p.add_argument("--anchors", required=True, help="anchors JSON file")
    p.add_argument("--out", required=True, help="assignment dump JSON to write")
    p.add_argument("--mode", choices=("cost_topk", "static_iou"), default="cost_topk",
                   help="assignment strategy")
    p.add_argument("--k", type=int, default=3, help="positives per label (cost_topk)")
    p.add_argument("--w-cls", type=float, default=1.0, help="classification cost weight")
    p.add_argument("--w-reg", type=float, default=2.0, help="localization cost weight")
    p.add_argument("--iou-thresh", type=float, default=0.5,
                   help="IoU threshold for static_iou mode")
    p.set_defaults(func=_cmd_assign)

    p = sub.add_parser("eval", formatter_class=fmt,
                       help="AP@IoU / mAP evaluation")
    p.add_argument("--gt", required=True, help="ground-truth dataset JSON")
    p.add_argument("--det", required=True, help="dataset JSON with detections")
    p.add_argument("--iou", type=float, default=0.5, help="IoU threshold")
    p.add_argument("--out", required=True, help="report JSON to write")
    p.add_argument("--csv", default=None, help="per-class CSV to write")
    p.add_argument("--figdir", default=None, help="directory for PNG figures")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("simulate", formatter_class=fmt,
                       help="run the deterministic co-learning simulation")
    p.add_argument("--config", default=None, help="TOML configuration file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True, help="simulation report JSON to write")
    p.add_argument("--csv", default=None, help="threshold time-series CSV to write")
    p.add_argument("--trace", default=None, help="threshold trace JSONL to write")
    p.add_argument("--figdir", default=None, help="directory for PNG figures")
    p.set_defaults(func=_cmd_simulate)

    return parser


def run(argv) -> CommandResult:
    """Parse argv and execute one subcommand."""
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, ValidationError, ConfigError) as exc:
        return CommandResult(2, str(exc))
    except ColearnError as exc:
        return CommandResult(2, str(exc))
    except OSError as exc:
        return CommandResult(1, f"I/O error: {exc}")


def main(argv=None) -> int:
    result = run(argv)
    if result.exit_code == 0:
        print(result.summary)
    else:
        print(f"error: {result.summary}", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
