"""Batch command line interface.

Subcommands: ``validate`` a dataset directory, ``evaluate`` predictions
against ground truth, ``generate`` synthetic datasets with known-answer
counters, ``render`` annotation overlays, and ``report`` table-shaped views
of metric files.  Exit codes: 0 success, 1 violations or shape mismatches,
2 I/O or syntax failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .annotations import (
    AnnotationError,
    AnnotationSemanticError,
    SceneAnnotation,
    parse_scene,
)
from .metrics import MetricReport, aggregate_reports, evaluate_scene
from .render import render_overlay
from .reporting import TABLE_SHAPES, render_table, write_csv_reports
from .synthetic import SyntheticPlan, generate_dataset

__all__ = ["main"]

WORKERS_ENV = "VESSEVAL_WORKERS"
_MANIFEST_NAME = "manifest.json"


def _scene_files(directory: Path) -> list[Path]:
    return sorted(p for p in directory.glob("*.json") if p.name != _MANIFEST_NAME)


# ---------------------------------------------------------------------------
# validate

def _cmd_validate(args) -> int:
    root = Path(args.path)
    if not root.exists():
        print(f"error: path does not exist: {root}", file=sys.stderr)
        return 2
    files = [root] if root.is_file() else _scene_files(root)
    if not files:
        print(f"error: no annotation documents under {root}", file=sys.stderr)
        return 2
    total_violations = 0
    hard_failure = False
    for path in files:
        try:
            data = path.read_bytes()
        except OSError as exc:
            print(f"{path}: I/O error: {exc}", file=sys.stderr)
            hard_failure = True
            continue
        try:
            parse_scene(data)
        except AnnotationSemanticError as exc:
            total_violations += len(exc.violations)
            for violation in exc.violations:
                print(f"{path.name}: {violation}")
        except AnnotationError as exc:
            print(f"{path.name}: {exc}", file=sys.stderr)
            hard_failure = True
    if hard_failure:
        return 2
    print(f"{len(files)} file(s) checked, {total_violations} violations")
    return 0 if total_violations == 0 else 1


# ---------------------------------------------------------------------------
# evaluate

def _evaluate_pair(task: tuple[str, Optional[str], bool, bool]) -> MetricReport:
    gt_path, pred_path, relations, per_vessel = task
    gt = parse_scene(Path(gt_path).read_bytes())
    if pred_path is None:
        pred = SceneAnnotation(gt.image_width, gt.image_height)
    else:
        pred = parse_scene(Path(pred_path).read_bytes())
    return evaluate_scene(gt, pred, relations=relations, per_vessel=per_vessel)


def _default_workers() -> int:
    value = os.environ.get(WORKERS_ENV, "")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def _cmd_evaluate(args) -> int:
    gt_dir, pred_dir = Path(args.gt), Path(args.pred)
    for directory in (gt_dir, pred_dir):
        if not directory.is_dir():
            print(f"error: not a directory: {directory}", file=sys.stderr)
            return 2
    gt_files = _scene_files(gt_dir)
    if not gt_files:
        print(f"error: no annotation documents under {gt_dir}", file=sys.stderr)
        return 2
    gt_names = {p.name for p in gt_files}
    for stray in _scene_files(pred_dir):
        if stray.name not in gt_names:
            print(f"warning: prediction {stray.name} has no matching GT file; ignored", file=sys.stderr)

    tasks = []
    for gt_path in gt_files:
        pred_path = pred_dir / gt_path.name
        if not pred_path.exists():
            print(f"warning: no prediction for {gt_path.name}; counting as all false negatives", file=sys.stderr)
            tasks.append((str(gt_path), None, args.relations, args.per_vessel))
        else:
            tasks.append((str(gt_path), str(pred_path), args.relations, args.per_vessel))

    try:
        if args.workers <= 1:
            reports = [_evaluate_pair(task) for task in tasks]
        else:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                reports = list(pool.map(_evaluate_pair, tasks))
    except AnnotationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    # tasks are already in sorted filename order, so the fold is deterministic
    # regardless of worker count
    report = aggregate_reports(reports)

    if args.out is None:
        sys.stdout.buffer.write(report.to_json())
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_bytes(report.to_json())
    written = [out / "report.json"]
    if args.format in ("csv", "markdown"):
        written.extend(write_csv_reports(report, out))
    if args.format == "markdown":
        sections = [("table1", "Panoptic quality, material classes"),
                    ("table2", "Semantic segmentation"),
                    ("table4", "Panoptic quality, vessel classes")]
        if args.relations:
            sections.insert(2, ("table3", "Vessel relationships"))
        parts = []
        for shape, title in sections:
            parts.append(f"## {title}\n\n{render_table(report, shape, 'markdown')}")
        (out / "report.md").write_text("\n".join(parts), "utf-8")
        written.append(out / "report.md")
    print(f"evaluated {report.scene_count} scene(s); wrote {', '.join(str(p) for p in written)}")
    return 0


# ---------------------------------------------------------------------------
# generate

def _cmd_generate(args) -> int:
    plan_path = Path(args.plan)
    try:
        plan = SyntheticPlan.from_json(plan_path.read_text("utf-8"))
    except OSError as exc:
        print(f"error: cannot read plan: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError) as exc:
        print(f"error: invalid plan: {exc}", file=sys.stderr)
        return 2
    expected = generate_dataset(plan, args.out)
    print(
        f"generated {plan.scene_count} scene pair(s) under {args.out} "
        f"(expected counters in expected_metrics.json, "
        f"{len(expected.with_class)} classes)"
    )
    return 0


# ---------------------------------------------------------------------------
# render

def _cmd_render(args) -> int:
    path = Path(args.scene)
    try:
        data = path.read_bytes()
    except OSError as exc:
        print(f"error: cannot read scene: {exc}", file=sys.stderr)
        return 2
    try:
        scene = parse_scene(data)
    except AnnotationError as exc:
        print(f"error: invalid scene: {exc}", file=sys.stderr)
        return 1
    render_overlay(scene, args.out)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# report

def _cmd_report(args) -> int:
    path = Path(args.metrics)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except OSError as exc:
        print(f"error: cannot read metrics: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: metrics file is not valid JSON: {exc}", file=sys.stderr)
        return 2
    try:
        report = MetricReport.from_dict(doc)
        text = render_table(report, args.shape, args.format)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.out:
        Path(args.out).write_text(text, "utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vesseval",
        description="Hierarchical vessel/material scene annotations: validation, evaluation, synthesis, rendering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate every annotation document in a directory")
    p.add_argument("path", help="dataset directory or single document")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("evaluate", help="evaluate predictions against ground truth")
    p.add_argument("--gt", required=True, help="ground-truth document directory")
    p.add_argument("--pred", required=True, help="prediction document directory")
    p.add_argument("--per-vessel", action="store_true", help="also evaluate content per vessel and macro-average")
    p.add_argument("--relations", action="store_true", help="also evaluate vessel relationship prediction")
    p.add_argument("--workers", type=int, default=_default_workers(),
                   help=f"parallel scene workers (default ${WORKERS_ENV} or 1)")
    p.add_argument("--out", help="output directory (default: print the structured report)")
    p.add_argument("--format", choices=("structured", "csv", "markdown"), default="structured",
                   help="additional table formats to write next to report.json")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("generate", help="generate a synthetic gt/pred dataset with known-answer counters")
    p.add_argument("--plan", required=True, help="plan JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("render", help="render a scene annotation overlay to a PNG")
    p.add_argument("scene", help="annotation document")
    p.add_argument("--out", required=True, help="output image path")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("report", help="render a metric report in one of the standard table shapes")
    p.add_argument("metrics", help="metric report JSON written by evaluate")
    p.add_argument("--shape", required=True, choices=TABLE_SHAPES)
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", None) is not None and args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
