"""Table-shaped views of metric reports: CSV files and markdown tables.

Four shapes are supported: panoptic tables for material classes (table1)
and vessel classes (table4), the semantic table (table2) and the relation
table (table3).  Zero-support cells render as an em dash next to their
support column; classes with no data at all are skipped.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Optional, Sequence

from .metrics import MetricReport
from .taxonomy import DEFAULT_TAXONOMY, KIND_MATERIAL, KIND_PART, KIND_VESSEL

__all__ = ["TABLE_SHAPES", "render_table", "write_csv_reports"]

TABLE_SHAPES = ("table1", "table2", "table3", "table4")

_ABSENT = "—"  # em dash


def _shape_classes(shape: str) -> Sequence[str]:
    material = DEFAULT_TAXONOMY.classes_of_kind(KIND_MATERIAL)
    vessel = DEFAULT_TAXONOMY.classes_of_kind(KIND_VESSEL)
    part = DEFAULT_TAXONOMY.classes_of_kind(KIND_PART)
    if shape == "table1":
        return material + ("scattered", "on_surface")
    if shape == "table2":
        return material + part + ("transparent", "semi_transparent", "opaque", "scattered", "on_surface")
    if shape == "table4":
        return vessel + ("transparent", "semi_transparent", "opaque")
    raise ValueError(f"unknown table shape {shape!r}")


def _cell(value: Optional[float], markdown: bool) -> str:
    if value is None:
        return _ABSENT
    return f"{value:.3f}" if markdown else repr(float(value))


def _panoptic_rows(report: MetricReport, shape: str, markdown: bool) -> tuple[list[str], list[list[str]]]:
    header = [
        "class",
        "agnostic_pq", "agnostic_sq", "agnostic_rq", "agnostic_support",
        "with_class_pq", "with_class_sq", "with_class_rq", "with_class_support",
    ]
    agnostic_counters = report.agnostic_counters()
    agnostic_quality = report.agnostic_quality()
    with_class_quality = report.with_class_quality()
    rows = []
    for cls in _shape_classes(shape):
        in_agnostic = cls in agnostic_counters
        in_with_class = cls in report.with_class
        if not in_agnostic and not in_with_class:
            continue
        aq = agnostic_quality.get(cls)
        wq = with_class_quality.get(cls)
        ac = agnostic_counters.get(cls)
        wc = report.with_class.get(cls)
        rows.append([
            cls,
            _cell(aq.pq if aq else None, markdown),
            _cell(aq.sq if aq else None, markdown),
            _cell(aq.rq if aq else None, markdown),
            repr(round(ac.tp + ac.fp + ac.fn, 9)) if ac else "0",
            _cell(wq.pq if wq else None, markdown),
            _cell(wq.sq if wq else None, markdown),
            _cell(wq.rq if wq else None, markdown),
            str(int(wc.tp + wc.fp + wc.fn)) if wc else "0",
        ])
    return header, rows


def _semantic_rows(report: MetricReport, markdown: bool) -> tuple[list[str], list[list[str]]]:
    header = ["class", "iou", "precision", "recall", "gt_px", "pred_px"]
    scores = report.semantic_scores()
    rows = []
    for cls in _shape_classes("table2"):
        if cls not in scores:
            continue
        s = scores[cls]
        c = report.semantic[cls]
        rows.append([
            cls,
            _cell(s.iou, markdown), _cell(s.precision, markdown), _cell(s.recall, markdown),
            str(c.gt_px), str(c.pred_px),
        ])
    return header, rows


def _relation_rows(report: MetricReport, markdown: bool) -> tuple[list[str], list[list[str]]]:
    if report.relations is None:
        raise ValueError("report lacks relation counters; run the evaluation with relations enabled")
    header = ["relation", "precision", "recall", "iou", "support"]
    scores = report.relation_scores() or {}
    rows = []
    for kind in ("linked", "inside", "contain", "none"):
        counters = report.relations.get(kind)
        if counters is None or counters.support == 0:
            continue
        s = scores[kind]
        rows.append([
            kind,
            _cell(s.precision, markdown), _cell(s.recall, markdown), _cell(s.iou, markdown),
            str(counters.support),
        ])
    return header, rows


def render_table(report: MetricReport, shape: str, fmt: str = "markdown") -> str:
    """Render one table shape as markdown or CSV text."""
    if shape not in TABLE_SHAPES:
        raise ValueError(f"shape must be one of {TABLE_SHAPES}, got {shape!r}")
    if fmt not in ("markdown", "csv"):
        raise ValueError(f"format must be 'markdown' or 'csv', got {fmt!r}")
    markdown = fmt == "markdown"
    if shape in ("table1", "table4"):
        header, rows = _panoptic_rows(report, shape, markdown)
    elif shape == "table2":
        header, rows = _semantic_rows(report, markdown)
    else:
        header, rows = _relation_rows(report, markdown)
    if markdown:
        lines = [
            "| " + " | ".join(header) + " |",
            "| " + " | ".join("---" for _ in header) + " |",
        ]
        lines.extend("| " + " | ".join(row) + " |" for row in rows)
        return "\n".join(lines) + "\n"
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def write_csv_reports(report: MetricReport, out_dir) -> list[Path]:
    """Write the raw-counter CSV files next to the structured report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    path = out / "semantic.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class", "iou", "precision", "recall",
                         "intersection_px", "union_px", "gt_px", "pred_px"])
        scores = report.semantic_scores()
        for cls in sorted(report.semantic):
            c, s = report.semantic[cls], scores[cls]
            writer.writerow([cls, _csv_value(s.iou), _csv_value(s.precision), _csv_value(s.recall),
                             c.intersection_px, c.union_px, c.gt_px, c.pred_px])
    written.append(path)

    path = out / "panoptic.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mode", "class", "pq", "sq", "rq", "tp", "fp", "fn", "iou_sum"])
        for mode, counters, qualities in (
            ("with_class", report.with_class, report.with_class_quality()),
            ("class_agnostic", report.agnostic_counters(), report.agnostic_quality()),
        ):
            for cls in sorted(counters):
                c = counters[cls]
                q = qualities.get(cls)
                writer.writerow([
                    mode, cls,
                    _csv_value(q.pq if q else None), _csv_value(q.sq if q else None),
                    _csv_value(q.rq if q else None),
                    _csv_value(c.tp), _csv_value(c.fp), _csv_value(c.fn), _csv_value(c.iou_sum),
                ])
    written.append(path)

    if report.relations is not None:
        path = out / "relations.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["relation", "precision", "recall", "iou", "tp", "fp", "fn"])
            scores = report.relation_scores() or {}
            for kind in ("linked", "inside", "contain", "none"):
                c = report.relations.get(kind)
                if c is None:
                    continue
                s = scores.get(kind)
                writer.writerow([
                    kind,
                    _csv_value(s.precision if s else None), _csv_value(s.recall if s else None),
                    _csv_value(s.iou if s else None), c.tp, c.fp, c.fn,
                ])
        written.append(path)

    if report.per_vessel is not None:
        path = out / "per_vessel.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["metric", "class", "mean", "support"])
            for metric, by_class in (report.per_vessel_means() or {}).items():
                for cls, (mean, support) in by_class.items():
                    writer.writerow([metric, cls, _csv_value(mean), support])
        written.append(path)
    return written


def _csv_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and value.is_integer():
        return repr(value)
    return repr(value) if isinstance(value, float) else str(value)
