"""Grouped result tables with optional deltas against a baseline group."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .metrics import Counts, MetricsReport, compute_metrics, format_pct
from .runner import CONTEXT_LABELS, TrialRecord

_DIMENSIONS = {
    "knowledge": lambda r: r.knowledge_mode,
    "context": lambda r: CONTEXT_LABELS[r.include_context],
    "scheme": lambda r: r.scheme,
    "model": lambda r: r.model_id,
    "language": lambda r: r.language,
    "rank": lambda r: str(r.rank),
}

DIMENSIONS = tuple(_DIMENSIONS)


@dataclass
class ReportRow:
    key: tuple[str, ...]
    counts: Counts
    metrics: MetricsReport
    errors: int = 0
    unparseable: int = 0
    deltas: dict[str, float | None] | None = None


@dataclass
class ReportTable:
    group_by: tuple[str, ...]
    rows: list[ReportRow] = field(default_factory=list)
    baseline: str | None = None


def report(records: list[TrialRecord], group_by: list[str] | tuple[str, ...], baseline: str | None = None) -> ReportTable:
    """Counts and metrics per group, ordered by group key.

    Error records (including unparseable verdicts) are excluded from the
    counts but tallied per group. With a baseline value for the first
    group-by dimension, each row also carries signed percentage-point
    deltas for precision/recall/F1 against the matching baseline row.
    """
    group_by = tuple(group_by)
    for dim in group_by:
        if dim not in _DIMENSIONS:
            raise ValueError(f"unknown dimension {dim!r}; expected one of {sorted(_DIMENSIONS)}")
    if not group_by:
        raise ValueError("group_by must name at least one dimension")

    categories: dict[tuple[str, ...], list] = {}
    errors: dict[tuple[str, ...], int] = {}
    unparseable: dict[tuple[str, ...], int] = {}
    for record in records:
        key = tuple(_DIMENSIONS[dim](record) for dim in group_by)
        categories.setdefault(key, [])
        errors.setdefault(key, 0)
        unparseable.setdefault(key, 0)
        if record.error is not None:
            errors[key] += 1
            if record.error == "unparseable_verdict":
                unparseable[key] += 1
            continue
        categories[key].append(record.category)

    table = ReportTable(group_by=group_by, baseline=baseline)
    for key in sorted(categories):
        counts = Counts.from_categories(categories[key])
        table.rows.append(
            ReportRow(key=key, counts=counts, metrics=compute_metrics(counts), errors=errors[key], unparseable=unparseable[key])
        )

    if baseline is not None:
        by_key = {row.key: row for row in table.rows}
        for row in table.rows:
            base_key = (baseline,) + row.key[1:]
            base = by_key.get(base_key)
            row.deltas = _deltas(row.metrics, base.metrics if base else None)
    return table


def _deltas(current: MetricsReport, base: MetricsReport | None) -> dict[str, float | None]:
    out: dict[str, float | None] = {}
    for name in ("precision_pct", "recall_pct", "f1_pct"):
        cur = getattr(current, name)
        ref = getattr(base, name) if base is not None else None
        out[name] = round(cur - ref, 2) if (cur is not None and ref is not None) else None
    return out


def _header(table: ReportTable) -> list[str]:
    header = list(table.group_by) + ["tp", "tn", "fp", "fn", "fpt", "precision", "recall", "f1", "errors"]
    if table.baseline is not None:
        header += ["d_precision", "d_recall", "d_f1"]
    return header


def _row_cells(table: ReportTable, row: ReportRow) -> list[str]:
    cells = list(row.key) + [
        str(row.counts.tp),
        str(row.counts.tn),
        str(row.counts.fp),
        str(row.counts.fn),
        str(row.counts.fpt),
        format_pct(row.metrics.precision_pct),
        format_pct(row.metrics.recall_pct),
        format_pct(row.metrics.f1_pct),
        str(row.errors),
    ]
    if table.baseline is not None:
        deltas = row.deltas or {}
        for name in ("precision_pct", "recall_pct", "f1_pct"):
            value = deltas.get(name)
            cells.append(format_pct(value) if value is None else f"{value:+.2f}")
    return cells


def render_text(table: ReportTable) -> str:
    header = _header(table)
    body = [_row_cells(table, row) for row in table.rows]
    widths = [max(len(header[i]), *(len(r[i]) for r in body)) if body else len(header[i]) for i in range(len(header))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    lines.append("  ".join("-" * w for w in widths))
    for cells in body:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(cells)))
    return "\n".join(lines)


def render_csv(table: ReportTable) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(_header(table))
    for row in table.rows:
        writer.writerow(_row_cells(table, row))
    return buffer.getvalue()
