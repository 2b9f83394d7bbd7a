"""Precision/recall/F1 over the five-way counts.

The wrong-type category appears in both denominators: flagging a real
vulnerability under the wrong name is simultaneously a false alarm (the
named vulnerability is not there) and a miss (the real one went
unreported), so

    precision = TP / (TP + FP + FPt)
    recall    = TP / (TP + FN + FPt)

Zero denominators yield an undefined flag (None), rendered as an em dash
in reports rather than a fake zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .annotate import Category

UNDEFINED_MARK = "—"


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0
    fpt: int = 0

    def __post_init__(self) -> None:
        for name in ("tp", "tn", "fp", "fn", "fpt"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn + self.fpt

    @classmethod
    def from_categories(cls, categories: Iterable[Category]) -> "Counts":
        tally = {c: 0 for c in Category}
        for category in categories:
            tally[Category(category)] += 1
        return cls(tp=tally[Category.TP], tn=tally[Category.TN], fp=tally[Category.FP], fn=tally[Category.FN], fpt=tally[Category.FPT])

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn, self.fpt + other.fpt)


@dataclass(frozen=True)
class MetricsReport:
    counts: Counts
    precision: float | None
    recall: float | None
    f1: float | None

    @property
    def precision_pct(self) -> float | None:
        return None if self.precision is None else round(100 * self.precision, 2)

    @property
    def recall_pct(self) -> float | None:
        return None if self.recall is None else round(100 * self.recall, 2)

    @property
    def f1_pct(self) -> float | None:
        return None if self.f1 is None else round(100 * self.f1, 2)


def format_pct(value: float | None) -> str:
    return UNDEFINED_MARK if value is None else f"{value:.2f}"


def compute_metrics(counts: Counts | tuple) -> MetricsReport:
    """Metrics for one count vector; accepts Counts or a (tp, tn, fp, fn, fpt) tuple."""
    if not isinstance(counts, Counts):
        counts = Counts(*counts)
    p_den = counts.tp + counts.fp + counts.fpt
    r_den = counts.tp + counts.fn + counts.fpt
    precision = counts.tp / p_den if p_den > 0 else None
    recall = counts.tp / r_den if r_den > 0 else None
    f1 = None
    if precision is not None and recall is not None and (precision + recall) > 0:
        f1 = 2 * precision * recall / (precision + recall)
    return MetricsReport(counts=counts, precision=precision, recall=recall, f1=f1)


@dataclass(frozen=True)
class ReferenceRow:
    """One published result row: configuration, counts, and printed metrics.

    The columnar file format is tab-separated with a leading '#' header:
    language, variant, model, knowledge, context, scheme, the five counts
    (tp fp tn fn fpt), then precision/recall/f1 as printed percentages.
    """

    language: str
    variant: str
    model: str
    knowledge: str
    context: str
    scheme: str
    counts: Counts
    precision_pct: float
    recall_pct: float
    f1_pct: float


def read_counts_table(path: str | Path) -> list[ReferenceRow]:
    rows: list[ReferenceRow] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 14:
            raise ValueError(f"expected 14 columns, got {len(cols)}: {line!r}")
        language, variant, model, knowledge, context, scheme = cols[:6]
        tp, fp, tn, fn, fpt = (int(x) for x in cols[6:11])
        precision, recall, f1 = (float(x) for x in cols[11:14])
        rows.append(
            ReferenceRow(
                language=language,
                variant=variant,
                model=model,
                knowledge=knowledge,
                context=context,
                scheme=scheme,
                counts=Counts(tp=tp, tn=tn, fp=fp, fn=fn, fpt=fpt),
                precision_pct=precision,
                recall_pct=recall,
                f1_pct=f1,
            )
        )
    return rows
