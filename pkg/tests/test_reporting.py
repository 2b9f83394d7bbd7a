from __future__ import annotations

import pytest

from vulneval.metrics import Counts
from vulneval.reporting import render_csv, render_text, report
from vulneval.runner import TrialRecord


def _record(knowledge: str, context: bool, category: str | None, error: str | None = None, scheme: str = "raw_scheme") -> TrialRecord:
    return TrialRecord(
        case_id="c",
        language="solidity",
        knowledge_mode=knowledge,
        rank=0 if knowledge == "none" else 1,
        repeat=1,
        include_context=context,
        scheme=scheme,
        model_id="mock-model",
        category=category,
        error=error,
    )


def _fixture_records() -> list[TrialRecord]:
    records = []
    for knowledge in ("none", "raw", "summarized"):
        for context in (True, False):
            records.append(_record(knowledge, context, "TP"))
            records.append(_record(knowledge, context, "TN"))
            records.append(_record(knowledge, context, "FPt"))
    return records


def test_group_by_knowledge_context_six_rows() -> None:
    table = report(_fixture_records(), ["knowledge", "context"])
    assert len(table.rows) == 6
    keys = [row.key for row in table.rows]
    assert keys == sorted(keys)
    assert all(row.counts == Counts(tp=1, tn=1, fpt=1) for row in table.rows)


def test_single_group_conserves_counts() -> None:
    records = _fixture_records()
    table = report(records, ["model"])
    assert len(table.rows) == 1
    row = table.rows[0]
    assert row.counts.total() == len(records)


def test_error_records_excluded_but_tallied() -> None:
    records = _fixture_records() + [
        _record("none", True, None, error="transport"),
        _record("none", True, None, error="unparseable_verdict"),
    ]
    table = report(records, ["knowledge"])
    none_row = next(row for row in table.rows if row.key == ("none",))
    assert none_row.counts.total() == 6  # errors not counted
    assert none_row.errors == 2
    assert none_row.unparseable == 1
    total_counted = sum(row.counts.total() for row in table.rows)
    assert total_counted == sum(1 for r in records if r.error is None)


def test_baseline_deltas_zero_for_baseline_group() -> None:
    table = report(_fixture_records(), ["knowledge", "context"], baseline="none")
    for row in table.rows:
        assert row.deltas is not None
        if row.key[0] == "none":
            assert row.deltas == {"precision_pct": 0.0, "recall_pct": 0.0, "f1_pct": 0.0}


def test_baseline_deltas_signed() -> None:
    records = [
        _record("none", True, "FPt"),
        _record("none", True, "FN"),
        _record("raw", True, "TP"),
        _record("raw", True, "TN"),
    ]
    table = report(records, ["knowledge", "context"], baseline="none")
    raw_row = next(row for row in table.rows if row.key[0] == "raw")
    assert raw_row.deltas["precision_pct"] == pytest.approx(100.0)
    assert raw_row.deltas["recall_pct"] == pytest.approx(100.0)


def test_unknown_dimension_rejected() -> None:
    with pytest.raises(ValueError):
        report(_fixture_records(), ["severity"])
    with pytest.raises(ValueError):
        report(_fixture_records(), [])


def test_render_text_aligned() -> None:
    text = render_text(report(_fixture_records(), ["knowledge", "context"]))
    lines = text.splitlines()
    assert lines[0].startswith("knowledge")
    assert len(lines) == 2 + 6
    assert "50.00" in text  # P = 1/(1+0+1)


def test_render_csv_parses_back() -> None:
    import csv
    import io

    table = report(_fixture_records(), ["knowledge", "context"], baseline="none")
    rows = list(csv.reader(io.StringIO(render_csv(table))))
    assert rows[0][:2] == ["knowledge", "context"]
    assert len(rows) == 7
    assert rows[0][-1] == "d_f1"


def test_undefined_metrics_rendered_as_dash() -> None:
    table = report([_record("none", True, "TN")], ["knowledge"])
    text = render_text(table)
    assert "—" in text
