from __future__ import annotations

import json

import pytest

from conftest import CORPUS_DIRS
from vulneval.cli import main
from vulneval.lexer import Language
from vulneval.runner import TargetCase, save_cases


@pytest.fixture
def mock_provider(tmp_path):
    path = tmp_path / "mock-provider.json"
    path.write_text(
        json.dumps(
            {
                "provider_id": "mock",
                "model_id": "mock-model",
                "default_response": "No. Reason: offline mock.",
            }
        )
    )
    return path


@pytest.fixture
def cases_file(tmp_path):
    cases = [
        TargetCase(
            id="vuln-1",
            language=Language.SOLIDITY,
            code="function _zap(uint256 x) internal { }",
            ground_truth_vulnerable=True,
            ground_truth_type="funding allocation error",
            functionality_summary="Split input between pool legs.",
        ),
        TargetCase(
            id="clean-1",
            language=Language.SOLIDITY,
            code="function swapExact(uint256 a) internal { }",
            ground_truth_vulnerable=False,
            functionality_summary="Swap an exact amount.",
        ),
    ]
    path = tmp_path / "cases.jsonl"
    save_cases(cases, path)
    return path


def _build_store(tmp_path, capsys) -> str:
    store = str(tmp_path / "kb")
    report = tmp_path / "report.txt"
    report.write_text("Duplicate path entries cause fee loss.")
    code = tmp_path / "code.sol"
    code.write_text("function _routerSwapFromPath(address[] memory p) internal { }")
    assert main(["kb", "ingest", "--store", store, "--lang", "solidity", "--report", str(report), "--code", str(code)]) == 0
    capsys.readouterr()
    assert main(["kb", "embed", "--store", store, "--mode", "code", "--dimension", "8"]) == 0
    capsys.readouterr()
    return store


def test_kb_ingest_embed_query(tmp_path, capsys) -> None:
    store = _build_store(tmp_path, capsys)
    query_code = tmp_path / "query.sol"
    query_code.write_text("function swapAll(address[] memory route) external { }")
    assert main(["kb", "query", "--store", store, "--mode", "raw", "-k", "3", "--code-file", str(query_code), "--dimension", "8"]) == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.strip().splitlines()]
    assert len(lines) == 1  # store holds a single item
    assert lines[0]["rank"] == 1
    assert "fee loss" in lines[0]["payload"]


def test_kb_summarize_with_mock_provider(tmp_path, capsys) -> None:
    store = _build_store(tmp_path, capsys)
    provider = tmp_path / "summarizer.json"
    provider.write_text(
        json.dumps(
            {
                "provider_id": "mock",
                "model_id": "mock-model",
                "default_response": "Functionality: Swap tokens along a path. KeyConcept: duplicate path entries repeat fee-bearing conversions.",
            }
        )
    )
    assert main(["kb", "summarize", "--store", store, "--provider", str(provider)]) == 0
    out = capsys.readouterr().out
    assert "summarized" in out
    from vulneval.knowledge import KnowledgeBase

    kb = KnowledgeBase(store)
    item = next(iter(kb.items.values()))
    assert item.key_concept.startswith("KeyConcept:")


def test_ctx_extract_writes_graph(tmp_path, capsys) -> None:
    out = tmp_path / "graph.jsonl"
    src = str(CORPUS_DIRS[Language.SOLIDITY])
    assert main(["ctx", "extract", "--lang", "solidity", "--src", src, "--out", str(out)]) == 0
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    assert {"caller": "ZapRouter._zap", "callee": "ZapRouter.addLiquidity"} in rows
    assert (tmp_path / "graph.jsonl.functions").exists()


def test_prompt_render_cell(tmp_path, cases_file, capsys) -> None:
    assert (
        main(
            [
                "prompt",
                "render",
                "--cell",
                "summarized,cot,noctx",
                "--case-file",
                str(cases_file),
                "--case",
                "vuln-1",
                "--knowledge-text",
                "KeyConcept: imbalanced liquidity provision",
            ]
        )
        == 0
    )
    out = capsys.readouterr().out
    assert out.startswith("# fingerprint: ")
    assert "Now I provide you with a vulnerability knowledge" in out
    assert "review the given code step by step" in out


def test_run_and_report(tmp_path, cases_file, mock_provider, capsys) -> None:
    matrix = tmp_path / "matrix.json"
    matrix.write_text(
        json.dumps(
            {
                "cases": str(cases_file),
                "knowledge_modes": ["none"],
                "contexts": ["without"],
                "schemes": ["raw_scheme", "cot"],
                "none_repeats": 2,
            }
        )
    )
    out_dir = tmp_path / "run"
    assert main(["run", "--matrix", str(matrix), "--model", str(mock_provider), "--out", str(out_dir)]) == 0
    summary = capsys.readouterr().out
    assert "executed 8 trials (0 errors)" in summary

    assert main(["report", "--runs", str(out_dir), "--group-by", "knowledge,scheme", "--baseline", "none"]) == 0
    text = capsys.readouterr().out
    assert "knowledge" in text and "cot" in text

    assert main(["report", "--runs", str(out_dir), "--group-by", "scheme", "--csv"]) == 0
    csv_text = capsys.readouterr().out
    assert csv_text.splitlines()[0].startswith("scheme,")


def test_run_resumes_without_new_calls(tmp_path, cases_file, mock_provider, capsys) -> None:
    matrix = tmp_path / "matrix.json"
    matrix.write_text(
        json.dumps(
            {
                "cases": str(cases_file),
                "knowledge_modes": ["none"],
                "contexts": ["without"],
                "schemes": ["raw_scheme"],
                "none_repeats": 1,
            }
        )
    )
    out_dir = tmp_path / "run"
    assert main(["run", "--matrix", str(matrix), "--model", str(mock_provider), "--out", str(out_dir)]) == 0
    capsys.readouterr()
    assert main(["run", "--matrix", str(matrix), "--model", str(mock_provider), "--out", str(out_dir)]) == 0
    assert "executed 0 trials" in capsys.readouterr().out


def test_bench_synth_cli(tmp_path, capsys) -> None:
    provider = tmp_path / "provider.json"
    provider.write_text(
        json.dumps(
            {
                "provider_id": "mock",
                "model_id": "mock-model",
                "default_response": "```java\nint f() { return 1; }\n```\n```java\nint g() { return 2; }\n```",
            }
        )
    )
    cwe = tmp_path / "cwe.jsonl"
    cwe.write_text(json.dumps({"cwe_id": "CWE-190", "language": "java", "description": "Integer overflow."}) + "\n")
    store = tmp_path / "synth-kb"
    assert main(["bench", "synth", "--cwe", str(cwe), "--lang", "java", "-n", "10", "--provider", str(provider), "--out", str(store)]) == 0
    out = capsys.readouterr().out
    assert "CWE-190: 2 items, 8 skipped" in out
    assert (store / "knowledge.jsonl").exists()


def test_bench_sanitize_cli(tmp_path, cases_file, capsys) -> None:
    provider = tmp_path / "provider.json"
    provider.write_text(
        json.dumps(
            {
                "provider_id": "mock",
                "model_id": "mock-model",
                "default_response": json.dumps({"renames": {"_zap": "splitDeposit", "swapExact": "tradeFixed"}}),
            }
        )
    )
    out = tmp_path / "sanitized.jsonl"
    assert main(["bench", "sanitize", "--cases", str(cases_file), "--provider", str(provider), "--out", str(out)]) == 0
    text = out.read_text()
    assert "splitDeposit" in text
    assert "_zap" not in text
