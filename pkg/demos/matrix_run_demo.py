#!/usr/bin/env python3
"""Plan and execute a small scenario matrix end to end with mock backends.

Shows the cell expansion (none-mode repeats vs retrieval ranks), the
resumable run log, and the grouped report with deltas against the
no-knowledge baseline.
"""

import tempfile
from pathlib import Path

from vulneval import (
    HashEmbedder,
    KnowledgeBase,
    KnowledgeItem,
    LlmGateway,
    LlmHandle,
    MockBackend,
    ScenarioMatrix,
    TargetCase,
    TrialRunner,
    plan,
    render_text,
    report,
)
from vulneval.knowledge import EmbedMode
from vulneval.runner import RunLog

CASES = [
    TargetCase(
        id="vuln-split",
        language="solidity",
        code="function splitDeposit(uint256 amountIn) internal { uint256 half = amountIn / 2; }",
        ground_truth_vulnerable=True,
        ground_truth_type="funding allocation error",
        functionality_summary="Split a deposit between two pool legs.",
    ),
    TargetCase(
        id="clean-quote",
        language="solidity",
        code="function quoteFee(uint256 amount) internal pure returns (uint256) { return amount / 100; }",
        ground_truth_vulnerable=False,
        functionality_summary="Quote the protocol fee for an amount.",
    ),
]


def build_runner(tmp: Path) -> tuple[TrialRunner, MockBackend]:
    backend = MockBackend(default_response="No. Reason: no issue found by the mock.")
    # script one cell: the vulnerable case, own-knowledge prompt, both schemes
    from vulneval import KnowledgeMode, PromptScheme, Scheme, assemble

    for scheme in (Scheme.RAW, Scheme.COT):
        bundle = assemble(CASES[0], PromptScheme(KnowledgeMode.NONE, scheme, False))
        backend.script(bundle.fingerprint, "Yes. Type: funding allocation error. Reason: assumes 1:1 reserves.")
    kb = KnowledgeBase(tmp / "kb")
    for i in range(3):
        kb.add(
            KnowledgeItem(
                id=f"ki-{i}",
                language="solidity",
                report_text=f"Report {i}: imbalanced liquidity provision loses tokens.",
                vulnerable_code=f"function addLiq{i}() internal {{ }}",
                functionality=f"Provide liquidity variant {i}.",
                key_concept=f"KeyConcept: deposit proportions must match pool reserves ({i})",
            )
        )
    embedder = HashEmbedder(8)
    kb.embed_items(embedder, EmbedMode.CODE)
    kb.embed_items(embedder, EmbedMode.FUNCTIONALITY)
    runner = TrialRunner(LlmGateway(backend, backoff_base=0), knowledge_base=kb)
    return runner, backend


def main() -> None:
    matrix = ScenarioMatrix(cases=CASES, contexts=(False,), k=3, none_repeats=3)
    specs = plan(matrix)
    executions = sum(s.repeats for s in specs)
    print(f"matrix: {len(CASES)} cases -> {matrix.scenario_count} scenarios, {len(specs)} trials, {executions} executions")
    print("  per cell: none-mode plans 1 trial x 3 repeats; raw/summarized plan ranks 1..3")

    with tempfile.TemporaryDirectory() as raw_tmp:
        tmp = Path(raw_tmp)
        runner, backend = build_runner(tmp)
        model = LlmHandle(provider_id="mock", model_id="demo-model")
        run_log = RunLog(tmp / "run")
        records = runner.execute(specs, model, CASES, run_log=run_log, matrix_config={"demo": True})
        print(f"\nexecuted {len(records)} records with {backend.call_count} model calls")

        rerun = runner.execute(specs, model, CASES, run_log=run_log, matrix_config={"demo": True})
        print(f"re-run on the same log: {len(rerun)} new records, {backend.call_count} total calls (resumption)")

        table = report(run_log.load_records(), ["knowledge", "scheme"], baseline="none")
        print("\n== grouped report (baseline: none) ==")
        print(render_text(table))


if __name__ == "__main__":
    main()
