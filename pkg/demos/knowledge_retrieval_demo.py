#!/usr/bin/env python3
"""Walk through the two knowledge-retrieval modes, fully offline.

Builds a small store of past-vulnerability reports, summarizes them with a
scripted mock model, embeds both views, and then retrieves knowledge for a
new target function both ways: raw (code-similarity, report-text payload)
and summarized (functionality-similarity, KeyConcept payload).
"""

import tempfile

from vulneval import HashEmbedder, KnowledgeBase, LlmGateway, LlmHandle, MockBackend, TargetCase
from vulneval.knowledge import EmbedMode, RetrievalMode

REPORTS = [
    (
        "Duplicate entries in the swap path cause repeated conversions and fee loss.",
        "function _routerSwapFromPath(address[] memory path) internal { for (uint i; i < path.length; i++) { } }",
        "Functionality: Execute a token swap along a caller-supplied conversion path.",
        "KeyConcept: input arrays that reach asset-moving loops need duplicate-entry validation, "
        "otherwise repeated elements trigger redundant conversions whose fees are lost.",
    ),
    (
        "Swap ratio assumes both oracles report 18 decimals; mixed-decimal pairs misprice swaps.",
        "function getSwapRatio(address pair) internal view returns (uint256) { return priceOf(pair) * 1e18; }",
        "Functionality: Calculate the exchange ratio between two pooled tokens from oracle prices.",
        "KeyConcept: incorrect handling of decimal precision while combining prices from oracles "
        "with different decimals misprices conversions.",
    ),
    (
        "LP minting uses the smaller token proportion, so imbalanced deposits burn value.",
        "function mintShares(uint256 amount0, uint256 amount1) internal returns (uint256) { return min(amount0, amount1); }",
        "Functionality: Mint liquidity-provider shares for a two-token deposit.",
        "KeyConcept: liquidity added in proportions that differ from the existing pool is valued "
        "at the smaller proportion, silently forfeiting the excess.",
    ),
]


def main() -> None:
    backend = MockBackend()
    gateway = LlmGateway(backend, backoff_base=0)
    summarizer = LlmHandle(provider_id="mock", model_id="mock-summarizer")

    with tempfile.TemporaryDirectory() as directory:
        kb = KnowledgeBase(directory)
        print(f"== ingesting {len(REPORTS)} audit reports ==")
        for report, code, functionality, concept in REPORTS:
            item = kb.ingest_report(report, code, "solidity")
            backend.push(functionality)
            backend.push(concept)
            item = kb.summarize_item(item, summarizer, gateway)
            print(f"  {item.id}: {item.functionality[:60]}...")

        embedder = HashEmbedder(dimension=16)
        kb.embed_items(embedder, EmbedMode.CODE)
        kb.embed_items(embedder, EmbedMode.FUNCTIONALITY)
        print("\n== stores built (code + functionality), dimension 16 ==")

        target = TargetCase(
            id="target",
            language="solidity",
            code=(
                "function zapAndSwap(address[] calldata route, uint256 amountIn) external {\n"
                "    for (uint256 i = 0; i + 1 < route.length; i++) { }\n"
                "}"
            ),
            ground_truth_vulnerable=False,
            functionality_summary="Execute a token swap along a caller-supplied conversion path.",
        )

        print("\n== raw mode: query by code, payload is the report text ==")
        for result in kb.retrieve_for_case(target, RetrievalMode.RAW, k=3):
            print(f"  #{result.rank} score={result.score:+.3f} {result.payload[:70]}")

        print("\n== summarized mode: query by functionality, payload is the KeyConcept ==")
        for result in kb.retrieve_for_case(target, RetrievalMode.SUMMARIZED, k=3):
            print(f"  #{result.rank} score={result.score:+.3f} {result.payload[:70]}")


if __name__ == "__main__":
    main()
