#!/usr/bin/env python3
"""Benchmark-construction tooling: CWE synthesis and the leakage sanitizer.

The synthesis half scripts a mock model to emit fenced code snippets and
audit-style reports for one CWE entry. The sanitizer half renames every
identifier in a case from a proposed map, then proves the anonymized tree
shape survived and no original name leaked through.
"""

from vulneval import CweEntry, LlmGateway, LlmHandle, MockBackend, TargetCase, sanitize_case
from vulneval.benchkit import code_generation_bundle, report_generation_bundle, synthesize_knowledge
from vulneval.lexer import Language, anonymized_shape


def synthesis_walkthrough() -> None:
    backend = MockBackend()
    gateway = LlmGateway(backend, backoff_base=0)
    model = LlmHandle(provider_id="mock", model_id="mock-synth")
    entry = CweEntry(cwe_id="CWE-190", language=Language.JAVA, description="Integer overflow or wraparound.")

    snippets = [
        "int addQuantities(int a, int b) { return a + b; }",
        "long scalePrice(long price) { return price * 100; }",
    ]
    blocks = "\n".join(f"```java\n{s}\n```" for s in snippets)
    backend.script(code_generation_bundle(entry, 10).fingerprint, blocks)
    for snippet in snippets:
        backend.script(
            report_generation_bundle(entry, snippet).fingerprint,
            "1) Vulnerability Description: unchecked arithmetic can wrap. "
            "2) Vulnerable Code: see above. 3) Root Cause: no overflow guard. "
            "4) Impact: corrupted totals. 5) Mitigation: use checked math.",
        )

    result = synthesize_knowledge(entry, model, gateway, n=10)
    print(f"== synthesis for {entry.cwe_id}: {len(result.items)} items, {result.skipped} skipped ==")
    for item in result.items:
        print(f"  {item.id} [{item.source.value}] {item.vulnerable_code[:45]}...")


def sanitizer_walkthrough() -> None:
    case = TargetCase(
        id="demo-case",
        language=Language.SOLIDITY,
        code=(
            "contract Swapper {\n"
            "    // assumes 18 decimal precision\n"
            "    function getSwapRatio(uint256 price) public pure returns (uint256) {\n"
            "        uint256 scaled = price * 1e18;\n"
            "        return getSwapRatio(scaled / 2);\n"
            "    }\n"
            "}"
        ),
        ground_truth_vulnerable=True,
        ground_truth_type="precision loss",
    )
    proposal = {
        "renames": {
            "Swapper": "Quoter",
            "getSwapRatio": "quoteExchangeRate",
            "price": "inputValue",
            "scaled": "adjusted",
        },
        "comments": ["fixed-point scale is assumed, not checked"],
    }
    sanitized, mapping = sanitize_case(case, proposal=proposal)
    print("\n== sanitizer ==")
    print(f"renames applied: {mapping.renames}")
    print(f"comments rewritten: {mapping.comments_rewritten}")
    print(f"tree shape preserved: {anonymized_shape(sanitized.code) == anonymized_shape(case.code)}")
    print(f"originals surviving: {[n for n in mapping.renames if n in sanitized.code]}")
    print("\nsanitized code:\n" + sanitized.code)


if __name__ == "__main__":
    synthesis_walkthrough()
    sanitizer_walkthrough()
