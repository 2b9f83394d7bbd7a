from __future__ import annotations

from itertools import product

import pytest

from vulneval.annotate import (
    AnnotatedOutcome,
    Category,
    ClassificationContractError,
    ExtractionMethod,
    UnparseableVerdictError,
    Verdict,
    classify,
    extract_verdict,
    match_type,
    parse_structured_verdict,
)
from vulneval.gateway import ChatExchange, LlmGateway, LlmHandle, MockBackend
from vulneval import prompts

ANNOTATOR = LlmHandle(provider_id="mock", model_id="annotator", supports_tools=True)


def _exchange(text: str) -> ChatExchange:
    return ChatExchange(bundle=prompts.make_bundle("q"), response_text=text)


def test_structured_extraction() -> None:
    verdict = extract_verdict(_exchange("Yes. Type: reentrancy. Reason: external call before state update."))
    assert verdict.says_vulnerable is True
    assert verdict.claimed_type == "reentrancy"
    assert verdict.reason == "external call before state update."
    assert verdict.extraction_method is ExtractionMethod.STRUCTURED


def test_structured_no_verdict() -> None:
    verdict = extract_verdict(_exchange("No. The code correctly checks bounds."))
    assert verdict.says_vulnerable is False
    assert verdict.extraction_method is ExtractionMethod.STRUCTURED


def test_empty_response_rejected() -> None:
    with pytest.raises(ValueError):
        extract_verdict(_exchange("   "))


def test_yes_without_type_needs_annotator() -> None:
    assert parse_structured_verdict("| vulnerable | yes | something is off") is None


def test_llm_assisted_extraction() -> None:
    backend = MockBackend()
    gateway = LlmGateway(backend, backoff_base=0)
    prose = "The function aggregates totals in a way that can wrap around silently."
    exchange = _exchange(prose)
    from vulneval.annotate import _report_registry

    registry = _report_registry({})
    bundle = prompts.make_bundle(prompts.REFORMAT_PROMPT + "\n\n" + prose, tool_schemas=registry.schemas())
    backend.script(
        bundle.fingerprint,
        [[("report", {"vulnerable": True, "vulnerability_type": "integer overflow", "description": "wraps"})], "done"],
    )
    verdict = extract_verdict(exchange, annotator=ANNOTATOR, gateway=gateway)
    assert verdict.says_vulnerable is True
    assert verdict.claimed_type == "integer overflow"
    assert verdict.extraction_method is ExtractionMethod.LLM_ASSISTED


def test_both_paths_fail() -> None:
    backend = MockBackend()
    gateway = LlmGateway(backend, backoff_base=0)
    prose = "Inscrutable prose with neither answer word."
    from vulneval.annotate import _report_registry

    registry = _report_registry({})
    bundle = prompts.make_bundle(prompts.REFORMAT_PROMPT + "\n\n" + prose, tool_schemas=registry.schemas())
    backend.script(bundle.fingerprint, "still free prose, never calls the tool")
    with pytest.raises(UnparseableVerdictError):
        extract_verdict(_exchange(prose), annotator=ANNOTATOR, gateway=gateway)


def _verdict(claimed: str | None, says: bool = True) -> Verdict:
    return Verdict(
        says_vulnerable=says,
        claimed_type=claimed,
        reason="because",
        extraction_method=ExtractionMethod.STRUCTURED,
    )


def test_match_type_exact_short_circuit() -> None:
    backend = MockBackend()  # no scripts: any LLM call would raise
    gateway = LlmGateway(backend, backoff_base=0)
    assert match_type("reentrancy", _verdict("Reentrancy"), annotator=ANNOTATOR, gateway=gateway) is True
    assert backend.call_count == 0


def test_match_type_any_named_type() -> None:
    assert match_type("precision loss", _verdict("rounding error, precision loss")) is True


def test_match_type_annotator_yes() -> None:
    backend = MockBackend()
    gateway = LlmGateway(backend, backoff_base=0)
    verdict = _verdict("rounding error")
    from vulneval.annotate import _match_registry

    registry = _match_registry({})
    user_text = prompts.TYPE_MATCH_PROMPT.replace("{Ground Truth}", "precision loss").replace(
        "{Output}", f"{verdict.claimed_type}. {verdict.reason}"
    )
    bundle = prompts.make_bundle(user_text, tool_schemas=registry.schemas())
    backend.script(bundle.fingerprint, [[("report", {"match": True})], "done"])
    assert match_type("precision loss", verdict, annotator=ANNOTATOR, gateway=gateway) is True


def test_match_type_annotator_no() -> None:
    backend = MockBackend()
    gateway = LlmGateway(backend, backoff_base=0)
    verdict = _verdict("integer overflow")
    from vulneval.annotate import _match_registry

    registry = _match_registry({})
    user_text = prompts.TYPE_MATCH_PROMPT.replace("{Ground Truth}", "reentrancy").replace(
        "{Output}", f"{verdict.claimed_type}. {verdict.reason}"
    )
    bundle = prompts.make_bundle(user_text, tool_schemas=registry.schemas())
    backend.script(bundle.fingerprint, [[("report", {"match": False})], "done"])
    assert match_type("reentrancy", verdict, annotator=ANNOTATOR, gateway=gateway) is False


def test_match_type_requires_vulnerable_verdict() -> None:
    with pytest.raises(ValueError):
        match_type("reentrancy", _verdict("reentrancy", says=False))


def test_classify_five_definitions() -> None:
    yes = _verdict("reentrancy")
    no = _verdict(None, says=False)
    assert classify(True, yes, True).category is Category.TP
    assert classify(True, yes, False).category is Category.FPT
    assert classify(True, no).category is Category.FN
    assert classify(False, yes).category is Category.FP
    assert classify(False, no).category is Category.TN


def test_classify_type_match_presence() -> None:
    assert classify(True, _verdict("x"), True).type_match is True
    assert classify(True, _verdict("x"), False).type_match is False
    assert classify(True, _verdict(None, says=False)).type_match is None
    assert classify(False, _verdict("x")).type_match is None


def test_classify_contract_errors() -> None:
    with pytest.raises(ClassificationContractError):
        classify(False, _verdict("x"), True)  # clean case cannot carry a match
    with pytest.raises(ClassificationContractError):
        classify(True, _verdict("x"))  # vulnerable+yes requires a match
    with pytest.raises(ClassificationContractError):
        classify(True, _verdict(None, says=False), False)


def test_taxonomy_exhaustive_and_exclusive() -> None:
    # Every (ground truth, verdict, type_match) combination hits exactly one
    # category or a contract error; never zero, never two.
    hit = {category: 0 for category in Category}
    for gt, says, type_match in product([True, False], [True, False], [True, False, None]):
        verdict = _verdict("t" if says else None, says=says)
        valid = (gt and says) == (type_match is not None)
        if not valid:
            with pytest.raises(ClassificationContractError):
                classify(gt, verdict, type_match)
            continue
        outcome = classify(gt, verdict, type_match)
        assert isinstance(outcome, AnnotatedOutcome)
        hit[outcome.category] += 1
    assert all(count >= 1 for count in hit.values())
    assert sum(hit.values()) == 5  # exactly one valid combination per category


def test_outcome_invariants_enforced() -> None:
    with pytest.raises(ClassificationContractError):
        AnnotatedOutcome(Category.TP, type_match=False)
    with pytest.raises(ClassificationContractError):
        AnnotatedOutcome(Category.TN, type_match=True)
