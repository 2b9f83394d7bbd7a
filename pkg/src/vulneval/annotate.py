"""Turn raw model prose into verdicts and five-way outcome categories.

A cheap local parse runs first; only responses it cannot read are sent to
the annotator model with the reformatting prompt and a report tool. Which
path produced a verdict is recorded per trial so downstream analysis can
tell them apart.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from . import prompts
from .gateway import ChatExchange, LlmGateway, LlmHandle, ToolRegistry


class ExtractionMethod(str, Enum):
    STRUCTURED = "structured"
    LLM_ASSISTED = "llm_assisted"


class Category(str, Enum):
    TP = "TP"
    TN = "TN"
    FN = "FN"
    FP = "FP"
    FPT = "FPt"


class UnparseableVerdictError(ValueError):
    """Neither the local parser nor the annotator produced a verdict."""


class ClassificationContractError(ValueError):
    """classify() received an inconsistent input combination."""


@dataclass(frozen=True)
class Verdict:
    says_vulnerable: bool
    claimed_type: str | None
    reason: str
    extraction_method: ExtractionMethod
    low_confidence: bool = False


@dataclass(frozen=True)
class AnnotatedOutcome:
    category: Category
    type_match: bool | None = None

    def __post_init__(self) -> None:
        if self.category is Category.TP and self.type_match is not True:
            raise ClassificationContractError("TP requires type_match=True")
        if self.category is Category.FPT and self.type_match is not False:
            raise ClassificationContractError("FPt requires type_match=False")
        if self.category in (Category.TN, Category.FN, Category.FP) and self.type_match is not None:
            raise ClassificationContractError(f"{self.category.value} must not carry type_match")


_YES_NO = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_TYPE_LINE = re.compile(r"\btype(?:\s+of\s+vulnerability)?\s*[:\-]\s*([^\n.;]+)", re.IGNORECASE)
_REASON_LINE = re.compile(r"\breason\s*[:\-]\s*(.+)", re.IGNORECASE | re.DOTALL)


def _clean_fragment(text: str) -> str:
    return text.strip().strip("*_` ").strip()


def parse_structured_verdict(text: str) -> Verdict | None:
    """Local parse of a well-formed answer; None when the shape is missing.

    A "yes" without any recognizable type line is treated as unparsed so
    the annotator gets a chance to extract the type.
    """
    answer = _YES_NO.search(text)
    if answer is None:
        return None
    says_vulnerable = answer.group(1).lower() == "yes"
    type_match = _TYPE_LINE.search(text)
    claimed = _clean_fragment(type_match.group(1)) if type_match else None
    reason_match = _REASON_LINE.search(text)
    reason = _clean_fragment(reason_match.group(1)) if reason_match else text.strip()
    if says_vulnerable and not claimed:
        return None
    return Verdict(
        says_vulnerable=says_vulnerable,
        claimed_type=claimed if says_vulnerable else claimed,
        reason=reason,
        extraction_method=ExtractionMethod.STRUCTURED,
    )


def _report_registry(captured: dict) -> ToolRegistry:
    registry = ToolRegistry()

    def report(**kwargs) -> str:
        captured.update(kwargs)
        return "recorded"

    registry.register(
        "report",
        "Report the extracted result.",
        {
            "vulnerable": {"type": "boolean"},
            "vulnerability_type": {"type": "string"},
            "description": {"type": "string"},
        },
        report,
    )
    return registry


def extract_verdict(exchange: ChatExchange, annotator: LlmHandle | None = None, gateway: LlmGateway | None = None) -> Verdict:
    """Structured parse first; fall back to the annotator's report tool."""
    if not exchange.response_text or not exchange.response_text.strip():
        raise ValueError("response_text is empty")
    verdict = parse_structured_verdict(exchange.response_text)
    if verdict is not None:
        return verdict
    if annotator is None or gateway is None:
        raise UnparseableVerdictError("local parse failed and no annotator is configured")

    captured: dict = {}
    registry = _report_registry(captured)
    bundle = prompts.make_bundle(
        prompts.REFORMAT_PROMPT + "\n\n" + exchange.response_text,
        tool_schemas=registry.schemas(),
    )
    reply = gateway.complete(annotator, bundle, tools=registry)
    report_calls = [c for c in reply.tool_calls if c.name == "report"]
    if report_calls:
        captured = report_calls[-1].args
    if "vulnerable" not in captured:
        raise UnparseableVerdictError("annotator did not call the report API")
    says = bool(captured["vulnerable"])
    claimed = captured.get("vulnerability_type") or None
    return Verdict(
        says_vulnerable=says,
        claimed_type=claimed if says else claimed,
        reason=str(captured.get("description", "")),
        extraction_method=ExtractionMethod.LLM_ASSISTED,
        low_confidence=says and not claimed,
    )


def _named_types(claimed: str) -> list[str]:
    return [part.strip().lower() for part in re.split(r"[,;/]| or ", claimed) if part.strip()]


def _match_registry(captured: dict) -> ToolRegistry:
    registry = ToolRegistry()

    def report(**kwargs) -> str:
        captured.update(kwargs)
        return "recorded"

    registry.register("report", "Report whether the description matches the ground truth.", {"match": {"type": "boolean"}}, report)
    return registry


def match_type(ground_truth: str, verdict: Verdict, annotator: LlmHandle | None = None, gateway: LlmGateway | None = None) -> bool:
    """Does the verdict describe the ground-truth vulnerability?

    Exact case-insensitive equality against any type the verdict names
    short-circuits without an LLM call; otherwise the annotator judges the
    description with the auditor prompt and the report tool.
    """
    if not verdict.says_vulnerable:
        raise ValueError("match_type requires a verdict that says vulnerable")
    truth = ground_truth.strip().lower()
    if verdict.claimed_type:
        if verdict.claimed_type.strip().lower() == truth:
            return True
        if truth in _named_types(verdict.claimed_type):
            return True
    if annotator is None or gateway is None:
        return False
    description = verdict.reason if not verdict.claimed_type else f"{verdict.claimed_type}. {verdict.reason}"
    user_text = prompts.TYPE_MATCH_PROMPT.replace("{Ground Truth}", ground_truth).replace("{Output}", description)
    captured: dict = {}
    registry = _match_registry(captured)
    reply = gateway.complete(annotator, prompts.make_bundle(user_text, tool_schemas=registry.schemas()), tools=registry)
    report_calls = [c for c in reply.tool_calls if c.name == "report"]
    if report_calls:
        captured = report_calls[-1].args
    if "match" in captured:
        return bool(captured["match"])
    answer = _YES_NO.search(reply.response_text or "")
    if answer is not None:
        return answer.group(1).lower() == "yes"
    raise UnparseableVerdictError("annotator reported no match result")


def classify(ground_truth_vulnerable: bool, verdict: Verdict, type_match: bool | None = None) -> AnnotatedOutcome:
    """Five-way outcome for one trial; exhaustive and exclusive.

    type_match must be supplied exactly when the case is vulnerable and
    the verdict says vulnerable, and never otherwise.
    """
    needs_match = ground_truth_vulnerable and verdict.says_vulnerable
    if needs_match and type_match is None:
        raise ClassificationContractError("type_match required for a vulnerable case flagged vulnerable")
    if not needs_match and type_match is not None:
        raise ClassificationContractError("type_match supplied for a combination that has none")
    if ground_truth_vulnerable:
        if verdict.says_vulnerable:
            return AnnotatedOutcome(Category.TP, True) if type_match else AnnotatedOutcome(Category.FPT, False)
        return AnnotatedOutcome(Category.FN)
    if verdict.says_vulnerable:
        return AnnotatedOutcome(Category.FP)
    return AnnotatedOutcome(Category.TN)
