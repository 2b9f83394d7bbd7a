"""Prompt grid assembly: knowledge prefix x output instruction x scheme.

The template strings below are normative and pinned byte-for-byte by
golden-file tests (including the "pls" in the raw-knowledge prefix); any
edit here must update the goldens deliberately. Grid cells differ only in
the factor under study: the chain-of-thought variant of a cell is the
plain variant plus the step-by-step block, nothing else.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

from .context import ContextBundle, serialize_bundle

if TYPE_CHECKING:
    from .knowledge import RetrievedKnowledge

PREFIX_OWN_KNOWLEDGE = (
    "As a large language model, you have been trained with extensive knowledge of "
    "vulnerabilities. Based on this past knowledge, please evaluate whether the given "
    "smart contract code is vulnerable."
)

PREFIX_RAW_KNOWLEDGE = (
    "Now I provide you with a vulnerability report as follows: {report}. "
    "Based on this given vulnerability report, pls evaluate whether the given code is vulnerable."
)

PREFIX_SUMMARIZED_KNOWLEDGE = (
    "Now I provide you with a vulnerability knowledge that {knowl}. "
    "Based on this given vulnerability knowledge, evaluate whether the given code is vulnerable."
)

OUTPUT_RESULT = (
    "In your answer, you should at least include three parts: yes or no, type of "
    "vulnerability (answer only one most likely vulnerability type if yes), and the "
    "reason for your answer."
)

SCHEME_RAW_TOOLS = "Note that if you need more information, please call the corresponding functions."

SCHEME_COT = (
    "Note that during your reasoning, you should review the given code step by step and "
    "finally determine whether it is vulnerable. For example, you can first summarize the "
    "functionality of the given code, then analyze whether there is any error that causes "
    "the vulnerability. Lastly, provide me with the result."
)

FUNCTIONALITY_PROMPT = (
    "Given the following vulnerability description, following the task:\n"
    "1. Describe the functionality implemented in the given code. This should be answered "
    "under the section \"Functionality:\" and written in the imperative mood, e.g., "
    "\"Calculate the price of a token.\" Your response should be concise and limited to one "
    "paragraph and within 40-50 words.\n"
    "2. Remember, do not contain any variable or function or experssion name in the "
    "Functionality Result, focus on the functionality or business logic itself."
)

KEY_CONCEPT_PROMPT = (
    "Please provide a comprehensive and clear abstract that identifies the fundamental "
    "mechanics behind a specific vulnerability, ensuring that this knowledge can be applied "
    "universally to detect similar vulnerabilities across different scenarios. Your abstract "
    "should:\n"
    "1. Avoid mentioning any moderation tools or systems.\n"
    "2. Exclude specific code references, such as function or variable names, while providing "
    "a general yet precise technical description.\n"
    "3. Use the format: KeyConcept:xxxx, placing the foundational explanation of the "
    "vulnerability inside the brackets.\n"
    "4. Guarantee that one can understand and identify the vulnerability using only the "
    "information from the VulnerableCode and this KeyConcept.\n"
    "5. Strive for clarity and precision in your description, rather than brevity.\n"
    "6. Break down the vulnerability to its core elements, ensuring all terms are explained "
    "and there are no ambiguities.\n"
    "By following these guidelines, ensure that your abstract remains general and applicable "
    "to various contexts, without relying on specific code samples or detailed case-specific "
    "information."
)

REFORMAT_PROMPT = (
    "I will give you some text generated by another LLM. But the format may be wrong. "
    "You must call the report API to report the result."
)

TYPE_MATCH_PROMPT = (
    "You are a senior code auditor. Now I will give you a ground truth of vulnerability, "
    "and a description written by an auditor. You need to help me identify whether the "
    "description given by the auditor contains a vulnerability in the ground truth. "
    "Please report the result using the function call.\n"
    "Ground truth: \n{Ground Truth}\n"
    "Description: \n{Output}"
)

CODE_GENERATOR_PROMPT = (
    "[%CWE_INFO%]\n\n"
    "Base on the given CWE information, please help me generate 10 different vulnerable code "
    "snippets in [%LANGUAGE%] language. Each code snippet should be different from each other, "
    "and trying to cover as many as business logic as possible. You do not need to generate "
    "the description of the vulnerabilities, only the code is needed. For each code snippet, "
    "please include it in a code block, which starts with \"```\" and ends with \"```\"."
)

REPORT_GENERATOR_PROMPT = (
    "[%CODE%]\n\n"
    "The above code has [%CWE_TYPE%] vulnerability. Please help me generate a vulnerability "
    "report for it. The report should include the following sections: 1) Vulnerability "
    "Description, 2) Vulnerable Code, 3) Root Cause, 4) Impact, 5) Mitigation. Each section "
    "should be clearly labeled and contain relevant information. The report should be concise "
    "and easy to understand."
)

TARGET_CODE_HEADING = "Target code:"
CONTEXT_HEADING = "Additional context:"


class KnowledgeMode(str, Enum):
    NONE = "none"
    RAW = "raw"
    SUMMARIZED = "summarized"


class Scheme(str, Enum):
    RAW = "raw_scheme"
    COT = "cot"


class AssemblyError(ValueError):
    """A template placeholder survived substitution."""


@dataclass(frozen=True)
class PromptScheme:
    knowledge_mode: KnowledgeMode
    scheme: Scheme
    include_context: bool

    def label(self) -> str:
        ctx = "ctx" if self.include_context else "noctx"
        return f"{self.knowledge_mode.value}-{self.scheme.value}-{ctx}"


def all_cells() -> list[PromptScheme]:
    """The full 3x2x2 grid, in canonical order (12 cells)."""
    return [
        PromptScheme(mode, scheme, ctx)
        for mode in KnowledgeMode
        for scheme in Scheme
        for ctx in (False, True)
    ]


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    tool_schemas: tuple | None = None
    fingerprint: str = ""

    @staticmethod
    def _fingerprint(system_text: str, user_text: str, tool_schemas: tuple | None) -> str:
        payload = json.dumps(
            {"system": system_text, "user": user_text, "tools": tool_schemas},
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode()).hexdigest()


def make_bundle(user_text: str, system_text: str = "", tool_schemas: list | tuple | None = None) -> PromptBundle:
    schemas = tuple(json.dumps(s, sort_keys=True) for s in tool_schemas) if tool_schemas else None
    return PromptBundle(
        system_text=system_text,
        user_text=user_text,
        tool_schemas=schemas,
        fingerprint=PromptBundle._fingerprint(system_text, user_text, schemas),
    )


def _knowledge_prefix(mode: KnowledgeMode, knowledge: RetrievedKnowledge | None) -> str:
    if mode is KnowledgeMode.NONE:
        if knowledge is not None:
            raise AssemblyError("knowledge supplied for mode=none")
        return PREFIX_OWN_KNOWLEDGE
    if knowledge is None:
        raise AssemblyError(f"mode={mode.value} requires retrieved knowledge")
    if mode is KnowledgeMode.RAW:
        text = PREFIX_RAW_KNOWLEDGE.replace("{report}", knowledge.payload)
    else:
        text = PREFIX_SUMMARIZED_KNOWLEDGE.replace("{knowl}", knowledge.payload)
    for placeholder in ("{report}", "{knowl}"):
        if placeholder in text:
            raise AssemblyError(f"placeholder {placeholder} survived substitution")
    return text


def assemble(
    case,
    scheme: PromptScheme,
    knowledge: RetrievedKnowledge | None = None,
    context: ContextBundle | None = None,
    tools_supported: bool = False,
    tool_schemas: list | None = None,
) -> PromptBundle:
    """Build the full user message for one grid cell.

    Layout: knowledge prefix, fenced target code, optional context block,
    the output-result instruction, then the scheme block. The raw scheme's
    function-calling sentence is only emitted for tool-supporting
    providers; the chain-of-thought block is appended for the CoT scheme.
    """
    if scheme.include_context and context is None:
        raise AssemblyError("include_context=True but no context bundle supplied")
    if not scheme.include_context and context is not None:
        raise AssemblyError("context bundle supplied but include_context=False")

    parts = [_knowledge_prefix(scheme.knowledge_mode, knowledge)]
    parts.append(f"{TARGET_CODE_HEADING}\n```\n{case.code}\n```")
    if scheme.include_context:
        parts.append(f"{CONTEXT_HEADING}\n{serialize_bundle(context)}")
    parts.append(OUTPUT_RESULT)
    if scheme.scheme is Scheme.RAW:
        if tools_supported:
            parts.append(SCHEME_RAW_TOOLS)
    else:
        parts.append(SCHEME_COT)
    user_text = "\n\n".join(parts)
    schemas = tool_schemas if (tools_supported and scheme.scheme is Scheme.RAW) else None
    return make_bundle(user_text, system_text="", tool_schemas=schemas)
