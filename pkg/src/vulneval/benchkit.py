"""Benchmark construction: CWE-driven knowledge synthesis and the
data-leakage sanitizer.

Sanitization never trusts rewritten code from a model. The model only
proposes a rename map (and fresh comment text); renaming is applied
mechanically at the token level, then the result must reparse and its
anonymized tree shape must be identical to the original's. Anything else
is rejected rather than silently repaired, because a sanitized case that
changed shape is no longer the same test case.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace

from . import prompts
from .knowledge import KnowledgeBase, KnowledgeItem, KnowledgeSource
from .lexer import (
    RESERVED_WORDS,
    Language,
    LexError,
    TokenKind,
    anonymized_shape,
    identifiers,
    rename_identifiers,
    tokenize,
)
from .runner import TargetCase

_CWE_ID = re.compile(r"^CWE-\d+$")

LANGUAGE_DISPLAY = {Language.SOLIDITY: "Solidity", Language.JAVA: "Java", Language.CPP: "C/C++"}

# Names whose renaming would change behavior, not just spelling.
BUILTIN_IDENTIFIERS = frozenset(
    """
    msg block tx abi keccak256 sha256 ecrecover addmod mulmod selfdestruct
    now gasleft blockhash type System String Math Object Exception std
    printf scanf malloc free memcpy memset strlen strcpy strcat sizeof
    main println print
    """.split()
)


class SynthesisError(RuntimeError):
    pass


class SanitizationError(ValueError):
    pass


@dataclass(frozen=True)
class CweEntry:
    cwe_id: str
    language: Language
    description: str

    def __post_init__(self) -> None:
        if not _CWE_ID.match(self.cwe_id):
            raise ValueError(f"cwe_id must look like CWE-<digits>, got {self.cwe_id!r}")


def read_cwe_file(path) -> list[CweEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                row = json.loads(line)
                entries.append(CweEntry(cwe_id=row["cwe_id"], language=Language(row["language"]), description=row["description"]))
    return entries


@dataclass
class SynthesisResult:
    items: list[KnowledgeItem] = field(default_factory=list)
    skipped: int = 0


_FENCED_BLOCK = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


def code_generation_bundle(entry: CweEntry, n: int) -> prompts.PromptBundle:
    text = prompts.CODE_GENERATOR_PROMPT.replace("[%CWE_INFO%]", f"{entry.cwe_id}: {entry.description}")
    text = text.replace("[%LANGUAGE%]", LANGUAGE_DISPLAY[entry.language])
    if n != 10:
        text = text.replace("generate 10 different", f"generate {n} different")
    return prompts.make_bundle(text)


def report_generation_bundle(entry: CweEntry, code: str) -> prompts.PromptBundle:
    text = prompts.REPORT_GENERATOR_PROMPT.replace("[%CODE%]", code).replace("[%CWE_TYPE%]", entry.cwe_id)
    return prompts.make_bundle(text)


def synthesize_knowledge(entry: CweEntry, llm, gateway, n: int = 10, kb: KnowledgeBase | None = None) -> SynthesisResult:
    """Generate n vulnerable snippets for a CWE, then a report for each.

    Snippets the model failed to fence (or report generations that come
    back empty) are skipped and tallied, never fabricated. Items land in
    `kb` when one is supplied, ready for summarize/embed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    reply = gateway.complete(llm, code_generation_bundle(entry, n))
    snippets = [m.group(1).strip() for m in _FENCED_BLOCK.finditer(reply.response_text)]
    snippets = [s for s in snippets if s][:n]
    result = SynthesisResult(skipped=n - len(snippets))
    for snippet in snippets:
        report_reply = gateway.complete(llm, report_generation_bundle(entry, snippet))
        report_text = report_reply.response_text.strip()
        if not report_text:
            result.skipped += 1
            continue
        digest = hashlib.sha1(f"{entry.cwe_id}\x1f{snippet}".encode()).hexdigest()
        item = KnowledgeItem(
            id=f"cwe-{digest[:12]}",
            language=entry.language,
            report_text=report_text,
            vulnerable_code=snippet,
            source=KnowledgeSource.CWE_SYNTHESIZED,
        )
        result.items.append(item)
        if kb is not None:
            kb.add(item)
    return result


@dataclass
class SanitizationMap:
    renames: dict[str, str] = field(default_factory=dict)
    comments_rewritten: bool = False


RENAME_INSTRUCTION = (
    "Rewrite the naming of the following code to remove any lexical overlap with public "
    "sources while keeping the code statements themselves untouched. Respond with a single "
    "JSON object of the form {\"renames\": {\"oldName\": \"newName\", ...}, \"comments\": "
    "[\"replacement text for each comment, in order\", ...]}. Rename only identifiers that "
    "appear in the code; never rename language keywords or builtins; every new name must be "
    "unique and must not already appear in the code."
)


def rename_request_bundle(case: TargetCase) -> prompts.PromptBundle:
    return prompts.make_bundle(RENAME_INSTRUCTION + "\n\nCode:\n```\n" + case.code + "\n```")


def eligible_identifiers(code: str) -> list[str]:
    return [name for name in identifiers(code) if name not in BUILTIN_IDENTIFIERS]


def _validate_map(renames: dict[str, str], existing: set[str]) -> dict[str, str]:
    cleaned: dict[str, str] = {}
    used: set[str] = set()
    for old, new in renames.items():
        if old not in existing:
            continue
        if old in BUILTIN_IDENTIFIERS:
            raise SanitizationError(f"refusing to rename builtin {old!r}")
        if not re.match(r"^[A-Za-z_$][A-Za-z0-9_$]*$", new):
            raise SanitizationError(f"replacement {new!r} is not a valid identifier")
        if new in RESERVED_WORDS:
            raise SanitizationError(f"replacement {new!r} is a reserved word")
        if new in existing and new not in renames:
            raise SanitizationError(f"replacement {new!r} collides with an existing identifier")
        if new in used:
            raise SanitizationError(f"rename map is not injective: {new!r} used twice")
        used.add(new)
        cleaned[old] = new
    return cleaned


def _replace_comments(code: str, replacements: list[str]) -> str:
    if not replacements:
        return code
    out: list[str] = []
    last = 0
    index = 0
    for tok in tokenize(code):
        if tok.kind is TokenKind.COMMENT and index < len(replacements):
            body = replacements[index]
            index += 1
            new = f"/* {body} */" if tok.text.startswith("/*") else f"// {body}"
            out.append(code[last : tok.offset])
            out.append(new)
            last = tok.offset + len(tok.text)
    out.append(code[last:])
    return "".join(out)


def _surviving_originals(code: str, originals: set[str]) -> set[str]:
    survivors = set()
    for name in originals:
        if re.search(rf"\b{re.escape(name)}\b", code):
            survivors.add(name)
    return survivors


def sanitize_case(case: TargetCase, llm=None, gateway=None, proposal: dict | None = None) -> tuple[TargetCase, SanitizationMap]:
    """Rename identifiers and rewrite comments without changing semantics.

    The rename proposal comes from the model (or an explicit `proposal`
    mapping for offline use). After mechanical application the code must
    still tokenize, its anonymized tree shape must equal the original's,
    and no renamed identifier may survive anywhere, string literals
    included; otherwise SanitizationError is raised and the caller keeps
    the original.
    """
    try:
        original_shape = anonymized_shape(case.code)
    except LexError as exc:
        raise SanitizationError(f"case {case.id} does not parse: {exc}") from exc

    existing = set(identifiers(case.code))
    eligible = eligible_identifiers(case.code)
    if not eligible:
        return case, SanitizationMap()

    if proposal is None:
        if llm is None or gateway is None:
            raise SanitizationError("no rename proposal and no model configured")
        reply = gateway.complete(llm, rename_request_bundle(case))
        try:
            proposal = json.loads(reply.response_text)
        except ValueError as exc:
            raise SanitizationError(f"rename proposal is not valid JSON: {exc}") from exc

    renames = _validate_map(dict(proposal.get("renames", {})), existing)
    comments = [str(c) for c in proposal.get("comments", [])]

    sanitized = _replace_comments(case.code, comments)
    sanitized = rename_identifiers(sanitized, renames)

    try:
        new_shape = anonymized_shape(sanitized)
    except LexError as exc:
        raise SanitizationError(f"sanitized code no longer parses: {exc}") from exc
    if new_shape != original_shape:
        raise SanitizationError("sanitization changed the anonymized tree shape; rejected")

    survivors = _surviving_originals(sanitized, set(renames))
    if survivors:
        raise SanitizationError("renamed identifiers survive in output: " + ", ".join(sorted(survivors)))

    new_case = replace(
        case,
        code=sanitized,
        report_functions=[renames.get(name, name) for name in case.report_functions],
    )
    return new_case, SanitizationMap(renames=renames, comments_rewritten=bool(comments))
