"""Code-context supplementation: function extraction, call graphs, bundles.

Extraction is name-based by design. Definitions are recognized from the
token stream (no type analysis), calls resolve to every function sharing
the callee's simple name, and callee depth is fixed at one. For a fixed
corpus snapshot everything here is a pure function of the sources, which
is what makes context supplementation fair across models: every model
sees byte-identical context for the same target code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .lexer import (
    RESERVED_WORDS,
    Language,
    LexError,
    Token,
    TokenKind,
    code_tokens,
    tokenize,
)

# Provider-agnostic token estimate used for context budgets.
CHARS_PER_TOKEN = 4

NOT_FOUND_PREFIX = "not found:"

_CONTAINER_KEYWORDS = {
    Language.SOLIDITY: {"contract", "library", "interface"},
    Language.JAVA: {"class", "interface", "enum"},
    Language.CPP: {"class", "struct", "namespace", "union"},
}

# Tokens that may legally sit between a parameter list and the opening
# brace of a definition (throws clauses, initializer lists, qualifiers,
# trailing return types, Solidity modifier lists).
_HEADER_TAIL_OK = {",", ":", ")", "(", ">", "-", "&", "*", "[", "]", "."}


@dataclass(frozen=True)
class FunctionRecord:
    qualified_name: str
    language: Language
    source_text: str
    file: str
    span: tuple[int, int]
    calls: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.source_text:
            raise ValueError(f"{self.qualified_name}: empty source_text")
        if self.span[0] > self.span[1]:
            raise ValueError(f"{self.qualified_name}: span start after end")

    @property
    def simple_name(self) -> str:
        return self.qualified_name.rsplit(".", 1)[-1]


@dataclass
class CallGraph:
    nodes: set[str] = field(default_factory=set)
    edges: set[tuple[str, str]] = field(default_factory=set)

    def validate(self) -> None:
        for caller, callee in self.edges:
            if caller not in self.nodes or callee not in self.nodes:
                raise ValueError(f"edge ({caller}, {callee}) has endpoint outside nodes")

    def callees_of(self, node: str) -> list[str]:
        return sorted(c for (f, c) in self.edges if f == node)


@dataclass
class ContextBundle:
    report_linked_code: list[FunctionRecord] = field(default_factory=list)
    callees: list[FunctionRecord] = field(default_factory=list)
    truncated: bool = False

    def is_empty(self) -> bool:
        return not self.report_linked_code and not self.callees


@dataclass
class ParseDiagnostics:
    """Per-file errors and resolution tallies collected while parsing."""

    file_errors: list[tuple[str, str]] = field(default_factory=list)
    unresolved_calls: int = 0


def _match_braces(tokens: list[Token]) -> dict[int, int]:
    pairs: dict[int, int] = {}
    stack: list[int] = []
    for i, t in enumerate(tokens):
        if t.kind is TokenKind.PUNCT and t.text == "{":
            stack.append(i)
        elif t.kind is TokenKind.PUNCT and t.text == "}":
            if not stack:
                raise LexError(f"unbalanced '}}' at line {t.line}")
            pairs[stack.pop()] = i
    if stack:
        raise LexError(f"unbalanced '{{' at line {tokens[stack[-1]].line}")
    return pairs


def _find_close_paren(tokens: list[Token], open_idx: int) -> int | None:
    depth = 0
    for j in range(open_idx, len(tokens)):
        text = tokens[j].text
        if tokens[j].kind is TokenKind.PUNCT:
            if text == "(":
                depth += 1
            elif text == ")":
                depth -= 1
                if depth == 0:
                    return j
    return None


def _decl_start(tokens: list[Token], name_idx: int) -> int:
    """Walk back from a definition's name to the start of its declaration."""
    j = name_idx - 1
    boundary = {";", "{", "}"}
    while j >= 0:
        t = tokens[j]
        if t.kind is TokenKind.PUNCT and t.text in boundary:
            break
        if t.kind is TokenKind.COMMENT:
            break
        j -= 1
    return j + 1


def _scan_header_tail(tokens: list[Token], after_params: int) -> int | None:
    """Return the index of the body '{' following a parameter list, or None.

    Accepts qualifier/throws/initializer-list material between ')' and '{';
    a ';' or '=' means declaration-only and rejects the candidate.
    """
    j = after_params + 1
    while j < len(tokens):
        t = tokens[j]
        if t.kind is TokenKind.COMMENT:
            j += 1
            continue
        if t.kind is TokenKind.PUNCT and t.text == "{":
            return j
        if t.kind is TokenKind.PUNCT and t.text in {";", "="}:
            return None
        if t.kind is TokenKind.IDENT or t.kind is TokenKind.NUMBER:
            j += 1
            continue
        if t.kind is TokenKind.PUNCT and t.text in _HEADER_TAIL_OK:
            if t.text == "(":
                close = _find_close_paren(tokens, j)
                if close is None:
                    return None
                j = close + 1
                continue
            j += 1
            continue
        return None
    return None


_CALLISH_PRECEDERS = {
    "=", "(", ",", ".", "!", "?", ":", "+", "-", "*", "/", "%", "<",
    "&", "|", "^", "~", "[", "@",
}


def _java_cpp_definition(tokens: list[Token], i: int, language: Language) -> tuple[str, int, int] | None:
    """Try to read a method/function definition whose name token is at i.

    Returns (name, decl_start_idx, body_open_idx) or None.
    """
    t = tokens[i]
    if t.kind is not TokenKind.IDENT or t.text in RESERVED_WORDS:
        return None
    if i + 1 >= len(tokens) or tokens[i + 1].text != "(":
        return None
    name = t.text
    name_idx = i
    # C++ qualified definitions: Outer::method(...)
    if language is Language.CPP:
        k = i
        while k >= 2 and tokens[k - 1].text == ":" and tokens[k - 2].text == ":":
            if k >= 3 and tokens[k - 3].kind is TokenKind.IDENT:
                name = tokens[k - 3].text + "." + name
                k -= 3
            else:
                break
        name_idx = k
    prev = tokens[name_idx - 1] if name_idx > 0 else None
    if prev is not None:
        if prev.kind is TokenKind.PUNCT and prev.text in _CALLISH_PRECEDERS:
            return None
        if prev.kind is TokenKind.IDENT and prev.text in {"new", "return", "throw", "emit", "delete", "case"}:
            return None
    close = _find_close_paren(tokens, i + 1)
    if close is None:
        return None
    body_open = _scan_header_tail(tokens, close)
    if body_open is None:
        return None
    return name, _decl_start(tokens, name_idx), body_open


_SOLIDITY_NAMED = {"function", "modifier"}
_SOLIDITY_UNNAMED = {"constructor", "receive", "fallback"}


def _solidity_definition(tokens: list[Token], i: int) -> tuple[str, int, int] | None:
    t = tokens[i]
    if t.kind is not TokenKind.IDENT:
        return None
    if t.text in _SOLIDITY_NAMED:
        if i + 2 >= len(tokens) or tokens[i + 1].kind is not TokenKind.IDENT:
            return None
        name = tokens[i + 1].text
        paren = i + 2
    elif t.text in _SOLIDITY_UNNAMED:
        name = t.text
        paren = i + 1
    else:
        return None
    if paren >= len(tokens) or tokens[paren].text != "(":
        return None
    close = _find_close_paren(tokens, paren)
    if close is None:
        return None
    body_open = _scan_header_tail(tokens, close)
    if body_open is None:
        return None
    return name, i, body_open


def _container_header(tokens: list[Token], i: int, language: Language) -> tuple[str, int] | None:
    """Recognize `contract Name ... {` style headers; returns (name, open_idx)."""
    t = tokens[i]
    if t.kind is not TokenKind.IDENT or t.text not in _CONTAINER_KEYWORDS[language]:
        return None
    if i + 1 >= len(tokens) or tokens[i + 1].kind is not TokenKind.IDENT:
        return None
    name = tokens[i + 1].text
    j = i + 2
    while j < len(tokens):
        tok = tokens[j]
        if tok.kind is TokenKind.PUNCT and tok.text == "{":
            return name, j
        if tok.kind is TokenKind.PUNCT and tok.text in {";", ")", "="}:
            return None
        if tok.kind is TokenKind.PUNCT and tok.text == "(":
            return None
        j += 1
    return None


def _collect_calls(tokens: list[Token], body_open: int, body_close: int, skip: list[tuple[int, int]]) -> tuple[str, ...]:
    calls: list[str] = []
    i = body_open + 1
    while i < body_close:
        skipped = False
        for lo, hi in skip:
            if lo <= i <= hi:
                i = hi + 1
                skipped = True
                break
        if skipped:
            continue
        t = tokens[i]
        if (
            t.kind is TokenKind.IDENT
            and t.text not in RESERVED_WORDS
            and i + 1 < body_close + 1
            and tokens[i + 1].text == "("
        ):
            calls.append(t.text)
        i += 1
    return tuple(calls)


def _parse_source(source: str, path: str, language: Language) -> list[FunctionRecord]:
    tokens = code_tokens(tokenize(source))
    braces = _match_braces(tokens)

    # First pass: locate container and function headers by their body brace.
    roles: dict[int, tuple[str, str, int]] = {}  # open_idx -> (kind, name, decl_start_idx)
    i = 0
    while i < len(tokens):
        header = _container_header(tokens, i, language)
        if header is not None:
            name, open_idx = header
            roles.setdefault(open_idx, ("container", name, i))
            i += 2
            continue
        if language is Language.SOLIDITY:
            match = _solidity_definition(tokens, i)
        else:
            match = _java_cpp_definition(tokens, i, language)
        if match is not None:
            name, decl_start, body_open = match
            roles.setdefault(body_open, ("function", name, decl_start))
        i += 1

    # Second pass: assign ownership using the nesting structure.
    records: list[FunctionRecord] = []
    record_info: list[tuple[str, int, int, int, int, int]] = []
    containers: list[str] = []
    functions: list[str] = []  # qualified names of enclosing functions
    functions_open_idx: list[int] = []
    nested_ranges: dict[int, list[tuple[int, int]]] = {}
    open_stack: list[tuple[int, str]] = []  # (open_idx, kind)

    for idx, tok in enumerate(tokens):
        if tok.kind is TokenKind.PUNCT and tok.text == "{":
            kind, name, decl_start = roles.get(idx, ("block", "", idx))
            if kind == "container":
                containers.append(name)
            elif kind == "function":
                if functions:
                    qualified = functions[-1] + "." + name
                    nested_ranges.setdefault(functions_open_idx[-1], []).append((decl_start, braces[idx]))
                else:
                    prefix = ".".join(containers)
                    qualified = f"{prefix}.{name}" if prefix else name
                close_idx = braces[idx]
                start_off = tokens[decl_start].offset
                end_off = tokens[close_idx].offset + 1
                record_info.append((qualified, decl_start, idx, close_idx, start_off, end_off))
                functions.append(qualified)
                functions_open_idx.append(idx)
            open_stack.append((idx, kind))
        elif tok.kind is TokenKind.PUNCT and tok.text == "}":
            if open_stack:
                _, kind = open_stack.pop()
                if kind == "container" and containers:
                    containers.pop()
                elif kind == "function" and functions:
                    functions.pop()
                    functions_open_idx.pop()

    for qualified, decl_start, open_idx, close_idx, start_off, end_off in record_info:
        calls = _collect_calls(tokens, open_idx, close_idx, nested_ranges.get(open_idx, []))
        records.append(
            FunctionRecord(
                qualified_name=qualified,
                language=language,
                source_text=source[start_off:end_off],
                file=path,
                span=(tokens[decl_start].line, tokens[close_idx].line),
                calls=calls,
            )
        )
    records.sort(key=lambda r: (r.file, r.span[0], r.qualified_name))
    return records


def parse_functions(
    source_files: list[str | Path],
    language: Language | str,
    diagnostics: ParseDiagnostics | None = None,
) -> list[FunctionRecord]:
    """Extract one record per function/method definition across the files.

    Files that fail to tokenize or have unbalanced braces contribute zero
    records; the error is recorded in `diagnostics` (when given) and the
    remaining files are still processed.
    """
    language = Language(language)
    records: list[FunctionRecord] = []
    for path in source_files:
        path = Path(path)
        try:
            source = path.read_text(encoding="utf-8")
            records.extend(_parse_source(source, str(path), language))
        except (LexError, OSError, UnicodeDecodeError) as exc:
            if diagnostics is not None:
                diagnostics.file_errors.append((str(path), str(exc)))
    return records


def parse_source_functions(source: str, language: Language | str, name: str = "<memory>") -> list[FunctionRecord]:
    """parse_functions for an in-memory snippet (target cases are snippets)."""
    return _parse_source(source, name, Language(language))


def build_call_graph(
    functions: list[FunctionRecord],
    diagnostics: ParseDiagnostics | None = None,
) -> CallGraph:
    """Name-based call graph over one corpus snapshot.

    An edge (f, g) exists iff f's body contains a call expression whose
    name matches g's simple name. Calls that match no known function are
    dropped and tallied in `diagnostics.unresolved_calls`.
    """
    graph = CallGraph(nodes={r.qualified_name for r in functions})
    by_simple: dict[str, list[str]] = {}
    for r in functions:
        by_simple.setdefault(r.simple_name, []).append(r.qualified_name)
    for r in functions:
        for callee in r.calls:
            targets = by_simple.get(callee)
            if not targets:
                if diagnostics is not None:
                    diagnostics.unresolved_calls += 1
                continue
            for target in targets:
                graph.edges.add((r.qualified_name, target))
    graph.validate()
    return graph


class FunctionIndex:
    """Lookup table over parsed records, by qualified and simple name."""

    def __init__(self, functions: list[FunctionRecord]):
        self.records = sorted(functions, key=lambda r: r.qualified_name)
        self.by_qualified: dict[str, FunctionRecord] = {}
        self.by_simple: dict[str, list[FunctionRecord]] = {}
        for r in self.records:
            self.by_qualified.setdefault(r.qualified_name, r)
            self.by_simple.setdefault(r.simple_name, []).append(r)

    def resolve(self, name: str) -> list[FunctionRecord]:
        if name in self.by_qualified:
            return [self.by_qualified[name]]
        return list(self.by_simple.get(name, ()))


def serialize_record(record: FunctionRecord) -> str:
    return f"// {record.qualified_name}\n{record.source_text}\n"


def serialize_bundle(bundle: ContextBundle) -> str:
    """Deterministic text form of a bundle, used for prompts and budgets."""
    parts: list[str] = []
    if bundle.report_linked_code:
        parts.append("Related code from the vulnerability report:")
        parts.extend(serialize_record(r) for r in bundle.report_linked_code)
    if bundle.callees:
        parts.append("Callees of the target code:")
        parts.extend(serialize_record(r) for r in bundle.callees)
    return "\n".join(parts)


def context_for_case(case, graph: CallGraph, functions: list[FunctionRecord], budget_tokens: int) -> ContextBundle:
    """Bundle of report-linked functions plus depth-1 callees for a case.

    Priority under the character budget (CHARS_PER_TOKEN per token) is
    report-linked records first, then callees ordered by name; the first
    record that would overflow stops the fill and marks the bundle
    truncated.
    """
    index = FunctionIndex(functions)

    report_linked: list[FunctionRecord] = []
    seen: set[str] = set()
    for name in getattr(case, "report_functions", ()) or ():
        for record in index.resolve(name):
            if record.qualified_name not in seen:
                seen.add(record.qualified_name)
                report_linked.append(record)
    report_linked.sort(key=lambda r: r.qualified_name)

    callees: list[FunctionRecord] = []
    try:
        case_functions = parse_source_functions(case.code, case.language)
    except LexError:
        case_functions = []
    callee_names: set[str] = set()
    for case_fn in case_functions:
        for node in sorted(graph.nodes):
            if node.rsplit(".", 1)[-1] == case_fn.simple_name:
                callee_names.update(graph.callees_of(node))
    for name in sorted(callee_names):
        record = index.by_qualified.get(name)
        if record is not None and record.qualified_name not in seen:
            seen.add(record.qualified_name)
            callees.append(record)
    callees.sort(key=lambda r: r.qualified_name)

    budget_chars = budget_tokens * CHARS_PER_TOKEN
    bundle = ContextBundle()
    used = 0
    truncated = False
    for target, source_list in ((bundle.report_linked_code, report_linked), (bundle.callees, callees)):
        for record in source_list:
            cost = len(serialize_record(record)) + 1
            if used + cost > budget_chars:
                truncated = True
                break
            used += cost
            target.append(record)
        if truncated:
            break
    bundle.truncated = truncated
    return bundle


class CorpusIndex:
    """Read-only index over a corpus for the on-demand lookup tools."""

    def __init__(self, functions: list[FunctionRecord], sources: dict[str, str] | None = None, language: Language | str = Language.SOLIDITY):
        self.functions = FunctionIndex(functions)
        self.sources = dict(sources or {})
        self.language = Language(language)

    @classmethod
    def from_files(cls, source_files: list[str | Path], language: Language | str, diagnostics: ParseDiagnostics | None = None) -> "CorpusIndex":
        functions = parse_functions(source_files, language, diagnostics)
        sources = {}
        for path in source_files:
            try:
                sources[str(path)] = Path(path).read_text(encoding="utf-8")
            except (OSError, UnicodeDecodeError):
                continue
        return cls(functions, sources, language)


_INHERIT_KEYWORDS = {"is", "extends", "implements"}


def _inheritance_parents(source: str, class_name: str, language: Language) -> list[str]:
    tokens = code_tokens(tokenize(source))
    parents: list[str] = []
    for i, t in enumerate(tokens):
        if t.kind is not TokenKind.IDENT or t.text not in _CONTAINER_KEYWORDS[language]:
            continue
        if i + 1 >= len(tokens) or tokens[i + 1].text != class_name:
            continue
        j = i + 2
        collecting = language is Language.CPP and j < len(tokens) and tokens[j].text == ":"
        while j < len(tokens) and tokens[j].text != "{":
            tok = tokens[j]
            if tok.kind is TokenKind.IDENT and tok.text in _INHERIT_KEYWORDS:
                collecting = True
            elif collecting and tok.kind is TokenKind.IDENT and tok.text not in RESERVED_WORDS:
                parents.append(tok.text)
            elif tok.kind is TokenKind.PUNCT and tok.text == ":" and language is Language.CPP:
                collecting = True
            j += 1
        break
    return parents


def _variable_definition_line(sources: dict[str, str], name: str) -> str | None:
    for path in sorted(sources):
        for line in sources[path].splitlines():
            stripped = line.strip()
            if not stripped or stripped.startswith("//"):
                continue
            toks = code_tokens(tokenize(stripped)) if stripped else []
            for i, t in enumerate(toks):
                if t.kind is TokenKind.IDENT and t.text == name and i > 0:
                    prev = toks[i - 1]
                    nxt = toks[i + 1] if i + 1 < len(toks) else None
                    prev_typeish = prev.kind is TokenKind.IDENT or prev.text in {"]", ">", "*", "&"}
                    declish = nxt is None or nxt.text in {"=", ";", ","}
                    if prev_typeish and declish:
                        return stripped
    return None


LOOKUP_KINDS = ("function_definition", "class_inheritance", "variable_definition")


def tool_lookup(kind: str, name: str, corpus: CorpusIndex) -> str:
    """Resolve a named entity in the corpus, for LLM function-calling.

    Returns the entity's source text (or the parent list for inheritance);
    misses return a sentinel string starting with NOT_FOUND_PREFIX so the
    model sees a stable, parseable miss marker.
    """
    if kind == "function_definition":
        matches = corpus.functions.resolve(name)
        if matches:
            return matches[0].source_text
        return f"{NOT_FOUND_PREFIX} function_definition '{name}'"
    if kind == "class_inheritance":
        for path in sorted(corpus.sources):
            parents = _inheritance_parents(corpus.sources[path], name, corpus.language)
            if parents:
                return ", ".join(parents)
        return f"{NOT_FOUND_PREFIX} class_inheritance '{name}'"
    if kind == "variable_definition":
        line = _variable_definition_line(corpus.sources, name)
        if line is not None:
            return line
        return f"{NOT_FOUND_PREFIX} variable_definition '{name}'"
    raise ValueError(f"unknown lookup kind: {kind!r}")


def write_graph_file(graph: CallGraph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for caller, callee in sorted(graph.edges):
            fh.write(json.dumps({"caller": caller, "callee": callee}) + "\n")


def read_graph_file(path: str | Path) -> CallGraph:
    graph = CallGraph()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            graph.nodes.add(row["caller"])
            graph.nodes.add(row["callee"])
            graph.edges.add((row["caller"], row["callee"]))
    return graph


def write_function_index(functions: list[FunctionRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in sorted(functions, key=lambda x: x.qualified_name):
            fh.write(
                json.dumps(
                    {
                        "qualified_name": r.qualified_name,
                        "language": r.language.value,
                        "source_text": r.source_text,
                        "file": r.file,
                        "span": list(r.span),
                        "calls": list(r.calls),
                    }
                )
                + "\n"
            )


def read_function_index(path: str | Path) -> list[FunctionRecord]:
    out: list[FunctionRecord] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            out.append(
                FunctionRecord(
                    qualified_name=row["qualified_name"],
                    language=Language(row["language"]),
                    source_text=row["source_text"],
                    file=row["file"],
                    span=tuple(row["span"]),
                    calls=tuple(row.get("calls", ())),
                )
            )
    return out
