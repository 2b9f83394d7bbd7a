"""Lightweight tokenizer for C-family sources (Solidity, Java, C/C++).

All structural analysis in this package (function extraction, call-graph
edges, identifier renaming, anonymized tree shapes) works on this token
stream rather than a full grammar. That is deliberate: call resolution is
name-based, so token-level fidelity is sufficient, and a single tokenizer
keeps the sanitizer's before/after shape comparison consistent with the
extractor that produced the functions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum


class Language(str, Enum):
    SOLIDITY = "solidity"
    JAVA = "java"
    CPP = "cpp"


class TokenKind(str, Enum):
    IDENT = "ident"
    NUMBER = "number"
    STRING = "string"
    COMMENT = "comment"
    PUNCT = "punct"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    offset: int
    line: int


class LexError(ValueError):
    """Raised for input the tokenizer cannot scan (unterminated string/comment)."""


_IDENT_START = re.compile(r"[A-Za-z_$]")
_IDENT_BODY = re.compile(r"[A-Za-z0-9_$]")
_NUMBER = re.compile(r"(?:0[xX][0-9a-fA-F_]+|\d[\d._a-zA-Z]*)")

# Control-flow and declaration keywords that look like calls or function
# names but are never either. Shared superset across the three languages;
# false inclusions are harmless because they only suppress bogus matches.
RESERVED_WORDS = frozenset(
    """
    if else for while do switch case default return break continue goto
    new delete sizeof typeof throw throws try catch finally assert
    synchronized instanceof this super emit require revert
    public private protected internal external pure view payable static
    final abstract virtual override const constexpr inline volatile
    unsigned signed struct class enum interface contract library union
    namespace using import package pragma template typename operator
    int uint long short char bool boolean float double void byte bytes
    string address mapping modifier event constructor receive fallback
    function returns memory storage calldata immutable is extends implements
    """.split()
)


def tokenize(source: str) -> list[Token]:
    """Scan source into tokens, keeping comments as single tokens.

    Raises LexError on unterminated strings or block comments; everything
    else (including any operator soup) is emitted as single-char PUNCT.
    """
    tokens: list[Token] = []
    i = 0
    n = len(source)
    line = 1
    while i < n:
        c = source[i]
        if c == "\n":
            line += 1
            i += 1
            continue
        if c.isspace():
            i += 1
            continue
        if c == "/" and i + 1 < n and source[i + 1] == "/":
            j = source.find("\n", i)
            if j == -1:
                j = n
            tokens.append(Token(TokenKind.COMMENT, source[i:j], i, line))
            i = j
            continue
        if c == "/" and i + 1 < n and source[i + 1] == "*":
            j = source.find("*/", i + 2)
            if j == -1:
                raise LexError(f"unterminated block comment at line {line}")
            text = source[i : j + 2]
            tokens.append(Token(TokenKind.COMMENT, text, i, line))
            line += text.count("\n")
            i = j + 2
            continue
        if c in "\"'":
            j = i + 1
            while j < n:
                if source[j] == "\\":
                    j += 2
                    continue
                if source[j] == c:
                    break
                if source[j] == "\n":
                    # Single-quoted char literals do not span lines; treat a
                    # bare quote before a newline as a lone punct (e.g. the
                    # apostrophe inside an unquoted code excerpt).
                    break
                j += 1
            if j >= n:
                raise LexError(f"unterminated string literal at line {line}")
            if source[j] != c:
                tokens.append(Token(TokenKind.PUNCT, c, i, line))
                i += 1
                continue
            tokens.append(Token(TokenKind.STRING, source[i : j + 1], i, line))
            i = j + 1
            continue
        if _IDENT_START.match(c):
            j = i + 1
            while j < n and _IDENT_BODY.match(source[j]):
                j += 1
            tokens.append(Token(TokenKind.IDENT, source[i:j], i, line))
            i = j
            continue
        if c.isdigit():
            m = _NUMBER.match(source, i)
            assert m is not None
            tokens.append(Token(TokenKind.NUMBER, m.group(0), i, line))
            i = m.end()
            continue
        tokens.append(Token(TokenKind.PUNCT, c, i, line))
        i += 1
    return tokens


def code_tokens(tokens: list[Token]) -> list[Token]:
    """Tokens with comments stripped."""
    return [t for t in tokens if t.kind is not TokenKind.COMMENT]


def identifiers(source: str) -> list[str]:
    """Distinct non-reserved identifier texts, in first-seen order."""
    seen: dict[str, None] = {}
    for tok in tokenize(source):
        if tok.kind is TokenKind.IDENT and tok.text not in RESERVED_WORDS:
            seen.setdefault(tok.text)
    return list(seen)


_OPEN = {"{": "}", "(": ")", "[": "]"}
_CLOSE = {"}", ")", "]"}


def anonymized_shape(source: str) -> tuple:
    """Nested token-shape of the source with identifier leaves erased.

    Brackets of all three kinds become subtrees; identifiers collapse to the
    leaf "id"; comments are dropped entirely (they carry no semantics and
    the sanitizer rewrites them freely); every other token keeps its text.
    Two sources have isomorphic statement-level syntax trees iff their
    shapes compare equal.
    """
    toks = code_tokens(tokenize(source))
    pos = 0

    def build(closer: str | None) -> list:
        nonlocal pos
        out: list = []
        while pos < len(toks):
            t = toks[pos]
            if t.kind is TokenKind.PUNCT and t.text in _OPEN:
                pos += 1
                sub = build(_OPEN[t.text])
                out.append((t.text, tuple(sub)))
                continue
            if t.kind is TokenKind.PUNCT and t.text in _CLOSE:
                if t.text != closer:
                    raise LexError(f"unbalanced '{t.text}' at line {t.line}")
                pos += 1
                return out
            if t.kind is TokenKind.IDENT and t.text not in RESERVED_WORDS:
                out.append("id")
            else:
                out.append(t.text)
            pos += 1
        if closer is not None:
            raise LexError("unbalanced brackets at end of input")
        return out

    return tuple(build(None))


def rename_identifiers(source: str, renames: dict[str, str]) -> str:
    """Apply an identifier rename map token-wise, including inside comments.

    Only whole identifier tokens are replaced; string literals are left
    untouched. Comment text gets a word-boundary substitution so renamed
    identifiers do not survive in prose either.
    """
    out: list[str] = []
    last = 0
    for tok in tokenize(source):
        if tok.kind is TokenKind.IDENT and tok.text in renames:
            out.append(source[last : tok.offset])
            out.append(renames[tok.text])
            last = tok.offset + len(tok.text)
        elif tok.kind is TokenKind.COMMENT:
            new = tok.text
            for old, repl in renames.items():
                new = re.sub(rf"\b{re.escape(old)}\b", repl, new)
            if new != tok.text:
                out.append(source[last : tok.offset])
                out.append(new)
                last = tok.offset + len(tok.text)
    out.append(source[last:])
    return "".join(out)
