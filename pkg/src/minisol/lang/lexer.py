"""Tokenizer for contract sources and invariant templates.

Comments are not discarded: they are collected per line (delimiters
stripped) because the prompt tiers read them, and `@unroll N` markers
inside block comments set loop bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ParseError

PUNCT = (
    "&&", "||", "==", "!=", "<=", ">=", "=>",
    "{", "}", "(", ")", "[", "]", ";", ",", ".", "=", "+", "-", "*", "/", "!", "<", ">",
)


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT | NUM | PUNCT | EOF
    value: str
    line: int
    col: int

    def __repr__(self) -> str:
        return f"{self.kind}({self.value!r}@{self.line}:{self.col})"


@dataclass
class LexResult:
    tokens: list[Token]
    comments: list[tuple[int, str]]


def lex(text: str) -> LexResult:
    tokens: list[Token] = []
    comments: list[tuple[int, str]] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def bump(k: int = 1) -> None:
        nonlocal i, line, col
        for _ in range(k):
            if i < n and text[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        ch = text[i]
        if ch in " \t\r\n":
            bump()
            continue
        if text.startswith("//", i):
            start = i + 2
            end = text.find("\n", start)
            if end == -1:
                end = n
            comments.append((line, text[start:end].strip()))
            bump(end - i)
            continue
        if text.startswith("/*", i):
            start_line = line
            end = text.find("*/", i + 2)
            if end == -1:
                raise ParseError("unterminated block comment", line, col)
            comments.append((start_line, text[i + 2 : end].strip()))
            bump(end + 2 - i)
            continue
        if ch == '"':
            j = i + 1
            while j < n and text[j] not in '"\n':
                j += 1
            if j >= n or text[j] != '"':
                raise ParseError("unterminated string literal", line, col)
            tokens.append(Token("STRING", text[i + 1 : j], line, col))
            bump(j + 1 - i)
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(Token("NUM", text[i:j], line, col))
            bump(j - i)
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token("IDENT", text[i:j], line, col))
            bump(j - i)
            continue
        for p in PUNCT:
            if text.startswith(p, i):
                tokens.append(Token("PUNCT", p, line, col))
                bump(len(p))
                break
        else:
            raise ParseError(f"unexpected character {ch!r}", line, col)
    tokens.append(Token("EOF", "", line, col))
    return LexResult(tokens=tokens, comments=comments)
