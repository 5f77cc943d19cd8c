"""Tokenizer shared by the ``.city``, ``.facts`` and ``.rules`` formats."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int = 1

    def __str__(self):
        return f"{self.line}:{self.column}"


class ParseError(ValueError):
    """Syntax or type error located in the source text."""

    def __init__(self, message: str, span: SourceSpan):
        self.message = message
        self.span = span
        super().__init__(f"{span}: {message}")


@dataclass(frozen=True)
class Token:
    kind: str  # ident | string | int | op | eof
    text: str
    span: SourceSpan
    value: object = None


IDENT_RE = re.compile(r"(?:[^\W\d])\w*(?:-\w+)*")
_INT_RE = re.compile(r"\d+")
_OPS = ("->", "!=", ">=", "<=", "≠", "≥", "≤", "=", ">", "<", "{", "}", "[", "]", "(", ")", ",", ":", ".", "*", ";")
_CLOSE_QUOTE = {'"': '"', "“": "”"}
_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "r": "\r", "t": "\t", "”": "”"}


def tokenize(text: str) -> list[Token]:
    """Split ``text`` into tokens; raise ParseError on the first bad character."""
    tokens: list[Token] = []
    line, col, i = 1, 1, 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\r" and i + 1 < n and text[i + 1] == "\n":
            i += 1
            continue
        if ch in "\n\r":
            line, col, i = line + 1, 1, i + 1
            continue
        if ch.isspace() or ch == "\ufeff":
            col, i = col + 1, i + 1
            continue
        if ch == "#":
            while i < n and text[i] not in "\r\n":
                i += 1
                col += 1
            continue
        start = SourceSpan(line, col)
        if ch in _CLOSE_QUOTE:
            close = _CLOSE_QUOTE[ch]
            j = i + 1
            out = []
            while True:
                if j >= n or text[j] in "\r\n":
                    raise ParseError("unterminated string", SourceSpan(line, col, max(1, j - i)))
                c = text[j]
                if c == "\\":
                    if j + 1 >= n or text[j + 1] not in _ESCAPES:
                        raise ParseError("invalid escape in string", SourceSpan(line, col + (j - i), 1))
                    out.append(_ESCAPES[text[j + 1]])
                    j += 2
                    continue
                if c == close:
                    break
                out.append(c)
                j += 1
            length = j + 1 - i
            value = unicodedata.normalize("NFC", "".join(out))
            tokens.append(Token("string", text[i : j + 1], SourceSpan(line, col, length), value))
            i, col = j + 1, col + length
            continue
        m = IDENT_RE.match(text, i)
        if m:
            word = m.group()
            tokens.append(Token("ident", word, SourceSpan(line, col, len(word)), unicodedata.normalize("NFC", word)))
            i, col = m.end(), col + len(word)
            continue
        m = _INT_RE.match(text, i)
        if m:
            word = m.group()
            tokens.append(Token("int", word, SourceSpan(line, col, len(word)), int(word)))
            i, col = m.end(), col + len(word)
            continue
        for op in _OPS:
            if text.startswith(op, i):
                tokens.append(Token("op", op, SourceSpan(line, col, len(op))))
                i, col = i + len(op), col + len(op)
                break
        else:
            raise ParseError(f"unexpected character {ch!r}", start)
    tokens.append(Token("eof", "", SourceSpan(line, col)))
    return tokens


class TokenStream:
    """Cursor over a token list with the usual expect/accept helpers."""

    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at_op(self, op: str) -> bool:
        tok = self.peek()
        return tok.kind == "op" and tok.text == op

    def at_word(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind == "ident" and tok.text.casefold() in words

    def accept_op(self, op: str) -> Token | None:
        if self.at_op(op):
            return self.next()
        return None

    def expect_op(self, op: str, context: str = "") -> Token:
        if not self.at_op(op):
            self.error(f"expected '{op}'" + (f" {context}" if context else ""))
        return self.next()

    def expect_word(self, word: str) -> Token:
        if not self.at_word(word):
            self.error(f"expected '{word}'")
        return self.next()

    def expect_ident(self, what: str) -> Token:
        tok = self.peek()
        if tok.kind != "ident":
            self.error(f"expected {what}")
        return self.next()

    def error(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise ParseError(f"{message}, found {found}", tok.span)


def is_bare_token(text: str) -> bool:
    """True if ``text`` can be written without quotes."""
    return bool(IDENT_RE.fullmatch(text)) and unicodedata.normalize("NFC", text) == text


def quote(text: str) -> str:
    escaped = text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\r", "\\r").replace("\t", "\\t")
    return f'"{escaped}"'


def render_token(text: str) -> str:
    return text if is_bare_token(text) else quote(text)
