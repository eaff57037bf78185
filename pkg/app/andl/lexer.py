"""Tokenizer for ANDL source text"""
import enum
import re
from dataclasses import dataclass
from typing import Iterator


class TokenType(enum.Enum):
    WHITESPACE = "whitespace"
    COMMENT = "comment"
    INLINE_INI = "inline ini block"
    ARROW = "'<-->'"
    QUANTITY = "number"
    IDENT = "identifier"
    LBRACE = "'{'"
    RBRACE = "'}'"
    SEMICOLON = "';'"
    COLON = "':'"
    COMMA = "','"
    DOT = "'.'"
    ERROR = "invalid character"
    EOF = "end of file"


@dataclass(frozen=True)
class Token:
    token_type: TokenType
    text: str
    line: int
    column: int


_PUNCTUATION = {
    "{": TokenType.LBRACE,
    "}": TokenType.RBRACE,
    ";": TokenType.SEMICOLON,
    ":": TokenType.COLON,
    ",": TokenType.COMMA,
    ".": TokenType.DOT,
}

_INLINE_START = re.compile(r"inline\s+ini\s*\{")
_PATTERNS = [
    ("WHITESPACE", r"\s+"),
    ("COMMENT", r"//[^\n]*|/\*.*?\*/"),
    ("ARROW", r"<-->"),
    ("QUANTITY", r"-?0[xX][0-9a-fA-F]+|-?\d+(?:\.\d+)?[A-Za-z/]*"),
    ("IDENT", r"[A-Za-z_][A-Za-z0-9_]*"),
    ("PUNCT", r"[{};:,.]"),
    ("ERROR", r"."),
]
_MASTER = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in _PATTERNS), re.DOTALL)


def lex(code: str) -> Iterator[Token]:
    """Yield tokens with 1-based line/column; always ends with an EOF token"""
    position = 0
    line = 1
    line_start = 0

    def advance(text: str) -> None:
        nonlocal line, line_start
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = position - (len(text) - text.rfind("\n") - 1)

    while position < len(code):
        column = position - line_start + 1
        inline = _INLINE_START.match(code, position)
        if inline is not None:
            close = code.find("}", inline.end())
            if close < 0:
                yield Token(TokenType.ERROR, "unterminated inline ini block", line, column)
                position = len(code)
                break
            text = code[inline.end():close]
            start_line = line + code.count("\n", position, inline.end())
            yield Token(TokenType.INLINE_INI, text, start_line, column)
            consumed = code[position:close + 1]
            position = close + 1
            advance(consumed)
            continue
        match = _MASTER.match(code, position)
        text = match.group()
        if match.lastgroup == "PUNCT":
            kind = _PUNCTUATION[text]
        else:
            kind = TokenType[match.lastgroup]
        position = match.end()
        yield Token(kind, text, line, column)
        advance(text)
    yield Token(TokenType.EOF, "", line, position - line_start + 1)
