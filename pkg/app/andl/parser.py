"""
Recursive-descent parser for the supported ANDL subset.

The grammar is documented in docs/andl.md. Syntax errors stop the parse;
unit, duplicate-name and unsupported-construct problems are collected and
reported together with it.
"""
import logging
from typing import Iterator, Optional, Union

from app.andl.ast import (
    AndlError,
    Ast,
    Body,
    Connection,
    Device,
    Diagnostic,
    MappingEntry,
    Message,
    Network,
    Param,
    Segment,
    TypeDef,
    TypeLibrary,
    Value,
)
from app.andl.lexer import Token, TokenType, lex
from app.andl.units import UnitError, parse_quantity

logger = logging.getLogger(__name__)

_IGNORE = {TokenType.WHITESPACE, TokenType.COMMENT}

DEVICE_KINDS = {"canLink", "node", "gateway", "switch"}
TYPE_KINDS = DEVICE_KINDS | {"ethernetLink"}
UNSUPPORTED_KINDS = {"flexrayLink", "canfdLink", "ipLink"}
MAPPING_KINDS = {"can", "tt", "rc", "avb", "be"}
UNSUPPORTED_MAPPINGS = {"flexray", "static", "dynamic", "canfd", "ip", "udp"}

Expected = Union[TokenType, str, set]


class TokenStream:
    def __init__(self, code: str):
        self.code = code
        self._tokens: Iterator[Token] = (t for t in lex(code) if t.token_type not in _IGNORE)
        self.current: Token = next(self._tokens)
        self._next: Token = next(self._tokens, self.current)

    def consume(self) -> Token:
        token = self.current
        if token.token_type is not TokenType.EOF:
            self.current = self._next
            self._next = next(self._tokens, self.current)
        return token

    def peek(self) -> Token:
        return self._next

    def _matches(self, token: Token, expected: Expected) -> bool:
        if isinstance(expected, TokenType):
            return token.token_type is expected
        if isinstance(expected, str):
            return token.token_type is TokenType.IDENT and token.text == expected
        return token.token_type is TokenType.IDENT and token.text in expected

    def accept(self, expected: Expected) -> Optional[Token]:
        if self._matches(self.current, expected):
            return self.consume()
        return None

    def check(self, expected: Expected) -> bool:
        return self._matches(self.current, expected)

    def expect(self, expected: Expected, what: Optional[str] = None) -> Token:
        token = self.accept(expected)
        if token is None:
            if what is None:
                what = expected.value if isinstance(expected, TokenType) else f"'{expected}'"
            raise self.error(f"expected {what}")
        return token

    def error(self, message: str, token: Optional[Token] = None) -> AndlError:
        token = token or self.current
        if token.token_type is TokenType.ERROR:
            message = f"{message}, found {token.text!r}" if len(token.text) == 1 else token.text
        elif token.token_type is TokenType.EOF:
            message = f"{message}, found end of file"
        else:
            message = f"{message}, found '{token.text}'"
        return AndlError.at(token.line, token.column, message)


class Parser:
    def __init__(self, code: str):
        self.stream = TokenStream(code)
        self.diagnostics: list[Diagnostic] = []

    def report(self, token: Token, message: str, severity: str = "error") -> None:
        self.diagnostics.append(Diagnostic(line=token.line, column=token.column, message=message,
                                           severity=severity))

    def ident(self, what: str = "identifier") -> Token:
        return self.stream.expect(TokenType.IDENT, what)

    def qualified_name(self) -> Token:
        first = self.ident("type name")
        parts = [first.text]
        while self.stream.accept(TokenType.DOT):
            parts.append(self.ident("type name").text)
        return Token(TokenType.IDENT, ".".join(parts), first.line, first.column)

    def unique(self, seen: dict, token: Token, what: str) -> None:
        if token.text in seen:
            self.report(token, f"duplicate {what} '{token.text}'")
        seen[token.text] = token

    # -- values -----------------------------------------------------------

    def value(self) -> Value:
        token = self.stream.current
        if token.token_type is TokenType.QUANTITY:
            self.stream.consume()
            return self.quantity(token)
        if token.token_type is TokenType.IDENT:
            name = self.qualified_name()
            return Value(text=name.text, kind="name", line=token.line, column=token.column)
        raise self.stream.error("expected a value")

    def quantity(self, token: Token) -> Value:
        text = token.text
        negative = text.startswith("-")
        digits = text[1:] if negative else text
        try:
            if digits[:2].lower() == "0x":
                number, kind = int(digits, 16), "number"
            else:
                parsed = parse_quantity(digits)
                number, kind = parsed.value, parsed.kind
        except UnitError as exc:
            self.report(token, str(exc))
            return Value(text=text, kind="number", line=token.line, column=token.column)
        return Value(text=text, kind=kind, number=-number if negative else number,
                     line=token.line, column=token.column)

    def param(self) -> Param:
        name = self.ident("parameter name")
        value = None
        if not self.stream.check(TokenType.SEMICOLON):
            value = self.value()
        self.stream.expect(TokenType.SEMICOLON)
        return Param(name=name.text, value=value, line=name.line, column=name.column)

    def body(self) -> Body:
        """'{' ('new' type ';' | param)* '}'"""
        open_ = self.stream.expect(TokenType.LBRACE)
        body = Body(line=open_.line, column=open_.column)
        seen: dict = {}
        while not self.stream.accept(TokenType.RBRACE):
            if self.stream.check("new") and self.stream.peek().token_type is TokenType.IDENT:
                new = self.stream.consume()
                if body.type_ref is not None:
                    self.report(new, "only one 'new' per instantiation")
                body.type_ref = self.qualified_name().text
                if not self.stream.check(TokenType.RBRACE):
                    self.stream.expect(TokenType.SEMICOLON)
                continue
            param = self.param()
            self.unique(seen, Token(TokenType.IDENT, param.name, param.line, param.column), "parameter")
            body.params.append(param)
        return body

    # -- types ------------------------------------------------------------

    def types_block(self) -> TypeLibrary:
        keyword = self.stream.expect("types")
        library = TypeLibrary(name=self.ident("library name").text, line=keyword.line, column=keyword.column)
        self.stream.expect(TokenType.LBRACE)
        seen: dict = {}
        while not self.stream.accept(TokenType.RBRACE):
            kind = self.ident("type kind")
            if kind.text not in TYPE_KINDS:
                self.report(kind, f"unsupported type kind '{kind.text}'")
            name = self.ident("type name")
            self.unique(seen, name, "type")
            extends = None
            if self.stream.accept("extends"):
                extends = self.qualified_name().text
            body = self.body()
            library.types.append(TypeDef(kind=kind.text, name=name.text, extends=extends,
                                         params=body.params, line=kind.line, column=kind.column))
        return library

    # -- network ----------------------------------------------------------

    def network_block(self) -> Network:
        keyword = self.stream.expect("network")
        network = Network(name=self.ident("network name").text, line=keyword.line, column=keyword.column)
        self.stream.expect(TokenType.LBRACE)
        while not self.stream.accept(TokenType.RBRACE):
            token = self.stream.current
            if token.token_type is TokenType.INLINE_INI:
                self.stream.consume()
                network.inline.update(self.inline_ini(token))
            elif self.stream.accept("devices"):
                network.devices.extend(self.devices())
            elif self.stream.accept("connections"):
                network.segments.extend(self.connections())
            elif self.stream.accept("communication"):
                network.messages.extend(self.communication())
            else:
                raise self.stream.error("expected 'inline ini', 'devices', 'connections' or 'communication'")
        self.check_duplicates(network)
        return network

    def inline_ini(self, token: Token) -> dict[str, str]:
        entries: dict[str, str] = {}
        for offset, raw in enumerate(token.text.split("\n")):
            line = raw.split("#", 1)[0].strip()
            if not line or line.startswith("//"):
                continue
            if "=" not in line:
                self.report(Token(TokenType.INLINE_INI, line, token.line + offset, 1),
                            f"inline ini line '{line}' is not 'key = value'")
                continue
            key, value = (part.strip() for part in line.split("=", 1))
            entries[key] = value
        return entries

    def devices(self) -> list[Device]:
        self.stream.expect(TokenType.LBRACE)
        devices = []
        while not self.stream.accept(TokenType.RBRACE):
            kind = self.ident("device kind")
            if kind.text in UNSUPPORTED_KINDS:
                self.report(kind, f"unsupported device kind '{kind.text}'")
            elif kind.text not in DEVICE_KINDS:
                self.report(kind, f"unknown device kind '{kind.text}'")
            name = self.ident("device name")
            body = self.body() if self.stream.check(TokenType.LBRACE) else None
            if body is None:
                self.stream.expect(TokenType.SEMICOLON)
            else:
                self.stream.accept(TokenType.SEMICOLON)
            devices.append(Device(kind=kind.text, name=name.text, body=body, line=name.line, column=name.column))
        return devices

    def connection(self) -> Connection:
        left = self.ident("device name")
        self.stream.expect(TokenType.ARROW)
        link = None
        if self.stream.check(TokenType.LBRACE):
            link = self.body()
            self.stream.expect(TokenType.ARROW)
        right = self.ident("device name")
        self.stream.expect(TokenType.SEMICOLON)
        return Connection(left=left.text, right=right.text, link=link, line=left.line, column=left.column)

    def connections(self) -> list[Segment]:
        self.stream.expect(TokenType.LBRACE)
        segments = []
        loose: Optional[Segment] = None
        while not self.stream.accept(TokenType.RBRACE):
            if self.stream.check("segment") and self.stream.peek().token_type is TokenType.IDENT:
                keyword = self.stream.consume()
                segment = Segment(name=self.ident("segment name").text, line=keyword.line, column=keyword.column)
                self.stream.expect(TokenType.LBRACE)
                while not self.stream.accept(TokenType.RBRACE):
                    segment.connections.append(self.connection())
                segments.append(segment)
            else:
                if loose is None:
                    token = self.stream.current
                    loose = Segment(name="default", line=token.line, column=token.column)
                    segments.append(loose)
                loose.connections.append(self.connection())
        return segments

    def communication(self) -> list[Message]:
        self.stream.expect(TokenType.LBRACE)
        messages = []
        while not self.stream.accept(TokenType.RBRACE):
            messages.append(self.message())
        return messages

    def message(self) -> Message:
        keyword = self.stream.expect("message")
        message = Message(name=self.ident("message name").text, line=keyword.line, column=keyword.column)
        self.stream.expect(TokenType.LBRACE)
        seen: dict = {}
        while not self.stream.accept(TokenType.RBRACE):
            token = self.stream.current
            if self.stream.accept("sender"):
                message.sender = self.ident("sender device").text
                self.stream.expect(TokenType.SEMICOLON)
            elif self.stream.accept({"receivers", "receiver"}):
                message.receivers.append(self.ident("receiver device").text)
                while self.stream.accept(TokenType.COMMA):
                    message.receivers.append(self.ident("receiver device").text)
                self.stream.expect(TokenType.SEMICOLON)
            elif self.stream.accept("mapping"):
                message.mapping.extend(self.mapping())
                continue
            else:
                param = self.param()
                message.params.append(param)
            self.unique(seen, Token(TokenType.IDENT, token.text, token.line, token.column), "message field")
        return message

    def mapping(self) -> list[MappingEntry]:
        self.stream.expect(TokenType.LBRACE)
        entries = []
        while not self.stream.accept(TokenType.RBRACE):
            target = self.ident("segment or gateway name")
            self.stream.expect(TokenType.COLON)
            kind = self.ident("traffic class")
            pool = None
            if kind.text == "pool":
                pool = self.ident("pool name").text
            elif kind.text in UNSUPPORTED_MAPPINGS:
                self.report(kind, f"unsupported mapping '{kind.text}'")
            elif kind.text not in MAPPING_KINDS:
                self.report(kind, f"unknown traffic class '{kind.text}'")
            body = self.body()
            self.stream.accept(TokenType.SEMICOLON)
            entries.append(MappingEntry(target=target.text, kind=kind.text, pool=pool, params=body.params,
                                        line=kind.line, column=kind.column))
        return entries

    def check_duplicates(self, network: Network) -> None:
        devices: dict = {}
        for device in network.devices:
            self.unique(devices, Token(TokenType.IDENT, device.name, device.line, device.column), "device")
        segments: dict = {}
        for segment in network.segments:
            self.unique(segments, Token(TokenType.IDENT, segment.name, segment.line, segment.column), "segment")
        messages: dict = {}
        for message in network.messages:
            self.unique(messages, Token(TokenType.IDENT, message.name, message.line, message.column), "message")

    # -- document ---------------------------------------------------------

    def document(self) -> Ast:
        ast = Ast()
        libraries: dict = {}
        while not self.stream.check(TokenType.EOF):
            if self.stream.check("types"):
                library = self.types_block()
                self.unique(libraries, Token(TokenType.IDENT, library.name, library.line, library.column),
                            "type library")
                ast.types.append(library)
            elif self.stream.check("network"):
                token = self.stream.current
                network = self.network_block()
                if ast.network is not None:
                    self.report(token, "only one network per document")
                ast.network = network
            else:
                raise self.stream.error("expected 'types' or 'network'")
        return ast


def parse(text: str) -> Ast:
    """Parse ANDL text; raise AndlError with every positioned diagnostic"""
    parser = Parser(text)
    try:
        ast = parser.document()
    except AndlError as exc:
        diagnostics = sorted([*parser.diagnostics, *exc.diagnostics], key=lambda d: (d.line, d.column))
        raise AndlError(diagnostics) from None
    except RecursionError:
        token = parser.stream.current
        raise AndlError([*parser.diagnostics,
                         Diagnostic(line=token.line, column=token.column, message="input nested too deeply")])
    if parser.diagnostics:
        raise AndlError(sorted(parser.diagnostics, key=lambda d: (d.line, d.column)))
    logger.debug(f"parsed network {ast.network.name if ast.network else '<none>'}")
    return ast
