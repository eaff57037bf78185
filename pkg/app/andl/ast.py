"""
Syntax tree of an ANDL document, plus the diagnostics raised while
building or checking it. Every node keeps the line/column it started at.
"""
from typing import Optional

from pydantic import BaseModel, Field


class Diagnostic(BaseModel):
    line: int
    column: int
    message: str
    severity: str = "error"

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


class AndlError(ValueError):
    """One or more positioned problems in an ANDL document"""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(str(d) for d in diagnostics))

    @classmethod
    def at(cls, line: int, column: int, message: str) -> "AndlError":
        return cls([Diagnostic(line=line, column=column, message=message)])


class Node(BaseModel):
    line: int = 0
    column: int = 0


class Value(Node):
    text: str
    kind: str  # "time" | "size" | "rate" | "number" | "name"
    number: Optional[int] = None


class Param(Node):
    name: str
    value: Optional[Value] = None


class Body(Node):
    """`{ new T; key value; ... }` - a type instantiation with refinements"""

    type_ref: Optional[str] = None
    params: list[Param] = Field(default_factory=list)


class TypeDef(Node):
    kind: str
    name: str
    extends: Optional[str] = None
    params: list[Param] = Field(default_factory=list)


class TypeLibrary(Node):
    name: str
    types: list[TypeDef] = Field(default_factory=list)


class Device(Node):
    kind: str
    name: str
    body: Optional[Body] = None


class Connection(Node):
    left: str
    right: str
    link: Optional[Body] = None


class Segment(Node):
    name: str
    connections: list[Connection] = Field(default_factory=list)


class MappingEntry(Node):
    target: str
    kind: str
    pool: Optional[str] = None
    params: list[Param] = Field(default_factory=list)


class Message(Node):
    name: str
    sender: Optional[str] = None
    receivers: list[str] = Field(default_factory=list)
    params: list[Param] = Field(default_factory=list)
    mapping: list[MappingEntry] = Field(default_factory=list)

    def param(self, name: str) -> Optional[Param]:
        for param in self.params:
            if param.name == name:
                return param
        return None


class Network(Node):
    name: str
    inline: dict[str, str] = Field(default_factory=dict)
    devices: list[Device] = Field(default_factory=list)
    segments: list[Segment] = Field(default_factory=list)
    messages: list[Message] = Field(default_factory=list)


class Ast(BaseModel):
    types: list[TypeLibrary] = Field(default_factory=list)
    network: Optional[Network] = None
