"""Typed IR for the contract language.

Every statement and declaration records the 1-indexed source line it came
from; instrumentation later attaches checks *around* statements rather than
inserting new ones, so these line numbers survive verbatim into reports.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class Ty(enum.Enum):
    UINT = "uint"
    BOOL = "bool"
    ADDRESS = "address"
    MAP1 = "mapping(address => uint)"
    MAP2 = "mapping(address => mapping(uint => uint))"
    TOKEN = "IERC20"

    def __str__(self) -> str:
        return self.value


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Num(Expr):
    value: int


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool


@dataclass(frozen=True)
class Name(Expr):
    """A state variable, local, or parameter reference."""

    ident: str


@dataclass(frozen=True)
class MsgSender(Expr):
    pass


@dataclass(frozen=True)
class BlockTimestamp(Expr):
    pass


@dataclass(frozen=True)
class AddressThis(Expr):
    """address(this): the contract's own account."""


@dataclass(frozen=True)
class Index1(Expr):
    """One-level mapping read: m[key]."""

    mapping: str
    key: Expr


@dataclass(frozen=True)
class Index2(Expr):
    """Two-level mapping read: m[k1][k2]. k1 is an address, k2 a uint."""

    mapping: str
    key1: Expr
    key2: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of + - * / == != < <= > >= && ||
    left: Expr
    right: Expr


@dataclass(frozen=True)
class NotOp(Expr):
    operand: Expr


@dataclass(frozen=True)
class BalanceOf(Expr):
    """token.balanceOf(addr) against the token stub's internal balance map."""

    token: str
    addr: Expr


@dataclass(frozen=True)
class TotalSupplyOf(Expr):
    token: str


# Candidate-template-only terms. They never appear in contract code; the
# type checker rejects them outside invariant expressions.


@dataclass(frozen=True)
class OldExpr(Expr):
    """Snapshot reference: the argument's value at the last capture point."""

    inner: Expr


@dataclass(frozen=True)
class SumMapping(Expr):
    """Sum of every cell of a mapping over the finite key universe."""

    mapping: str


@dataclass(frozen=True)
class KConst(Expr):
    """The candidate's volatility ratio; resolved per candidate (default 2)."""


@dataclass(frozen=True)
class CallExpr(Expr):
    """A contract-function call term, legal only in global invariants."""

    func: str
    args: tuple[Expr, ...] = ()


ARITH_OPS = ("+", "-", "*", "/")
CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")
BOOL_OPS = ("&&", "||")


# ---------------------------------------------------------------------------
# Statements
# ---------------------------------------------------------------------------


@dataclass
class Stmt:
    line: int = field(init=False, default=0)


def _with_line(stmt, line: int):
    stmt.line = line
    return stmt


@dataclass
class LValue:
    """Assignment target: a scalar name or a mapping cell."""

    name: str
    keys: tuple[Expr, ...] = ()  # 0, 1 or 2 keys


@dataclass
class Assign(Stmt):
    target: LValue = None  # type: ignore[assignment]
    expr: Expr = None  # type: ignore[assignment]

    def __init__(self, target: LValue, expr: Expr, line: int = 0):
        self.target = target
        self.expr = expr
        self.line = line


@dataclass
class LocalDecl(Stmt):
    name: str = ""
    ty: Ty = Ty.UINT
    expr: Expr = None  # type: ignore[assignment]

    def __init__(self, name: str, ty: Ty, expr: Expr, line: int = 0):
        self.name = name
        self.ty = ty
        self.expr = expr
        self.line = line


@dataclass
class Require(Stmt):
    cond: Expr = None  # type: ignore[assignment]
    message: str | None = None

    def __init__(self, cond: Expr, message: str | None = None, line: int = 0):
        self.cond = cond
        self.message = message
        self.line = line


@dataclass
class If(Stmt):
    cond: Expr = None  # type: ignore[assignment]
    then: list[Stmt] = None  # type: ignore[assignment]
    orelse: list[Stmt] = None  # type: ignore[assignment]

    def __init__(self, cond: Expr, then: list[Stmt], orelse: list[Stmt] | None = None, line: int = 0):
        self.cond = cond
        self.then = then
        self.orelse = orelse or []
        self.line = line


@dataclass
class While(Stmt):
    """Loop with a static unroll bound; executions past the bound revert."""

    cond: Expr = None  # type: ignore[assignment]
    body: list[Stmt] = None  # type: ignore[assignment]
    unroll: int = 4

    def __init__(self, cond: Expr, body: list[Stmt], unroll: int = 4, line: int = 0):
        self.cond = cond
        self.body = body
        self.unroll = unroll
        self.line = line


@dataclass
class Return(Stmt):
    expr: Expr | None = None

    def __init__(self, expr: Expr | None, line: int = 0):
        self.expr = expr
        self.line = line


@dataclass
class InternalCall(Stmt):
    func: str = ""
    args: list[Expr] = None  # type: ignore[assignment]

    def __init__(self, func: str, args: list[Expr], line: int = 0):
        self.func = func
        self.args = args
        self.line = line


@dataclass
class TokenCall(Stmt):
    """A call to a token stub: transfer/transferFrom/mint/mintReserve."""

    token: str = ""
    method: str = ""
    args: list[Expr] = None  # type: ignore[assignment]

    def __init__(self, token: str, method: str, args: list[Expr], line: int = 0):
        self.token = token
        self.method = method
        self.args = args
        self.line = line


# ---------------------------------------------------------------------------
# Declarations
# ---------------------------------------------------------------------------


@dataclass
class Param:
    name: str
    ty: Ty


@dataclass
class VarDecl:
    name: str
    ty: Ty
    line: int


@dataclass
class ModifierDecl:
    """A named require prologue; attaching it guards the function."""

    name: str
    cond: Expr
    line: int


@dataclass
class FunctionIr:
    name: str
    params: list[Param]
    visibility: str  # external | public | internal | constructor
    body: list[Stmt]
    line: int
    return_ty: Ty | None = None
    modifiers: list[str] = field(default_factory=list)

    @property
    def is_public(self) -> bool:
        return self.visibility in ("external", "public")


@dataclass
class SourceFile:
    """Raw input plus the comment map the prompt tiers consume.

    lines are 1-indexed; comments is a list of (line, text) with the
    delimiters stripped, in source order.
    """

    path: str
    text: str
    comments: list[tuple[int, str]] = field(default_factory=list)

    @classmethod
    def from_text(cls, text: str, path: str = "<memory>") -> "SourceFile":
        return cls(path=path, text=text)

    @classmethod
    def from_path(cls, path: str) -> "SourceFile":
        with open(path, "r", encoding="utf-8") as fh:
            return cls(path=path, text=fh.read())

    @property
    def lines(self) -> list[str]:
        return self.text.splitlines()


@dataclass
class ContractIr:
    name: str
    state_vars: list[VarDecl] = field(default_factory=list)
    mappings: list[VarDecl] = field(default_factory=list)
    token_stubs: list[str] = field(default_factory=list)
    token_stub_lines: dict[str, int] = field(default_factory=dict)
    modifiers: list[ModifierDecl] = field(default_factory=list)
    constructor: FunctionIr | None = None
    functions: list[FunctionIr] = field(default_factory=list)
    source: SourceFile | None = None
    # populated by instrumentation (see minisol.invariants); empty on a
    # freshly parsed contract
    global_checks: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    instrumented: list[str] = field(default_factory=list)

    def declare_token_stub(self, name: str, line: int = 0) -> None:
        """Programmatic equivalent of an `IERC20 name;` declaration."""
        from ..errors import DuplicateDecl

        if name in self.token_stubs or self.lookup(name) is not None:
            raise DuplicateDecl(f"duplicate declaration of {name!r}", line)
        self.token_stubs.append(name)
        self.token_stub_lines[name] = line

    def lookup(self, name: str) -> VarDecl | None:
        for v in self.state_vars:
            if v.name == name:
                return v
        for m in self.mappings:
            if m.name == name:
                return m
        return None

    def function(self, name: str) -> FunctionIr | None:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def modifier(self, name: str) -> ModifierDecl | None:
        for m in self.modifiers:
            if m.name == name:
                return m
        return None

    @property
    def public_functions(self) -> list[FunctionIr]:
        return [f for f in self.functions if f.is_public]
