"""Invariant templates: program points, candidate parsing, and instrumentation.

A candidate arrives as one line of text, e.g.

    15+ assert(price <= Old(price) * k);
    10+ modifier onlyOwner{require(msg.sender==owner);};
    12 function tokenIncrease() onlyOwner external {...};

The leading token is the program-point anchor ("N" = at line N, "N+" =
immediately after line N). Parsing resolves the template form, type-checks
the expression against the contract IR, and yields an InvariantCandidate;
anything unusable comes back as a SyntaxReject value rather than an
exception so batch callers can keep going.

Instrumentation weaves a parsed candidate into a fresh copy of the IR:
check statements around anchored statements, guard prologues for modifiers
and Assume, exit checks for Ensures, and registered contract-level checks
for Invariant(...). Old(...) terms become persistent snapshot cells that are
re-captured at the entry of every transaction that can write what they read.
"""

from __future__ import annotations

import copy
import enum
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .errors import (
    AnchorMismatch,
    CandidateSyntaxError,
    DuplicateDecl,
    DuplicateInstrumentation,
    MiniSolError,
)
from .lang import ast
from .lang.parser import parse_expression
from .lang.typecheck import TOKEN_ALIASES, ExprChecker, iter_stmts


# ---------------------------------------------------------------------------
# Program points
# ---------------------------------------------------------------------------


class Placement(enum.Enum):
    AT_LINE = "AtLine"
    AFTER_LINE = "AfterLine"


_POINT_RE = re.compile(r"^(\d+)(\+?)$")


@dataclass(frozen=True)
class ProgramPoint:
    """A source position: a line, or the slot immediately after it."""

    line: int
    placement: Placement = Placement.AT_LINE

    def __lt__(self, other: "ProgramPoint") -> bool:
        return (self.line, self.after) < (other.line, other.after)

    @classmethod
    def parse(cls, text: str) -> "ProgramPoint":
        m = _POINT_RE.match(text.strip())
        if not m or int(m.group(1)) < 1:
            raise CandidateSyntaxError(f"bad program point {text!r}", raw=text)
        placement = Placement.AFTER_LINE if m.group(2) else Placement.AT_LINE
        return cls(line=int(m.group(1)), placement=placement)

    def render(self) -> str:
        return f"{self.line}+" if self.placement is Placement.AFTER_LINE else str(self.line)

    @property
    def after(self) -> bool:
        return self.placement is Placement.AFTER_LINE


# ---------------------------------------------------------------------------
# Candidate forms
# ---------------------------------------------------------------------------


class CandidateKind(enum.Enum):
    ASSERTION = "Assertion"
    ASSUME = "Assume"
    ENSURES = "Ensures"
    REQUIRE = "Require"
    MODIFIER = "ModifierInstrumentation"
    GLOBAL_INVARIANT = "GlobalInvariant"


@dataclass(frozen=True)
class SyntaxReject:
    """A candidate the pipeline must record but never verify."""

    raw: str
    reason: str


@dataclass(frozen=True)
class SumMappingTerm:
    target: str
    depth: int  # 1 or 2


@dataclass
class InvariantCandidate:
    anchor: ProgramPoint
    kind: CandidateKind
    raw_text: str
    expr: ast.Expr | None = None
    k: Fraction = Fraction(2)
    message: str | None = None
    # modifier-definition form
    modifier_name: str | None = None
    modifier_cond: ast.Expr | None = None
    # modifier-attachment form
    attach_function: str | None = None
    attach_modifiers: tuple[str, ...] = ()
    paired_defs: tuple["InvariantCandidate", ...] = ()

    @property
    def key(self) -> str:
        """Stable identity used in reports, traces, and duplicate detection."""
        body = self.raw_text
        m = _ANCHOR_RE.match(body.strip())
        if m:
            body = m.group(2)
        return f"{self.anchor.render()} {' '.join(body.split())}"

    @property
    def is_transformation(self) -> bool:
        """Guards reshape behavior instead of asserting a checkable claim."""
        return self.kind in (CandidateKind.REQUIRE, CandidateKind.ASSUME, CandidateKind.MODIFIER)


# Checks as they appear post-instrumentation -------------------------------


@dataclass(frozen=True)
class Check:
    """One evaluable obligation attached to the program."""

    expr: ast.Expr
    kind: str  # assert | ensures | invariant | loop-invariant | gas
    candidate_key: str
    anchor: ProgramPoint


@dataclass
class CheckStmt(ast.Stmt):
    """Evaluate a check; a false result is a violation, not a revert."""

    check: Check = None  # type: ignore[assignment]

    def __init__(self, check: Check, line: int = 0):
        self.check = check
        self.line = line


@dataclass
class GuardStmt(ast.Stmt):
    """An instrumented require: false means revert, exactly like source requires."""

    cond: ast.Expr = None  # type: ignore[assignment]
    message: str | None = None
    candidate_key: str = ""

    def __init__(self, cond: ast.Expr, message: str | None, candidate_key: str, line: int = 0):
        self.cond = cond
        self.message = message
        self.candidate_key = candidate_key
        self.line = line


@dataclass(frozen=True)
class SnapshotRef(ast.Expr):
    """Reference to a persistent snapshot cell inside a check expression."""

    cell: str


@dataclass(frozen=True)
class FracConst(ast.Expr):
    """An exact rational literal (the resolved volatility ratio k)."""

    value: Fraction


@dataclass(frozen=True)
class SnapshotSpec:
    """One snapshot cell: what it mirrors and which transactions refresh it.

    The cell is seeded from the post-constructor state and re-captured at
    the entry of every transaction whose write set intersects the reads of
    the mirrored expression. Within such a transaction the cell therefore
    holds the entry value, which is what Old(...) denotes there; across
    other transactions it keeps the last captured value.
    """

    cell: str
    expr: ast.Expr
    recapture: frozenset[str]


# ---------------------------------------------------------------------------
# Expression utilities
# ---------------------------------------------------------------------------


def map_expr(e: ast.Expr, fn) -> ast.Expr:
    """Bottom-up rewrite; fn sees each node after its children were rebuilt."""
    match e:
        case ast.Index1(m, k):
            e = ast.Index1(m, map_expr(k, fn))
        case ast.Index2(m, k1, k2):
            e = ast.Index2(m, map_expr(k1, fn), map_expr(k2, fn))
        case ast.BinOp(op, l, r):
            e = ast.BinOp(op, map_expr(l, fn), map_expr(r, fn))
        case ast.NotOp(x):
            e = ast.NotOp(map_expr(x, fn))
        case ast.BalanceOf(t, a):
            e = ast.BalanceOf(t, map_expr(a, fn))
        case ast.OldExpr(inner):
            e = ast.OldExpr(map_expr(inner, fn))
        case ast.CallExpr(f, args):
            e = ast.CallExpr(f, tuple(map_expr(a, fn) for a in args))
        case _:
            pass
    return fn(e)


def walk_expr(e: ast.Expr) -> Iterable[ast.Expr]:
    yield e
    match e:
        case ast.Index1(_, k):
            yield from walk_expr(k)
        case ast.Index2(_, k1, k2):
            yield from walk_expr(k1)
            yield from walk_expr(k2)
        case ast.BinOp(_, l, r):
            yield from walk_expr(l)
            yield from walk_expr(r)
        case ast.NotOp(x):
            yield from walk_expr(x)
        case ast.BalanceOf(_, a):
            yield from walk_expr(a)
        case ast.OldExpr(inner):
            yield from walk_expr(inner)
        case ast.CallExpr(_, args):
            for a in args:
                yield from walk_expr(a)
        case _:
            pass


def sum_terms(e: ast.Expr) -> list[SumMappingTerm]:
    out = []
    for node in walk_expr(e):
        if isinstance(node, ast.SumMapping):
            out.append(SumMappingTerm(target=node.mapping, depth=1))
    return out


def expr_reads(e: ast.Expr, ir: ast.ContractIr) -> frozenset[str]:
    """State cells an expression depends on: var names, mappings, token names."""
    reads: set[str] = set()
    for node in walk_expr(e):
        match node:
            case ast.Name(ident):
                if ir.lookup(ident) is not None:
                    reads.add(ident)
            case ast.Index1(m, _) | ast.Index2(m, _, _):
                reads.add(m)
            case ast.SumMapping(m):
                reads.add(m)
            case ast.BalanceOf(t, _) | ast.TotalSupplyOf(t):
                reads.add(t)
            case ast.CallExpr(f, _):
                fn = ir.function(f)
                if fn is not None:
                    reads |= fn_reads(ir, fn)
            case _:
                pass
    return frozenset(reads)


def _stmt_writes(stmt: ast.Stmt, ir: ast.ContractIr, acc: set[str]) -> None:
    match stmt:
        case ast.Assign(target, _):
            if ir.lookup(target.name) is not None:  # locals are not state cells
                acc.add(target.name)
        case ast.TokenCall(token, method, _):
            if TOKEN_ALIASES.get(method, method) in (
                "transfer", "transferFrom", "mint", "mintReserve",
            ):
                acc.add(token)
        case ast.InternalCall(fname, _):
            callee = ir.function(fname)
            if callee is not None:
                acc |= mod_set(ir, callee.name)
        case _:
            pass


def mod_set(ir: ast.ContractIr, fn_name: str) -> frozenset[str]:
    """State cells a function may write, transitively through internal calls."""
    fn = ir.function(fn_name)
    if fn is None:
        return frozenset()
    acc: set[str] = set()
    for stmt in iter_stmts(fn.body):
        _stmt_writes(stmt, ir, acc)
    return frozenset(acc)


def fn_reads(ir: ast.ContractIr, fn: ast.FunctionIr) -> frozenset[str]:
    reads: set[str] = set()
    for stmt in iter_stmts(fn.body):
        for e in _stmt_exprs(stmt):
            reads |= expr_reads(e, ir)
        if isinstance(stmt, ast.InternalCall):
            callee = ir.function(stmt.func)
            if callee is not None:
                reads |= fn_reads(ir, callee)
    return frozenset(reads)


def _stmt_exprs(stmt: ast.Stmt) -> list[ast.Expr]:
    match stmt:
        case ast.Assign(target, expr):
            return [expr, *target.keys]
        case ast.LocalDecl(_, _, expr):
            return [expr]
        case ast.Require(cond, _):
            return [cond]
        case ast.If(cond, _, _):
            return [cond]
        case ast.While(cond, _, _):
            return [cond]
        case ast.Return(expr):
            return [expr] if expr is not None else []
        case ast.InternalCall(_, args) | ast.TokenCall(_, _, args):
            return list(args)
        case CheckStmt(check):
            return [check.expr]
        case GuardStmt():
            return [stmt.cond]
        case _:
            return []


def transaction_writes(ir: ast.ContractIr) -> dict[str, frozenset[str]]:
    """Write sets per transaction kind: public functions plus token-stub moves."""
    out = {f.name: mod_set(ir, f.name) for f in ir.public_functions}
    for token in ir.token_stubs:
        out[f"{token}.transfer"] = frozenset({token})
        out[f"{token}.transferFrom"] = frozenset({token})
    return out


# ---------------------------------------------------------------------------
# Candidate parsing
# ---------------------------------------------------------------------------

_ANCHOR_RE = re.compile(r"^(\d+\+?)\s+(.*)$", re.S)
_CALL_FORM_RE = re.compile(r"^(assert|Assume|Ensures|require|Invariant)\s*\((.*)\)\s*;?\s*$", re.S)
_MODIFIER_RE = re.compile(
    r"^modifier\s+([A-Za-z_]\w*)\s*\{\s*require\s*\((.*)\)\s*;?\s*\}\s*;?\s*$", re.S
)
_ATTACH_RE = re.compile(
    r"^function\s+([A-Za-z_]\w*)\s*\(([^)]*)\)\s*([^{}]*?)\s*\{.*\}\s*;?\s*$", re.S
)
_VISIBILITY_WORDS = {"external", "public", "internal", "returns", "uint", "bool", "address"}

_KIND_BY_HEAD = {
    "assert": CandidateKind.ASSERTION,
    "Assume": CandidateKind.ASSUME,
    "Ensures": CandidateKind.ENSURES,
    "require": CandidateKind.REQUIRE,
    "Invariant": CandidateKind.GLOBAL_INVARIANT,
}


def _split_top_comma(text: str) -> list[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    return parts


def _normalize_candidate_expr(e: ast.Expr) -> ast.Expr:
    """Rewrite surface call syntax into the dedicated template nodes."""

    def rw(node: ast.Expr) -> ast.Expr:
        match node:
            case ast.Name("k"):
                return ast.KConst()
            case ast.CallExpr("Old", (inner,)):
                return ast.OldExpr(inner)
            case ast.CallExpr(("sumMapping" | "SumMapping"), (ast.Name(m),)):
                return ast.SumMapping(m)
            case _:
                return node

    return map_expr(e, rw)


def _max_source_line(ir: ast.ContractIr) -> int:
    if ir.source is not None:
        return max(1, len(ir.source.lines))
    lines = [ir.constructor.line if ir.constructor else 1]
    for f in ir.functions:
        lines.append(f.line)
        lines.extend(s.line for s in iter_stmts(f.body))
    return max(lines) + 1


def function_span(fn: ast.FunctionIr) -> tuple[int, int]:
    """Signature line through the last statement line (nested included)."""
    last = fn.line
    for s in iter_stmts(fn.body):
        last = max(last, s.line)
    return fn.line, last


def scope_locals(ir: ast.ContractIr, point: ProgramPoint) -> dict[str, ast.Ty]:
    """Names visible to a candidate anchored at this point."""
    for fn in list(ir.functions) + ([ir.constructor] if ir.constructor else []):
        lo, hi = function_span(fn)
        if lo <= point.line <= hi:
            env = {p.name: p.ty for p in fn.params}
            for s in iter_stmts(fn.body):
                if isinstance(s, ast.LocalDecl) and s.line <= point.line:
                    env[s.name] = s.ty
            return env
    return {}


def _reject(raw: str, reason: str) -> SyntaxReject:
    return SyntaxReject(raw=raw, reason=reason)


def parse_candidate(
    text: str,
    ir: ast.ContractIr,
    *,
    k: Fraction | None = None,
    peer_modifiers: Mapping[str, "InvariantCandidate"] | None = None,
) -> InvariantCandidate | SyntaxReject:
    """Parse one `<anchor> <template>;` line against a type-checked IR.

    peer_modifiers supplies modifier definitions proposed in the same batch,
    so an attachment candidate can reference a sibling definition that is
    not (yet) part of the contract.
    """
    raw = text.strip()
    m = _ANCHOR_RE.match(raw)
    if not m:
        return _reject(raw, "missing program point anchor")
    try:
        anchor = ProgramPoint.parse(m.group(1))
    except CandidateSyntaxError as err:
        return _reject(raw, str(err))
    if anchor.line > _max_source_line(ir):
        return _reject(raw, f"anchor line {anchor.line} is outside the contract")
    body = m.group(2).strip()
    kk = k if k is not None else Fraction(2)

    mod = _MODIFIER_RE.match(body)
    if mod:
        return _parse_modifier_def(raw, anchor, mod, ir, kk)
    att = _ATTACH_RE.match(body)
    if att:
        return _parse_attach(raw, anchor, att, ir, kk, peer_modifiers or {})
    call = _CALL_FORM_RE.match(body)
    if not call:
        return _reject(raw, "unrecognized template form")
    head, inner = call.group(1), call.group(2)
    kind = _KIND_BY_HEAD[head]

    message = None
    if kind is CandidateKind.REQUIRE:
        parts = _split_top_comma(inner)
        if len(parts) == 2:
            msg = parts[1].strip()
            if not (msg.startswith('"') and msg.endswith('"')):
                return _reject(raw, "require message must be a string literal")
            inner, message = parts[0], msg[1:-1]
        elif len(parts) > 2:
            return _reject(raw, "too many arguments to require")

    try:
        expr = _normalize_candidate_expr(parse_expression(inner))
    except MiniSolError as err:
        return _reject(raw, f"bad expression: {err}")

    reason = _validate_candidate_expr(expr, kind, anchor, ir)
    if reason is not None:
        return _reject(raw, reason)
    return InvariantCandidate(
        anchor=anchor, kind=kind, raw_text=raw, expr=expr, k=kk, message=message
    )


def _validate_candidate_expr(
    expr: ast.Expr, kind: CandidateKind, anchor: ProgramPoint, ir: ast.ContractIr
) -> str | None:
    has_old = any(isinstance(n, ast.OldExpr) for n in walk_expr(expr))
    has_call = any(isinstance(n, ast.CallExpr) for n in walk_expr(expr))
    if has_old and kind not in (CandidateKind.ASSERTION, CandidateKind.ENSURES):
        return "Old(...) is only legal in assert and Ensures candidates"
    if has_call and kind is not CandidateKind.GLOBAL_INVARIANT:
        return "function-return terms are only legal in Invariant(...) candidates"
    locals_ = scope_locals(ir, anchor)
    try:
        ExprChecker(ir, locals_, candidate_mode=True, line=anchor.line).check(expr, ast.Ty.BOOL)
    except MiniSolError as err:
        return f"does not type-check: {err}"
    return None


def _parse_modifier_def(raw, anchor, m: re.Match, ir, k) -> InvariantCandidate | SyntaxReject:
    name, cond_text = m.group(1), m.group(2)
    try:
        cond = parse_expression(cond_text)
        ExprChecker(ir, {}, candidate_mode=False, line=anchor.line).check(cond, ast.Ty.BOOL)
    except MiniSolError as err:
        return _reject(raw, f"bad modifier condition: {err}")
    return InvariantCandidate(
        anchor=anchor,
        kind=CandidateKind.MODIFIER,
        raw_text=raw,
        k=k,
        modifier_name=name,
        modifier_cond=cond,
    )


def _parse_attach(raw, anchor, m: re.Match, ir, k, peers) -> InvariantCandidate | SyntaxReject:
    fname, head_tail = m.group(1), m.group(3)
    mods = tuple(
        w for w in re.findall(r"[A-Za-z_]\w*", head_tail) if w not in _VISIBILITY_WORDS
    )
    fn = ir.function(fname)
    if fn is None:
        return _reject(raw, f"unknown function {fname!r}")
    if not mods:
        return _reject(raw, "attachment names no modifier")
    paired = []
    for name in mods:
        if ir.modifier(name) is not None:
            continue
        peer = peers.get(name)
        if peer is None:
            return _reject(raw, f"unknown modifier {name!r}")
        paired.append(peer)
    return InvariantCandidate(
        anchor=anchor,
        kind=CandidateKind.MODIFIER,
        raw_text=raw,
        k=k,
        attach_function=fname,
        attach_modifiers=mods,
        paired_defs=tuple(paired),
    )


def parse_candidates(
    entries: Iterable[tuple[str, Fraction | None]],
    ir: ast.ContractIr,
) -> list[InvariantCandidate | SyntaxReject]:
    """Parse a batch, letting attachments see sibling modifier definitions."""
    items = list(entries)
    peers: dict[str, InvariantCandidate] = {}
    first_pass: list[InvariantCandidate | SyntaxReject | None] = []
    for text, k in items:
        body = _ANCHOR_RE.match(text.strip())
        if body and _MODIFIER_RE.match(body.group(2).strip()):
            cand = parse_candidate(text, ir, k=k)
            if isinstance(cand, InvariantCandidate) and cand.modifier_name:
                peers.setdefault(cand.modifier_name, cand)
            first_pass.append(cand)
        else:
            first_pass.append(None)
    out: list[InvariantCandidate | SyntaxReject] = []
    for (text, k), pre in zip(items, first_pass):
        out.append(pre if pre is not None else parse_candidate(text, ir, k=k, peer_modifiers=peers))
    return out


# ---------------------------------------------------------------------------
# Instrumentation
# ---------------------------------------------------------------------------


def _resolve_k_and_old(
    expr: ast.Expr, cand: InvariantCandidate, ir: ast.ContractIr, cells: list[SnapshotSpec]
) -> ast.Expr:
    """Materialize k and allocate snapshot cells for each distinct Old term."""
    writes = transaction_writes(ir)
    by_inner: dict[ast.Expr, str] = {s.expr: s.cell for s in cells}

    def rw(node: ast.Expr) -> ast.Expr:
        match node:
            case ast.KConst():
                return FracConst(cand.k)
            case ast.OldExpr(inner):
                cell = by_inner.get(inner)
                if cell is None:
                    cell = f"__old{len(cells)}"
                    reads = expr_reads(inner, ir)
                    recapture = frozenset(
                        tx for tx, wset in writes.items() if wset & reads
                    )
                    cells.append(SnapshotSpec(cell=cell, expr=inner, recapture=recapture))
                    by_inner[inner] = cell
                return SnapshotRef(cell)
            case _:
                return node

    return map_expr(expr, rw)


class _Locator:
    """Find where a source line lives in the IR."""

    def __init__(self, ir: ast.ContractIr):
        self.ir = ir

    def all_functions(self) -> list[ast.FunctionIr]:
        fns = list(self.ir.functions)
        if self.ir.constructor is not None:
            fns.append(self.ir.constructor)
        return fns

    def signature_at(self, line: int) -> ast.FunctionIr | None:
        for fn in self.all_functions():
            if fn.line == line:
                return fn
        return None

    def statement_at(self, line: int) -> tuple[list[ast.Stmt], int] | None:
        for fn in self.all_functions():
            found = self._find_in_block(fn.body, line)
            if found is not None:
                return found
        return None

    def _find_in_block(self, block: list[ast.Stmt], line: int):
        for i, stmt in enumerate(block):
            if stmt.line == line and not isinstance(stmt, (CheckStmt, GuardStmt)):
                return block, i
            if isinstance(stmt, ast.If):
                hit = self._find_in_block(stmt.then, line) or self._find_in_block(
                    stmt.orelse, line
                )
                if hit is not None:
                    return hit
            elif isinstance(stmt, ast.While):
                hit = self._find_in_block(stmt.body, line)
                if hit is not None:
                    return hit
        return None

    def enclosing_function(self, line: int) -> ast.FunctionIr | None:
        for fn in self.all_functions():
            lo, hi = function_span(fn)
            if lo <= line <= hi:
                return fn
        return None


def instrument(ir: ast.ContractIr, cand: InvariantCandidate) -> ast.ContractIr:
    """Return a new IR with the candidate woven in; the input is untouched."""
    work = copy.deepcopy(ir)
    _instrument_into(work, cand)
    return work


def instrument_all(ir: ast.ContractIr, cands: Iterable[InvariantCandidate]) -> ast.ContractIr:
    work = copy.deepcopy(ir)
    for cand in cands:
        _instrument_into(work, cand)
    return work


def _instrument_into(work: ast.ContractIr, cand: InvariantCandidate) -> None:
    applied = _applied_registry(work)
    for dep in cand.paired_defs:
        if dep.key not in applied:
            _instrument_into(work, dep)
            applied = _applied_registry(work)
    if cand.key in applied:
        raise DuplicateInstrumentation(f"candidate already instrumented: {cand.key}")
    applied.append(cand.key)

    loc = _Locator(work)
    if cand.kind is CandidateKind.MODIFIER:
        _instrument_modifier(work, cand, loc)
        return

    assert cand.expr is not None
    expr = _resolve_k_and_old(cand.expr, cand, work, work.snapshots)

    if cand.kind is CandidateKind.GLOBAL_INVARIANT:
        _instrument_global(work, cand, expr, loc)
        return
    if cand.kind is CandidateKind.ASSUME:
        fn = loc.signature_at(cand.anchor.line)
        if fn is None or cand.anchor.after:
            raise AnchorMismatch(
                f"Assume must anchor at a function signature line, got {cand.anchor.render()}"
            )
        fn.body.insert(0, GuardStmt(expr, None, cand.key, line=cand.anchor.line))
        return
    if cand.kind is CandidateKind.ENSURES:
        fn = loc.signature_at(cand.anchor.line)
        if fn is None or cand.anchor.after:
            raise AnchorMismatch(
                f"Ensures must anchor at a function signature line, got {cand.anchor.render()}"
            )
        check = Check(expr, "ensures", cand.key, cand.anchor)
        _insert_at_exits(fn.body, check, cand.anchor.line)
        if not (fn.body and isinstance(fn.body[-1], ast.Return)):
            fn.body.append(CheckStmt(check, line=cand.anchor.line))
        return

    # Assertion / Require at a statement position
    hit = loc.statement_at(cand.anchor.line)
    if hit is None:
        raise AnchorMismatch(
            f"{cand.kind.value} anchor {cand.anchor.render()} does not name a statement"
        )
    block, i = hit
    at = i + 1 if cand.anchor.after else i
    if cand.kind is CandidateKind.REQUIRE:
        block.insert(at, GuardStmt(expr, cand.message, cand.key, line=cand.anchor.line))
    else:
        check = Check(expr, "assert", cand.key, cand.anchor)
        block.insert(at, CheckStmt(check, line=cand.anchor.line))


def _instrument_modifier(work: ast.ContractIr, cand: InvariantCandidate, loc: _Locator) -> None:
    if cand.modifier_name is not None:
        if loc.statement_at(cand.anchor.line) or loc.signature_at(cand.anchor.line):
            raise AnchorMismatch(
                f"modifier definition must anchor at contract scope, got {cand.anchor.render()}"
            )
        if work.modifier(cand.modifier_name) is not None:
            raise DuplicateDecl(
                f"modifier {cand.modifier_name!r} already exists", cand.anchor.line
            )
        work.modifiers.append(
            ast.ModifierDecl(cand.modifier_name, cand.modifier_cond, cand.anchor.line)
        )
        return
    fn = loc.signature_at(cand.anchor.line)
    if fn is None or cand.anchor.after or fn.name != cand.attach_function:
        raise AnchorMismatch(
            f"modifier attachment must anchor at the signature line of "
            f"{cand.attach_function!r}, got {cand.anchor.render()}"
        )
    for name in cand.attach_modifiers:
        if work.modifier(name) is None:
            raise AnchorMismatch(f"modifier {name!r} is not defined")
        if name not in fn.modifiers:
            fn.modifiers.append(name)


def _instrument_global(
    work: ast.ContractIr, cand: InvariantCandidate, expr: ast.Expr, loc: _Locator
) -> None:
    hit = loc.statement_at(cand.anchor.line)
    if hit is not None:
        block, i = hit
        stmt = block[i]
        if not isinstance(stmt, ast.While) or cand.anchor.after:
            raise AnchorMismatch(
                "Invariant(...) must anchor outside function bodies or at a loop head"
            )
        # dynamic loop invariant: checked before entry and after each iteration
        check = Check(expr, "loop-invariant", cand.key, cand.anchor)
        block.insert(i, CheckStmt(check, line=cand.anchor.line))
        stmt.body.append(CheckStmt(check, line=cand.anchor.line))
        return
    if loc.signature_at(cand.anchor.line) is not None:
        raise AnchorMismatch("Invariant(...) cannot anchor at a function signature")
    enclosing = loc.enclosing_function(cand.anchor.line)
    if enclosing is not None and enclosing.line != cand.anchor.line:
        raise AnchorMismatch(
            "Invariant(...) must anchor outside function bodies or at a loop head"
        )
    work.global_checks.append(Check(expr, "invariant", cand.key, cand.anchor))


def _insert_at_exits(block: list[ast.Stmt], check: Check, line: int) -> None:
    i = 0
    while i < len(block):
        stmt = block[i]
        if isinstance(stmt, ast.Return):
            block.insert(i, CheckStmt(check, line=line))
            i += 1
        elif isinstance(stmt, ast.If):
            _insert_at_exits(stmt.then, check, line)
            _insert_at_exits(stmt.orelse, check, line)
        elif isinstance(stmt, ast.While):
            _insert_at_exits(stmt.body, check, line)
        i += 1


def _applied_registry(work: ast.ContractIr) -> list[str]:
    return work.instrumented


def anchored_checks(work: ast.ContractIr) -> list[Check]:
    """All checks woven into statement streams, in program order."""
    out: list[Check] = []
    fns = list(work.functions) + ([work.constructor] if work.constructor else [])
    for fn in fns:
        for stmt in iter_stmts(fn.body):
            if isinstance(stmt, CheckStmt):
                out.append(stmt.check)
    return out
