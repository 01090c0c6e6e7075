"""Symbolic path enumeration over the lowered form.

The constraint store is purely conjunctive, so every disjunction in the
program semantics becomes a fork: branch conditions, overflow outcomes,
token-move regimes, mapping reads with a not-yet-known key, and check
failures each split the current path. A completed path carries exactly
the declarations and literals needed to rebuild its feasibility query
in a fresh Store, in a deterministic order; lexicographic model
minimization then makes whole counterexample traces canonical.

Two arithmetic regimes mirror the interpreter:

  * code expressions run on W-bit words, with revert forks (or wrap
    encodings) at the word boundary and a revert fork on zero divisors;
  * check expressions are exact over the rationals; division is floored
    and totalized to 0 on zero divisors, which is precisely the AuxDef
    "div" semantics, so no fork is needed there at all.

Mappings are keyed by addresses first, and the address universe is tiny,
so first keys are concretized per address (a read under a symbolic key
forks over the universe). Second keys of two-level mappings range over
machine words; those reads walk the path's own write chain and fall back
to a per-path registry of base cells with equality splits against the
keys already seen, which keeps the encoding exact within a path.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from fractions import Fraction
from math import ceil, floor, lcm
from typing import Callable, Iterable, Sequence

from .errors import ResourceBudgetExceeded, UnsupportedConstruct
from .invariants import CheckStmt, FracConst, GuardStmt, SnapshotRef
from .lang import ast
from .lang.typecheck import TOKEN_ALIASES
from .semantics import (
    CONTRACT_ADDR,
    DEPLOYER,
    GAS_CANDIDATE_KEY,
    GAS_FREE,
    CallFrame,
    LoopBoundRevert,
    Proc,
    TransitionSystem,
)
from .solver import AuxDef, Store, scaled_cmp

_OP_FN: dict[str, Callable] = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}

_NEG_OP = {"==": "!=", "!=": "==", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}


# -- affine values -------------------------------------------------------------


@dataclass(frozen=True)
class Lin:
    """Affine form over solver variables with rational coefficients."""

    terms: tuple[tuple[str, Fraction], ...] = ()
    const: Fraction = Fraction(0)

    @classmethod
    def of(cls, v) -> "Lin":
        return cls((), Fraction(v))

    @classmethod
    def var(cls, name: str) -> "Lin":
        return cls(((name, Fraction(1)),), Fraction(0))

    @staticmethod
    def _merge(terms: Iterable[tuple[str, Fraction]]) -> tuple:
        acc: dict[str, Fraction] = {}
        for name, c in terms:
            acc[name] = acc.get(name, Fraction(0)) + c
        return tuple(sorted((n, c) for n, c in acc.items() if c != 0))

    def __add__(self, other: "Lin") -> "Lin":
        return Lin(self._merge(self.terms + other.terms), self.const + other.const)

    def __sub__(self, other: "Lin") -> "Lin":
        return self + other.scale(-1)

    def scale(self, f) -> "Lin":
        f = Fraction(f)
        if f == 0:
            return Lin()
        return Lin(tuple((n, c * f) for n, c in self.terms), self.const * f)

    def shift(self, v) -> "Lin":
        return Lin(self.terms, self.const + Fraction(v))

    @property
    def is_const(self) -> bool:
        return not self.terms

    def const_int(self) -> int:
        assert self.is_const and self.const.denominator == 1, self
        return int(self.const)

    def denominator(self) -> int:
        return lcm(self.const.denominator, *(c.denominator for _, c in self.terms)) \
            if self.terms else self.const.denominator

    def single_var(self) -> str | None:
        """The variable name when this is exactly one unscaled variable."""
        if self.const == 0 and len(self.terms) == 1 and self.terms[0][1] == 1:
            return self.terms[0][0]
        return None

    def cmp_parts(self) -> tuple[list, Fraction]:
        """(coeff, var) pairs and the right-hand constant for scaled_cmp."""
        return [(c, n) for n, c in self.terms], -self.const

    def interval(self, bounds: dict[str, tuple[int, int]]) -> tuple[Fraction, Fraction]:
        lo = hi = self.const
        for name, c in self.terms:
            vlo, vhi = bounds[name]
            if c > 0:
                lo, hi = lo + c * vlo, hi + c * vhi
            else:
                lo, hi = lo + c * vhi, hi + c * vlo
        return lo, hi

    def eval(self, values: dict[str, int]) -> Fraction:
        return self.const + sum(
            (c * values[n] for n, c in self.terms), start=Fraction(0)
        )


ZERO = Lin()
ONE = Lin.of(1)


# -- path state ----------------------------------------------------------------


@dataclass
class Map2Col:
    """One address slice of a two-level mapping along one path.

    Reads consult the write chain newest-first; misses hit the base,
    which is all zeros after deployment and a registry of fresh
    variables (split on key equality) under a havocked pre-state.
    """

    writes: list[tuple[Lin, Lin]] = field(default_factory=list)
    reads: list[tuple[Lin, str]] = field(default_factory=list)
    base_zero: bool = True

    def copy(self) -> "Map2Col":
        return Map2Col(list(self.writes), list(self.reads), self.base_zero)


@dataclass(frozen=True)
class Halt:
    """Terminal outcome of one path through a procedure."""

    status: str  # reverted | violation | gas
    detail: str | None = None


class _Marker:
    def __init__(self, name: str):
        self._name = name

    def __repr__(self):
        return self._name


FELL = _Marker("FELL")  # block execution ran off the end
CALL_FAILED = _Marker("CALL_FAILED")  # a call term produced no value


@dataclass(frozen=True)
class _Returned:
    value: Lin | None


def _abnormal(v) -> bool:
    return isinstance(v, Halt) or v is CALL_FAILED


@dataclass
class PathCtx:
    """Constraints plus symbolic machine state along one path."""

    decls: list[tuple[str, int, int]] = field(default_factory=list)
    lits: list = field(default_factory=list)
    cost: int = 0
    counters: dict[str, int] = field(default_factory=dict)
    scalars: dict[str, Lin] = field(default_factory=dict)
    map1: dict[str, dict[int, Lin]] = field(default_factory=dict)
    map2: dict[str, dict[int, Map2Col]] = field(default_factory=dict)
    balances: dict[str, dict[int, Lin]] = field(default_factory=dict)
    supply: dict[str, Lin] = field(default_factory=dict)
    snapshots: dict[str, Lin] = field(default_factory=dict)
    timestamp: Lin = ZERO

    def fork(self) -> "PathCtx":
        return PathCtx(
            decls=list(self.decls),
            lits=list(self.lits),
            cost=self.cost,
            counters=dict(self.counters),
            scalars=dict(self.scalars),
            map1={m: dict(c) for m, c in self.map1.items()},
            map2={m: {a: col.copy() for a, col in c.items()} for m, c in self.map2.items()},
            balances={t: dict(b) for t, b in self.balances.items()},
            supply=dict(self.supply),
            snapshots=dict(self.snapshots),
            timestamp=self.timestamp,
        )

    # state-only snapshot/restore, used for scratch call-term runs
    def save_state(self):
        probe = self.fork()
        return (
            probe.scalars,
            probe.map1,
            probe.map2,
            probe.balances,
            probe.supply,
            probe.snapshots,
            probe.timestamp,
        )

    def restore_state(self, saved) -> None:
        (self.scalars, self.map1, self.map2, self.balances,
         self.supply, self.snapshots, self.timestamp) = (
            dict(saved[0]),
            {m: dict(c) for m, c in saved[1].items()},
            {m: {a: col.copy() for a, col in c.items()} for m, c in saved[2].items()},
            {t: dict(b) for t, b in saved[3].items()},
            dict(saved[4]),
            dict(saved[5]),
            saved[6],
        )

    def declare(self, name: str, lo: int, hi: int) -> str:
        self.decls.append((name, lo, hi))
        return name

    def fresh(self, hint: str, lo: int, hi: int) -> str:
        n = self.counters.get(hint, 0)
        self.counters[hint] = n + 1
        return self.declare(f"{hint}#{n}", lo, hi)

    def bounds(self) -> dict[str, tuple[int, int]]:
        return {name: (lo, hi) for name, lo, hi in self.decls}

    def add_cmp(self, op: str, left: Lin, right: Lin) -> bool | None:
        """Assert left op right; concrete comparisons are folded away.

        Returns the concrete truth value when both sides are constant
        (nothing is recorded), else None after recording the literal.
        """
        diff = left - right
        if diff.is_const:
            return _OP_FN[op](diff.const, 0)
        terms, const = diff.cmp_parts()
        self.lits.append(scaled_cmp(op, terms, const))
        return None

    def build_store(self, budget: int | None = None) -> Store:
        store = Store() if budget is None else Store(node_budget=budget)
        for name, lo, hi in self.decls:
            store.declare(name, lo, hi)
        for lit in self.lits:
            store.assert_(lit)
        return store


# -- transaction variables -----------------------------------------------------


@dataclass(frozen=True)
class TxVars:
    """Declared solver variables standing for one transaction."""

    step: str
    sender: str
    args: tuple[str, ...]
    delta: str

    @property
    def names(self) -> tuple[str, ...]:
        return (self.sender, *self.args, self.delta)


@dataclass
class SymBranch:
    """One completed symbolic execution of a whole step."""

    ctx: PathCtx
    status: str  # ok | reverted | violation | gas
    detail: str | None = None


# -- the executor --------------------------------------------------------------


class SymExec:
    """Enumerates candidate paths through lowered procedures.

    Feasibility itself is decided later by solving each branch's store;
    this class only guarantees the enumeration is exhaustive and that
    every recorded constraint matches the interpreter's behavior. Paths
    that interval reasoning can already rule out are dropped eagerly.
    """

    def __init__(self, ts: TransitionSystem, max_paths: int = 20_000):
        self.ts = ts
        self.cfg = ts.cfg
        self.max_paths = max_paths
        self._live = 0

    # ---- seeding ---------------------------------------------------------

    def deployed_ctx(self) -> PathCtx:
        """Zeroed pre-constructor state; everything concrete."""
        ctx = PathCtx()
        ctx.scalars = {v.name: ZERO for v in self.ts.ir.state_vars}
        for m in self.ts.ir.mappings:
            if m.ty == ast.Ty.MAP1:
                ctx.map1[m.name] = {a: ZERO for a in range(self.cfg.addresses)}
            else:
                ctx.map2[m.name] = {
                    a: Map2Col(base_zero=True) for a in range(self.cfg.addresses)
                }
        for t in self.ts.tokens:
            ctx.balances[t] = {a: ZERO for a in range(self.cfg.addresses)}
            ctx.supply[t] = ZERO
        return ctx

    def havoc_ctx(self) -> PathCtx:
        """Arbitrary post-deployment state: every cell a fresh variable."""
        ctx = PathCtx()
        M, A = self.cfg.modulus, self.cfg.addresses
        for v in self.ts.ir.state_vars:
            lo, hi = self._ty_range(v.ty)
            ctx.scalars[v.name] = Lin.var(ctx.declare(v.name, lo, hi))
        for m in self.ts.ir.mappings:
            if m.ty == ast.Ty.MAP1:
                ctx.map1[m.name] = {
                    a: Lin.var(ctx.declare(f"{m.name}[{a}]", 0, M - 1)) for a in range(A)
                }
            else:
                ctx.map2[m.name] = {a: Map2Col(base_zero=False) for a in range(A)}
        supply_cap = self._supply_cap()
        for t in self.ts.tokens:
            ctx.balances[t] = {
                a: Lin.var(ctx.declare(f"{t}.balanceOf({a})", 0, M - 1)) for a in range(A)
            }
            ctx.supply[t] = Lin.var(ctx.declare(f"{t}.totalSupply", 0, supply_cap))
        for spec in self.ts.snapshots:
            lo, hi = self.check_interval(spec.expr)
            ctx.snapshots[spec.cell] = Lin.var(ctx.declare(spec.cell, lo, hi))
        ctx.timestamp = Lin.var(
            ctx.declare("timestamp", 0, self.cfg.timestamp_bound - 1)
        )
        return ctx

    def _ty_range(self, ty: ast.Ty) -> tuple[int, int]:
        if ty == ast.Ty.BOOL:
            return 0, 1
        if ty == ast.Ty.ADDRESS:
            return 0, self.cfg.addresses - 1
        return 0, self.cfg.modulus - 1

    def _supply_cap(self) -> int:
        # supply only moves in the constructor; each mint call adds at
        # most one word (mintReserve takes a word-sized argument too)
        mints = sum(
            1
            for s in _walk_stmts(self.ts.init.body)
            if isinstance(s, ast.TokenCall) and s.method in ("mint", "mintReserve")
        )
        return max(1, mints) * (self.cfg.modulus - 1)

    def tx_vars(self, ctx: PathCtx, step_name: str, label: str) -> TxVars:
        proc = self.ts.steps[step_name]
        sender = ctx.declare(f"{label}.sender", 1, self.cfg.addresses - 1)
        args = tuple(
            ctx.declare(f"{label}.{p.name}", *self._ty_range(p.ty)) for p in proc.params
        )
        delta = ctx.declare(f"{label}.delta", 0, self.cfg.timestamp_bound - 1)
        return TxVars(step_name, sender, args, delta)

    def init_vars(self, ctx: PathCtx) -> tuple[str, ...]:
        return tuple(
            ctx.declare(f"init.{p.name}", *self._ty_range(p.ty))
            for p in self.ts.init.params
        )

    # ---- whole-procedure driving ------------------------------------------

    def run_init(self, ctx: PathCtx, arg_vars: Sequence[str]) -> list[SymBranch]:
        """Deploy symbolically: constructor, snapshot seeding, global checks."""
        self._live = 0
        ctx = ctx.fork()
        sender = Lin.of(DEPLOYER)
        branches = [ctx]
        for spec in self.ts.snapshots:  # pre-seed on the zeroed state
            branches = self._capture(branches, spec.expr, sender, spec.cell)
        env = {p.name: Lin.var(v) for p, v in zip(self.ts.init.params, arg_vars)}
        out: list[SymBranch] = []
        for bctx in branches:
            for ectx, _, res in self._exec_block(bctx, self.ts.init.body, 0, dict(env), sender, True):
                if isinstance(res, Halt):
                    out.append(SymBranch(ectx, res.status, res.detail))
                    continue
                reseed = [ectx]
                for spec in self.ts.snapshots:
                    reseed = self._capture(reseed, spec.expr, sender, spec.cell)
                for rctx in reseed:
                    out.extend(self._post_checks(rctx, sender))
        return out

    def run_step(self, ctx: PathCtx, tv: TxVars) -> list[SymBranch]:
        """One transaction: time advance, snapshot recapture, body, checks."""
        self._live = 0
        proc = self.ts.steps[tv.step]
        ctx = ctx.fork()
        sender = Lin.var(tv.sender)
        ctx.timestamp = ctx.timestamp + Lin.var(tv.delta)
        if ctx.add_cmp("<=", ctx.timestamp, Lin.of(self.cfg.timestamp_bound - 1)) is False:
            return []
        branches = [ctx]
        for spec in self.ts.snapshots:
            if tv.step in spec.recapture:
                branches = self._capture(branches, spec.expr, sender, spec.cell)
        out: list[SymBranch] = []
        for bctx in branches:
            if proc.kind in ("token-transfer", "token-transferfrom"):
                ends = self._token_move(bctx, proc, tv)
            else:
                env = {p.name: Lin.var(v) for p, v in zip(proc.params, tv.args)}
                ends = [
                    (c, res)
                    for c, _, res in self._exec_block(bctx, proc.body, 0, env, sender, True)
                ]
            for ectx, res in ends:
                if isinstance(res, Halt):
                    out.append(SymBranch(ectx, res.status, res.detail))
                else:
                    out.extend(self._post_checks(ectx, sender))
        return out

    def _post_checks(self, ctx: PathCtx, sender: Lin) -> list[SymBranch]:
        """Global checks in order; the first to fail names the violation."""
        branches = [SymBranch(ctx, "ok")]
        for check in self.ts.global_checks:
            nxt: list[SymBranch] = []
            for br in branches:
                if br.status != "ok":
                    nxt.append(br)
                    continue
                for cctx, truth in self._eval_bool(br.ctx, check.expr, {}, sender, check=True):
                    if truth is True:
                        nxt.append(SymBranch(cctx, "ok"))
                    else:  # false or a failed call term
                        nxt.append(SymBranch(cctx, "violation", check.candidate_key))
            branches = nxt
        return branches

    def _capture(self, branches: list[PathCtx], expr, sender: Lin, cell: str) -> list[PathCtx]:
        """Evaluate a snapshot expression on every branch, store into cell."""
        out = []
        for ctx in branches:
            for c2, val in self._eval_num(ctx, expr, {}, sender, check=True):
                if _abnormal(val):  # snapshot exprs carry no call terms
                    raise UnsupportedConstruct("snapshot expression has no value")
                c2.snapshots[cell] = val
                out.append(c2)
        return out

    # ---- statements --------------------------------------------------------

    def _spawn(self, n: int = 1) -> None:
        self._live += n
        if self._live > self.max_paths:
            raise ResourceBudgetExceeded(
                f"symbolic path count exceeded {self.max_paths}"
            )

    def _exec_block(self, ctx, stmts, i, env, sender, burn):
        if i == len(stmts):
            return [(ctx, env, FELL)]
        results = []
        for sctx, senv, res in self._exec_stmt(ctx, stmts[i], env, sender, burn):
            if res is FELL:
                results.extend(self._exec_block(sctx, stmts, i + 1, senv, sender, burn))
            else:
                results.append((sctx, senv, res))
        return results

    def _exec_stmt(self, ctx, stmt, env, sender, burn):
        if burn and not isinstance(stmt, GAS_FREE):
            ctx.cost += 1
            if self.cfg.gas_cap is not None and ctx.cost > self.cfg.gas_cap:
                return [(ctx, env, Halt("gas", GAS_CANDIDATE_KEY))]
        match stmt:
            case ast.Assign(target, expr):
                out = []
                for c, v in self._eval_num(ctx, expr, env, sender, check=False):
                    if _abnormal(v):
                        out.append((c, env, v))
                    else:
                        e2 = dict(env)
                        for c2 in self._store(c, target, v, e2, sender):
                            out.append((c2, e2, FELL))
                return out
            case ast.LocalDecl(name, _, expr):
                out = []
                for c, v in self._eval_num(ctx, expr, env, sender, check=False):
                    if _abnormal(v):
                        out.append((c, env, v))
                    else:
                        e2 = dict(env)
                        e2[name] = v
                        out.append((c, e2, FELL))
                return out
            case ast.Require(cond, message):
                out = []
                for c, truth in self._eval_bool(ctx, cond, env, sender, check=False):
                    if isinstance(truth, Halt):
                        out.append((c, env, truth))
                    elif truth:
                        out.append((c, env, FELL))
                    else:
                        out.append(
                            (c, env, Halt("reverted", message or f"require at line {stmt.line}"))
                        )
                return out
            case GuardStmt():
                out = []
                for c, truth in self._eval_bool(ctx, stmt.cond, env, sender, check=False):
                    if isinstance(truth, Halt):
                        out.append((c, env, truth))
                    elif truth:
                        out.append((c, env, FELL))
                    else:
                        out.append(
                            (c, env, Halt("reverted", stmt.message or stmt.candidate_key))
                        )
                return out
            case CheckStmt(check):
                out = []
                for c, truth in self._eval_bool(ctx, check.expr, env, sender, check=True):
                    if truth is True:
                        out.append((c, env, FELL))
                    else:  # false or a failed call term: the check fires
                        out.append((c, env, Halt("violation", check.candidate_key)))
                return out
            case ast.If(cond, then, orelse):
                out = []
                arms = self._eval_bool(ctx, cond, env, sender, check=False)
                for c, truth in arms:
                    if isinstance(truth, Halt):
                        out.append((c, env, truth))
                        continue
                    body = then if truth else orelse
                    out.extend(self._exec_block(c, body, 0, dict(env), sender, burn))
                return out
            case ast.Return(expr):
                if expr is None:
                    return [(ctx, env, _Returned(None))]
                out = []
                for c, v in self._eval_num(ctx, expr, env, sender, check=False):
                    out.append((c, env, v if _abnormal(v) else _Returned(v)))
                return out
            case CallFrame():
                out = []
                for c, vals in self._eval_args(ctx, stmt.args, env, sender, check=False):
                    if _abnormal(vals):
                        out.append((c, env, vals))
                        continue
                    sub = dict(zip((p.name for p in stmt.params), vals))
                    for c2, _, res in self._exec_block(c, stmt.body, 0, sub, sender, burn):
                        # a return inside the callee ends the callee only
                        out.append((c2, env, FELL if isinstance(res, _Returned) else res))
                return out
            case ast.TokenCall(token, method, args):
                return [
                    (c, env, res)
                    for c, res in self._token_call(ctx, token, method, args, env, sender)
                ]
            case LoopBoundRevert():
                return [(ctx, env, Halt("reverted", f"loop bound exceeded at line {stmt.line}"))]
        raise UnsupportedConstruct(f"cannot execute {stmt!r} symbolically")

    def _eval_args(self, ctx, exprs, env, sender, check):
        """Left-to-right argument lists; a halt mid-list ends that branch."""
        branches: list[tuple[PathCtx, list | Halt]] = [(ctx, [])]
        for e in exprs:
            nxt = []
            for c, vals in branches:
                if _abnormal(vals):
                    nxt.append((c, vals))
                    continue
                for c2, v in self._eval_num(c, e, env, sender, check):
                    nxt.append((c2, vals if _abnormal(v) else vals + [v]) if not _abnormal(v)
                               else (c2, v))
            branches = nxt
        return branches

    def _store(self, ctx, target, value: Lin, env, sender) -> list[PathCtx]:
        if not target.keys:
            if target.name in env:
                env[target.name] = value
            else:
                ctx.scalars[target.name] = value
            return [ctx]
        out = []
        for c, keys in self._eval_args(ctx, target.keys, env, sender, check=False):
            if _abnormal(keys):
                raise UnsupportedConstruct("mapping key evaluation halted")
            for c2, addr in self._concretize_addr(c, keys[0]):
                if target.name in c2.map1:
                    c2.map1[target.name][addr] = value
                else:
                    c2.map2[target.name][addr].writes.append((keys[1], value))
                out.append(c2)
        return out

    # ---- token stubs ---------------------------------------------------------

    def _token_move(self, ctx, proc: Proc, tv: TxVars):
        token = proc.token
        if proc.kind == "token-transfer":
            payer_lin = Lin.var(tv.sender)
            to_lin, amt = Lin.var(tv.args[0]), Lin.var(tv.args[1])
        else:
            payer_lin = Lin.var(tv.args[0])
            to_lin, amt = Lin.var(tv.args[1]), Lin.var(tv.args[2])
        out = []
        for c, payer in self._concretize_addr(ctx, payer_lin):
            held = c.balances[token][payer]
            for c2, strict in self._fork_cmp(c, ">=", held, amt):
                if strict:
                    c2.balances[token][payer] = held - amt
                    out.extend(self._credit(c2, token, to_lin, amt))
                elif payer == CONTRACT_ADDR:
                    out.append((c2, Halt("reverted", f"{token}: insufficient contract balance")))
                else:
                    free = c2.supply[token]
                    for cell in c2.balances[token].values():
                        free = free - cell
                    for c3, fits in self._fork_cmp(c2, "<=", amt, free):
                        if fits:
                            out.extend(self._credit(c3, token, to_lin, amt))
                        else:
                            out.append(
                                (c3, Halt("reverted", f"{token}: amount exceeds circulating reserve"))
                            )
        return out

    def _credit(self, ctx, token: str, to_lin: Lin, amt: Lin):
        """Mirror of the interpreter's overflow-aware balance credit."""
        out = []
        for c, to in self._concretize_addr(ctx, to_lin):
            total = c.balances[token][to] + amt
            for c2, fits in self._fork_cmp(c, "<=", total, Lin.of(self.cfg.modulus - 1)):
                if fits:
                    c2.balances[token][to] = total
                    out.append((c2, FELL))
                elif self.cfg.arith == "revert":
                    out.append((c2, Halt("reverted", f"{token}: balance overflow")))
                else:
                    # total < 2M always holds, so wrapping is one subtraction
                    c2.balances[token][to] = total.shift(-self.cfg.modulus)
                    out.append((c2, FELL))
        return out

    def _token_call(self, ctx, token: str, method: str, args, env, sender):
        method = TOKEN_ALIASES.get(method, method)
        out = []
        for c, vals in self._eval_args(ctx, args, env, sender, check=False):
            if _abnormal(vals):
                out.append((c, vals))
                continue
            if method == "mint":
                to, amount = vals
                for c2, res in self._credit(c, token, to, amount):
                    if res is FELL:
                        c2.supply[token] = c2.supply[token] + amount
                    out.append((c2, res))
            elif method == "mintReserve":
                c.supply[token] = c.supply[token] + vals[0]
                out.append((c, FELL))
            else:
                if method == "transfer":
                    payer_lin, (to, amount) = Lin.of(CONTRACT_ADDR), vals
                else:
                    payer_lin, to, amount = vals
                for c2, payer in self._concretize_addr(c, payer_lin):
                    held = c2.balances[token][payer]
                    for c3, enough in self._fork_cmp(c2, ">=", held, amount):
                        if not enough:
                            out.append((c3, Halt("reverted", f"{token}: insufficient balance")))
                            continue
                        c3.balances[token][payer] = held - amount
                        out.extend(self._credit(c3, token, to, amount))
        return out

    # ---- forking primitives ----------------------------------------------------

    def _fork_cmp(self, ctx, op: str, a: Lin, b: Lin):
        """Both outcomes of a comparison, minus statically impossible ones."""
        probe = (a - b).interval(ctx.bounds())
        t_possible = _interval_admits(op, probe)
        f_possible = _interval_admits(_NEG_OP[op], probe)
        if t_possible and not f_possible:
            return [(ctx, True)]
        if f_possible and not t_possible:
            return [(ctx, False)]
        self._spawn()
        yes, no = ctx, ctx.fork()
        yes.add_cmp(op, a, b)
        no.add_cmp(_NEG_OP[op], a, b)
        return [(yes, True), (no, False)]

    def _concretize_addr(self, ctx, lin: Lin):
        """Pin an address-typed value to each universe member it can be."""
        if lin.is_const:
            return [(ctx, lin.const_int())]
        lo, hi = lin.interval(ctx.bounds())
        cands = [a for a in range(self.cfg.addresses) if lo <= a <= hi]
        self._spawn(len(cands))
        out = []
        for a in cands:
            c = ctx.fork()
            if c.add_cmp("==", lin, Lin.of(a)) is not False:
                out.append((c, a))
        return out

    def _materialize(self, ctx, lin: Lin, hint: str) -> str | int:
        """A var-or-int operand for AuxDef, equal to the given value."""
        if lin.is_const:
            return lin.const_int()
        single = lin.single_var()
        if single is not None:
            return single
        lo, hi = lin.interval(ctx.bounds())
        t = ctx.fresh(hint, floor(lo), ceil(hi))
        ctx.add_cmp("==", Lin.var(t), lin)
        return t

    # ---- numeric evaluation ------------------------------------------------------

    def _eval_num(self, ctx, e, env, sender: Lin, check: bool):
        """Branches of (ctx, Lin | Halt | CALL_FAILED); check picks the regime."""
        match e:
            case ast.Num(v):
                return [(ctx, Lin.of(v))]
            case FracConst(v):
                return [(ctx, Lin((), v))]
            case ast.BoolLit(v):
                return [(ctx, Lin.of(int(v)))]
            case ast.MsgSender():
                return [(ctx, sender)]
            case ast.AddressThis():
                return [(ctx, Lin.of(CONTRACT_ADDR))]
            case ast.BlockTimestamp():
                return [(ctx, ctx.timestamp)]
            case ast.Name(ident):
                if ident in env:
                    return [(ctx, env[ident])]
                return [(ctx, ctx.scalars[ident])]
            case SnapshotRef(cell):
                return [(ctx, ctx.snapshots[cell])]
            case ast.Index1(m, k):
                out = []
                for c, v in self._eval_num(ctx, k, env, sender, check):
                    if _abnormal(v):
                        out.append((c, v))
                        continue
                    for c2, addr in self._concretize_addr(c, v):
                        out.append((c2, c2.map1[m][addr]))
                return out
            case ast.Index2(m, k1, k2):
                out = []
                for c, keys in self._eval_args(ctx, [k1, k2], env, sender, check):
                    if _abnormal(keys):
                        out.append((c, keys))
                        continue
                    for c2, addr in self._concretize_addr(c, keys[0]):
                        out.extend(self._map2_lookup(c2, m, addr, keys[1]))
                return out
            case ast.BalanceOf(t, a):
                out = []
                for c, v in self._eval_num(ctx, a, env, sender, check):
                    if _abnormal(v):
                        out.append((c, v))
                        continue
                    for c2, addr in self._concretize_addr(c, v):
                        out.append((c2, c2.balances[t][addr]))
                return out
            case ast.TotalSupplyOf(t):
                return [(ctx, ctx.supply[t])]
            case ast.SumMapping(m):
                if m in ctx.map1:
                    total = ZERO
                    for cell in ctx.map1[m].values():
                        total = total + cell
                    return [(ctx, total)]
                raise UnsupportedConstruct(
                    f"cannot sum two-level mapping {m!r} symbolically"
                )
            case ast.CallExpr(fname, args) if check:
                return self._call_term(ctx, fname, args, env, sender)
            case ast.NotOp() | ast.BinOp(op="&&") | ast.BinOp(op="||"):
                return self._bool_as_num(ctx, e, env, sender, check)
            case ast.BinOp(op, _, _) if op in _OP_FN:
                return self._bool_as_num(ctx, e, env, sender, check)
            case ast.BinOp(op, l, r):
                out = []
                for c, pair in self._eval_args(ctx, [l, r], env, sender, check):
                    if _abnormal(pair):
                        out.append((c, pair))
                    elif check:
                        out.extend(self._check_arith(c, op, pair[0], pair[1]))
                    else:
                        out.extend(self._code_arith(c, op, pair[0], pair[1]))
                return out
            case ast.OldExpr():
                raise UnsupportedConstruct(
                    "Old(...) must be resolved to a snapshot cell before execution"
                )
        raise UnsupportedConstruct(f"cannot evaluate {e!r} symbolically")

    def _bool_as_num(self, ctx, e, env, sender, check):
        out = []
        for c, truth in self._eval_bool(ctx, e, env, sender, check):
            if _abnormal(truth):
                out.append((c, truth))
            else:
                out.append((c, ONE if truth else ZERO))
        return out

    def _map2_lookup(self, ctx, m, addr: int, key: Lin):
        out = []

        def walk(c, write_idx):
            # newest write first, then the base registry
            writes = c.map2[m][addr].writes
            if write_idx >= 0:
                wkey, wval = writes[write_idx]
                for c2, eq in self._fork_cmp(c, "==", key, wkey):
                    if eq:
                        out.append((c2, wval))
                    else:
                        walk(c2, write_idx - 1)
                return
            if c.map2[m][addr].base_zero:
                out.append((c, ZERO))
                return
            base(c, 0)

        def base(c, read_idx):
            reads = c.map2[m][addr].reads
            if read_idx < len(reads):
                rkey, rvar = reads[read_idx]
                for c2, eq in self._fork_cmp(c, "==", key, rkey):
                    if eq:
                        out.append((c2, Lin.var(rvar)))
                    else:
                        base(c2, read_idx + 1)
                return
            fresh = c.fresh(f"{m}[{addr}][?]", 0, self.cfg.modulus - 1)
            c.map2[m][addr].reads.append((key, fresh))
            out.append((c, Lin.var(fresh)))

        walk(ctx, len(ctx.map2[m][addr].writes) - 1)
        return out

    # ---- arithmetic ----------------------------------------------------------------

    def _check_arith(self, ctx, op, a: Lin, b: Lin):
        """Exact rational arithmetic; floored, totalized division."""
        if op == "+":
            return [(ctx, a + b)]
        if op == "-":
            return [(ctx, a - b)]
        if op == "*":
            if a.is_const:
                return [(ctx, b.scale(a.const))]
            if b.is_const:
                return [(ctx, a.scale(b.const))]
            d = lcm(a.denominator(), b.denominator())
            sa, sb = a.scale(d), b.scale(d)
            ta = self._materialize(ctx, sa, "mul")
            tb = self._materialize(ctx, sb, "mul")
            lo_a, hi_a = sa.interval(ctx.bounds())
            lo_b, hi_b = sb.interval(ctx.bounds())
            cands = [x * y for x in (lo_a, hi_a) for y in (lo_b, hi_b)]
            p = ctx.fresh("prod", floor(min(cands)), ceil(max(cands)))
            ctx.lits.append(AuxDef(p, "mul", (ta, tb)))
            return [(ctx, Lin.var(p).scale(Fraction(1, d * d)))]
        if op == "/":
            if a.is_const and b.is_const:
                if b.const == 0:
                    return [(ctx, ZERO)]
                q = a.const / b.const
                return [(ctx, Lin.of(q.numerator // q.denominator))]
            d = lcm(a.denominator(), b.denominator())
            sa = a.scale(d)
            ta = self._materialize(ctx, sa, "divnum")
            tb = self._materialize(ctx, b.scale(d), "divden")
            lo, hi = sa.interval(ctx.bounds())
            m = max(abs(floor(lo)), abs(ceil(hi)), 1)
            q = ctx.fresh("quot", -m, m)
            ctx.lits.append(AuxDef(q, "div", (ta, tb)))
            return [(ctx, Lin.var(q))]
        raise UnsupportedConstruct(f"operator {op!r}")

    def _code_arith(self, ctx, op, a: Lin, b: Lin):
        """W-bit machine arithmetic with the configured overflow policy."""
        M = self.cfg.modulus
        if op == "+":
            return self._wordize(ctx, a + b)
        if op == "-":
            return self._wordize(ctx, a - b)
        if op == "*":
            if a.is_const or b.is_const:
                raw = a.scale(b.const) if b.is_const else b.scale(a.const)
                return self._wordize(ctx, raw)
            ta = self._materialize(ctx, a, "mul")
            tb = self._materialize(ctx, b, "mul")
            p = ctx.fresh("prod", 0, (M - 1) * (M - 1))
            ctx.lits.append(AuxDef(p, "mul", (ta, tb)))
            return self._wordize(ctx, Lin.var(p))
        if op == "/":
            out = []
            for c, zero in self._fork_cmp(ctx, "==", b, ZERO):
                if zero:
                    out.append((c, Halt("reverted", "division by zero")))
                elif a.is_const and b.is_const:
                    out.append((c, Lin.of(a.const_int() // b.const_int())))
                else:
                    ta = self._materialize(c, a, "divnum")
                    tb = self._materialize(c, b, "divden")
                    q = c.fresh("quot", 0, M - 1)
                    c.lits.append(AuxDef(q, "div", (ta, tb)))
                    out.append((c, Lin.var(q)))
            return out
        raise UnsupportedConstruct(f"operator {op!r}")

    def _wordize(self, ctx, value: Lin):
        """Fold a raw arithmetic result back into the word domain."""
        M = self.cfg.modulus
        lo, hi = value.interval(ctx.bounds())
        if 0 <= lo and hi < M:
            return [(ctx, value)]
        if self.cfg.arith == "revert":
            out = []
            for c, in_lo in self._fork_cmp(ctx, ">=", value, ZERO):
                if not in_lo:
                    out.append((c, Halt("reverted", "arithmetic out of range")))
                    continue
                for c2, in_hi in self._fork_cmp(c, "<=", value, Lin.of(M - 1)):
                    if in_hi:
                        out.append((c2, value))
                    else:
                        out.append((c2, Halt("reverted", "arithmetic out of range")))
            return out
        # wrap: value - M*floor(value/M), computed through the div aux
        t = self._materialize(ctx, value, "word")
        if isinstance(t, int):
            return [(ctx, Lin.of(t % M))]
        q = ctx.fresh("carry", floor(Fraction(floor(lo), M)), ceil(Fraction(ceil(hi), M)))
        ctx.lits.append(AuxDef(q, "div", (t, M)))
        return [(ctx, Lin.var(t) - Lin.var(q).scale(M))]

    # ---- booleans -------------------------------------------------------------------

    def _eval_bool(self, ctx, e, env, sender: Lin, check: bool):
        """Branches of (ctx, truth); truth may be CALL_FAILED under check."""
        match e:
            case ast.BoolLit(v):
                return [(ctx, bool(v))]
            case ast.NotOp(x):
                out = []
                for c, t in self._eval_bool(ctx, x, env, sender, check):
                    out.append((c, t if _abnormal(t) else not t))
                return out
            case ast.BinOp("&&", l, r):
                out = []
                for c, t in self._eval_bool(ctx, l, env, sender, check):
                    if _abnormal(t) or t is False:
                        out.append((c, t))
                    else:
                        out.extend(self._eval_bool(c, r, env, sender, check))
                return out
            case ast.BinOp("||", l, r):
                out = []
                for c, t in self._eval_bool(ctx, l, env, sender, check):
                    if _abnormal(t) or t is True:
                        out.append((c, t))
                    else:
                        out.extend(self._eval_bool(c, r, env, sender, check))
                return out
            case ast.BinOp(op, l, r) if op in _OP_FN:
                out = []
                for c, pair in self._eval_args(ctx, [l, r], env, sender, check):
                    if _abnormal(pair):
                        out.append((c, pair))
                    else:
                        out.extend(self._fork_cmp(c, op, pair[0], pair[1]))
                return out
            case _:
                # numeric value in boolean position: nonzero is true
                out = []
                for c, v in self._eval_num(ctx, e, env, sender, check):
                    if _abnormal(v):
                        out.append((c, v))
                    else:
                        out.extend(self._fork_cmp(c, "!=", v, ZERO))
                return out

    # ---- call terms --------------------------------------------------------------------

    def _call_term(self, ctx, fname, args, env, sender: Lin):
        """Scratch run of a function; a revert poisons the enclosing check."""
        proc = self.ts.call_proc(fname)
        out = []
        for c, vals in self._eval_args(ctx, args, env, sender, check=True):
            if _abnormal(vals):
                out.append((c, vals))
                continue
            saved = c.save_state()
            sub = dict(zip((p.name for p in proc.params), vals))
            for c2, _, res in self._exec_block(c, proc.body, 0, sub, sender, False):
                c2.restore_state(saved)
                if isinstance(res, _Returned) and res.value is not None:
                    out.append((c2, res.value))
                elif isinstance(res, Halt) and res.status in ("violation", "gas"):
                    out.append((c2, res))
                else:
                    # fell off the end or reverted: no value
                    out.append((c2, CALL_FAILED))
        return out

    # ---- intervals for havoc bounds --------------------------------------------------------

    def check_interval(self, e) -> tuple[int, int]:
        """Conservative integer range of a check expression over any state."""
        lo, hi = self._ival(e)
        return floor(lo), ceil(hi)

    def _ival(self, e) -> tuple[Fraction, Fraction]:
        M = Fraction(self.cfg.modulus - 1)
        match e:
            case ast.Num(v):
                return Fraction(v), Fraction(v)
            case FracConst(v):
                return v, v
            case ast.BoolLit(_) | ast.NotOp():
                return Fraction(0), Fraction(1)
            case ast.MsgSender() | ast.AddressThis():
                return Fraction(0), Fraction(self.cfg.addresses - 1)
            case ast.BlockTimestamp():
                return Fraction(0), Fraction(self.cfg.timestamp_bound - 1)
            case ast.Name() | ast.Index1() | ast.Index2() | ast.BalanceOf() | ast.CallExpr():
                return Fraction(0), M
            case ast.TotalSupplyOf(_):
                return Fraction(0), Fraction(self._supply_cap())
            case ast.SumMapping(_):
                return Fraction(0), M * self.cfg.addresses
            case SnapshotRef(cell):
                for spec in self.ts.snapshots:
                    if spec.cell == cell:
                        lo, hi = self.check_interval(spec.expr)
                        return Fraction(lo), Fraction(hi)
                return Fraction(0), M
            case ast.BinOp(op, _, _) if op in _OP_FN or op in ("&&", "||"):
                return Fraction(0), Fraction(1)
            case ast.BinOp(op, l, r):
                alo, ahi = self._ival(l)
                blo, bhi = self._ival(r)
                if op == "+":
                    return alo + blo, ahi + bhi
                if op == "-":
                    return alo - bhi, ahi - blo
                if op == "*":
                    cands = [x * y for x in (alo, ahi) for y in (blo, bhi)]
                    return min(cands), max(cands)
                if op == "/":
                    m = max(abs(alo), abs(ahi))
                    return -m, m
        raise UnsupportedConstruct(f"no interval for {e!r}")


def _interval_admits(op: str, probe: tuple[Fraction, Fraction]) -> bool:
    """Can `value op 0` hold for some value in the interval?"""
    lo, hi = probe
    if op == "==":
        return lo <= 0 <= hi
    if op == "!=":
        return lo != 0 or hi != 0
    if op == "<":
        return lo < 0
    if op == "<=":
        return lo <= 0
    if op == ">":
        return hi > 0
    if op == ">=":
        return hi >= 0
    raise ValueError(op)


def _walk_stmts(body):
    for s in body:
        yield s
        if isinstance(s, ast.If):
            yield from _walk_stmts(s.then)
            yield from _walk_stmts(s.orelse)
        elif isinstance(s, CallFrame):
            yield from _walk_stmts(s.body)


def proc_check_keys(proc: Proc) -> set[str]:
    """Candidate keys of all anchored checks reachable inside a procedure."""
    return {
        s.check.candidate_key for s in _walk_stmts(proc.body) if isinstance(s, CheckStmt)
    }
