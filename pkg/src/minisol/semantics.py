"""Executable semantics: lowering and the concrete interpreter.

lower() turns a (possibly instrumented) contract into a TransitionSystem:
one init procedure for the constructor plus one step procedure per public
function and per token-stub move. Loops are expanded to their unroll bound
(running past the bound reverts), and internal calls become explicit call
frames, so a procedure body is a straight-line/branching stream with no
loops and no calls. Both verification routes consume this same lowered
form, which keeps observable details like gas accounting identical.

run() executes a transaction sequence concretely. It is deliberately the
dumbest component in the system: direct interpretation, exact integers,
no sharing with the constraint encoding. Counterexamples from the search
side are replayed through here before being believed.

Two arithmetic regimes coexist:

  * contract code runs on W-bit machine words (revert or wrap on
    overflow, division by zero reverts);
  * check expressions evaluate exactly over the integers/rationals, with
    division totalized to 0 on zero divisors to match the constraint
    encoding.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import UnsupportedConstruct
from .invariants import (
    Check,
    CheckStmt,
    FracConst,
    GuardStmt,
    SnapshotRef,
    SnapshotSpec,
)
from .lang import ast
from .lang.typecheck import TOKEN_ALIASES


@dataclass(frozen=True)
class DomainConfig:
    """Finite universe every run and every query ranges over.

    Addresses are 0..addresses-1 with 0 the contract itself, 1 the
    deployer, and the rest outside actors. Timestamps live in a domain
    one bit wider than machine words so "later than any stored time" is
    representable.
    """

    width: int = 8
    addresses: int = 3
    arith: str = "revert"  # or "wrap"
    gas_cap: int | None = None

    def __post_init__(self):
        if self.arith not in ("revert", "wrap"):
            raise ValueError(f"arith must be revert or wrap, not {self.arith!r}")
        if self.width < 1 or self.addresses < 2:
            raise ValueError("need at least 1 bit and 2 addresses")

    @property
    def modulus(self) -> int:
        return 1 << self.width

    @property
    def timestamp_bound(self) -> int:
        return 1 << (self.width + 1)

    @property
    def senders(self) -> range:
        """Transaction senders; the contract never sends to itself."""
        return range(1, self.addresses)

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "addresses": self.addresses,
            "arith": self.arith,
            "gas_cap": self.gas_cap,
        }


CONTRACT_ADDR = 0
DEPLOYER = 1


@dataclass(frozen=True)
class Transaction:
    function: str  # public function name, or "<token>.transfer(…From)"
    sender: int
    args: tuple[int, ...] = ()
    timestamp_delta: int = 0

    def to_json(self) -> dict:
        return {
            "function": self.function,
            "sender": self.sender,
            "args": list(self.args),
            "timestamp_delta": self.timestamp_delta,
        }

    @classmethod
    def from_json(cls, d: dict) -> "Transaction":
        return cls(d["function"], d["sender"], tuple(d["args"]), d["timestamp_delta"])


# -- lowered statements ------------------------------------------------------


@dataclass
class LoopBoundRevert(ast.Stmt):
    """Reached when a loop is still live past its unroll bound."""

    def __init__(self, line: int = 0):
        self.line = line


@dataclass
class CallFrame(ast.Stmt):
    """An inlined internal call: fresh local scope, shared state."""

    func: str = ""
    args: list[ast.Expr] = None  # type: ignore[assignment]
    params: list[ast.Param] = None  # type: ignore[assignment]
    body: list[ast.Stmt] = None  # type: ignore[assignment]

    def __init__(self, func, args, params, body, line: int = 0):
        self.func = func
        self.args = args
        self.params = params
        self.body = body
        self.line = line


@dataclass
class Proc:
    """One lowered procedure: loop-free, call-free statement stream."""

    name: str
    kind: str  # init | function | token-transfer | token-transferfrom | call
    params: list[ast.Param] = field(default_factory=list)
    body: list[ast.Stmt] = field(default_factory=list)
    token: str | None = None
    return_ty: ast.Ty | None = None


@dataclass
class TransitionSystem:
    contract: str
    cfg: DomainConfig
    init: Proc
    steps: dict[str, Proc]  # insertion order is dispatch order
    global_checks: list[Check]
    snapshots: list[SnapshotSpec]
    ir: ast.ContractIr

    @property
    def tokens(self) -> list[str]:
        return list(self.ir.token_stubs)

    def call_proc(self, fname: str) -> Proc:
        """Lowered body for a call term; built on demand and cached."""
        cache = self.__dict__.setdefault("_call_procs", {})
        if fname not in cache:
            fn = self.ir.function(fname)
            if fn is None:
                raise UnsupportedConstruct(f"call term names unknown function {fname!r}")
            cache[fname] = Proc(
                name=fname,
                kind="call",
                params=list(fn.params),
                body=_lower_body(fn.body, self.ir),
                return_ty=fn.return_ty,
            )
        return cache[fname]


# -- lowering ----------------------------------------------------------------


def _lower_body(body: list[ast.Stmt], ir: ast.ContractIr) -> list[ast.Stmt]:
    out: list[ast.Stmt] = []
    for stmt in body:
        out.append(_lower_stmt(stmt, ir))
    return out


def _lower_stmt(stmt: ast.Stmt, ir: ast.ContractIr) -> ast.Stmt:
    if isinstance(stmt, ast.If):
        return ast.If(
            stmt.cond,
            _lower_body(stmt.then, ir),
            _lower_body(stmt.orelse, ir),
            line=stmt.line,
        )
    if isinstance(stmt, ast.While):
        node: ast.Stmt = ast.If(stmt.cond, [LoopBoundRevert(line=stmt.line)], [], line=stmt.line)
        for _ in range(stmt.unroll):
            node = ast.If(stmt.cond, _lower_body(stmt.body, ir) + [node], [], line=stmt.line)
        return node
    if isinstance(stmt, ast.InternalCall):
        callee = ir.function(stmt.func)
        if callee is None:
            raise UnsupportedConstruct(f"internal call to unknown function {stmt.func!r}")
        return CallFrame(
            func=stmt.func,
            args=list(stmt.args),
            params=list(callee.params),
            body=_lower_body(callee.body, ir),
            line=stmt.line,
        )
    return stmt


def _guard_prologue(fn: ast.FunctionIr, ir: ast.ContractIr) -> list[ast.Stmt]:
    out: list[ast.Stmt] = []
    for name in fn.modifiers:
        decl = ir.modifier(name)
        assert decl is not None  # typecheck/instrumentation guarantee this
        out.append(GuardStmt(decl.cond, None, f"modifier:{name}", line=fn.line))
    return out


def lower(ir: ast.ContractIr, cfg: DomainConfig | None = None) -> TransitionSystem:
    """Build the transition system for a type-checked, instrumented contract."""
    cfg = cfg or DomainConfig()
    if ir.constructor is not None:
        init = Proc(
            name="constructor",
            kind="init",
            params=list(ir.constructor.params),
            body=_lower_body(ir.constructor.body, ir),
        )
    else:
        init = Proc(name="constructor", kind="init")
    steps: dict[str, Proc] = {}
    for fn in ir.public_functions:
        steps[fn.name] = Proc(
            name=fn.name,
            kind="function",
            params=list(fn.params),
            body=_guard_prologue(fn, ir) + _lower_body(fn.body, ir),
            return_ty=fn.return_ty,
        )
    for token in ir.token_stubs:
        steps[f"{token}.transfer"] = Proc(
            name=f"{token}.transfer",
            kind="token-transfer",
            params=[ast.Param("to", ast.Ty.ADDRESS), ast.Param("amount", ast.Ty.UINT)],
            token=token,
        )
        steps[f"{token}.transferFrom"] = Proc(
            name=f"{token}.transferFrom",
            kind="token-transferfrom",
            params=[
                ast.Param("from_", ast.Ty.ADDRESS),
                ast.Param("to", ast.Ty.ADDRESS),
                ast.Param("amount", ast.Ty.UINT),
            ],
            token=token,
        )
    return TransitionSystem(
        contract=ir.name,
        cfg=cfg,
        init=init,
        steps=steps,
        global_checks=list(ir.global_checks),
        snapshots=list(ir.snapshots),
        ir=ir,
    )


# -- state -------------------------------------------------------------------


@dataclass
class ContractState:
    scalars: dict[str, int] = field(default_factory=dict)
    mappings: dict[str, dict[tuple[int, ...], int]] = field(default_factory=dict)
    balances: dict[str, dict[int, int]] = field(default_factory=dict)
    supply: dict[str, int] = field(default_factory=dict)
    snapshots: dict[str, int] = field(default_factory=dict)
    timestamp: int = 0

    @classmethod
    def zeroed(cls, ts: TransitionSystem) -> "ContractState":
        return cls(
            scalars={v.name: 0 for v in ts.ir.state_vars},
            mappings={m.name: {} for m in ts.ir.mappings},
            balances={t: {} for t in ts.tokens},
            supply={t: 0 for t in ts.tokens},
            snapshots={},
            timestamp=0,
        )

    def copy(self) -> "ContractState":
        return ContractState(
            scalars=dict(self.scalars),
            mappings={k: dict(v) for k, v in self.mappings.items()},
            balances={k: dict(v) for k, v in self.balances.items()},
            supply=dict(self.supply),
            snapshots=dict(self.snapshots),
            timestamp=self.timestamp,
        )

    def canonical(self) -> dict:
        """Zero-valued cells are dropped: written-to-zero == never-written."""
        return {
            "scalars": dict(sorted(self.scalars.items())),
            "mappings": {
                name: sorted([list(k), v] for k, v in cells.items() if v != 0)
                for name, cells in sorted(self.mappings.items())
            },
            "balances": {
                t: sorted([a, v] for a, v in b.items() if v != 0)
                for t, b in sorted(self.balances.items())
            },
            "supply": dict(sorted(self.supply.items())),
            "snapshots": dict(sorted(self.snapshots.items())),
            "timestamp": self.timestamp,
        }

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), separators=(",", ":"), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- traces ------------------------------------------------------------------


@dataclass
class TxRecord:
    tx: Transaction
    status: str  # ok | reverted | violation | gas
    detail: str | None  # revert reason or violated candidate key
    pre_digest: str
    post_digest: str
    gas_used: int

    def to_json(self) -> dict:
        return {
            **self.tx.to_json(),
            "status": self.status,
            "detail": self.detail,
            "pre_digest": self.pre_digest,
            "post_digest": self.post_digest,
            "gas_used": self.gas_used,
        }


@dataclass
class Trace:
    contract: str
    cfg: DomainConfig
    init_args: tuple[int, ...]
    records: list[TxRecord]
    final: ContractState
    # (candidate key, record index) of the first violated check, if any
    violation: tuple[str, int] | None = None

    @property
    def transactions(self) -> list[Transaction]:
        return [r.tx for r in self.records[1:]]  # records[0] is deployment

    def to_json(self) -> dict:
        return {
            "contract": self.contract,
            "config": self.cfg.to_json(),
            "init_args": list(self.init_args),
            "records": [r.to_json() for r in self.records],
            "violation": (
                {"candidate": self.violation[0], "record_index": self.violation[1]}
                if self.violation
                else None
            ),
            "final_digest": self.final.digest(),
        }

    def render(self) -> str:
        lines = [f"trace for {self.contract}"]
        for i, r in enumerate(self.records):
            args = ", ".join(str(a) for a in r.tx.args)
            delta = f" (+{r.tx.timestamp_delta}t)" if r.tx.timestamp_delta else ""
            status = r.status if r.detail is None else f"{r.status}: {r.detail}"
            lines.append(
                f"  [{i}] sender={r.tx.sender} {r.tx.function}({args}){delta} -> {status}"
            )
        return "\n".join(lines)


# -- interpreter -------------------------------------------------------------


class _Revert(Exception):
    def __init__(self, reason: str = ""):
        self.reason = reason


class _GasExhausted(Exception):
    pass


class _ViolationHit(Exception):
    def __init__(self, check: Check):
        self.check = check


class _ReturnSignal(Exception):
    def __init__(self, value: int | None):
        self.value = value


class _CallTermFailed(Exception):
    """A call term reverted or produced no value; its check cannot hold."""


GAS_CANDIDATE_KEY = "gas budget"
GAS_FREE = (CheckStmt, GuardStmt, CallFrame)


class Interp:
    """Concrete execution over one transition system."""

    def __init__(self, ts: TransitionSystem):
        self.ts = ts
        self.cfg = ts.cfg

    # one transaction, functional in the state ---------------------------

    def deploy(self, init_args: Sequence[int]) -> tuple[ContractState, TxRecord]:
        state = ContractState.zeroed(self.ts)
        for spec in self.ts.snapshots:  # give constructor-anchored checks a value
            state.snapshots[spec.cell] = self._eval_check_int(spec.expr, state, DEPLOYER)
        tx = Transaction("constructor", DEPLOYER, tuple(init_args), 0)
        record = self._execute(state, tx, self.ts.init)
        if record.status == "ok":
            for spec in self.ts.snapshots:  # seed every snapshot cell post-init
                state.snapshots[spec.cell] = self._eval_check_int(
                    spec.expr, state, DEPLOYER
                )
            record.post_digest = state.digest()
            hit = self._global_violation(state, DEPLOYER)
            if hit is not None:
                record.status = "violation"
                record.detail = hit.candidate_key
        return state, record

    def apply(self, state: ContractState, tx: Transaction) -> tuple[ContractState, TxRecord]:
        """Run one transaction; always returns a fresh state object."""
        proc = self.ts.steps.get(tx.function)
        if proc is None:
            raise ValueError(f"unknown transaction target {tx.function!r}")
        if tx.sender not in self.cfg.senders:
            raise ValueError(f"sender {tx.sender} outside the universe")
        work = state.copy()
        work.timestamp += tx.timestamp_delta
        for spec in self.ts.snapshots:
            if tx.function in spec.recapture:
                work.snapshots[spec.cell] = self._eval_check_int(
                    spec.expr, work, tx.sender
                )
        record = self._execute(work, tx, proc)
        if record.status == "reverted":
            rolled = state.copy()
            rolled.timestamp = state.timestamp + tx.timestamp_delta
            record.post_digest = rolled.digest()
            return rolled, record
        if record.status == "ok":
            hit = self._global_violation(work, tx.sender)
            if hit is not None:
                record.status = "violation"
                record.detail = hit.candidate_key
        return work, record

    def _execute(self, state: ContractState, tx: Transaction, proc: Proc) -> TxRecord:
        pre = state.digest()
        self._gas = 0
        try:
            if proc.kind in ("token-transfer", "token-transferfrom"):
                self._token_move(state, tx, proc)
            else:
                if len(tx.args) != len(proc.params):
                    raise ValueError(
                        f"{proc.name} takes {len(proc.params)} argument(s), got {len(tx.args)}"
                    )
                env = dict(zip((p.name for p in proc.params), tx.args))
                ctx = _Ctx(state, tx.sender, env)
                try:
                    self._run_block(proc.body, ctx)
                except _ReturnSignal:
                    pass
            status, detail = "ok", None
        except _Revert as r:
            status, detail = "reverted", r.reason or None
        except _ViolationHit as v:
            status, detail = "violation", v.check.candidate_key
        except _GasExhausted:
            status, detail = "gas", GAS_CANDIDATE_KEY
        return TxRecord(
            tx=tx,
            status=status,
            detail=detail,
            pre_digest=pre,
            post_digest=state.digest(),
            gas_used=self._gas,
        )

    def _global_violation(self, state: ContractState, sender: int) -> Check | None:
        for check in self.ts.global_checks:
            if not self._eval_check_bool(check.expr, state, sender):
                return check
        return None

    # token stub moves ----------------------------------------------------

    def _token_move(self, state: ContractState, tx: Transaction, proc: Proc) -> None:
        token = proc.token
        assert token is not None
        if proc.kind == "token-transfer":
            (to, amount) = tx.args
            payer = tx.sender
        else:
            (payer, to, amount) = tx.args
        if not (0 <= to < self.cfg.addresses) or not (0 <= payer < self.cfg.addresses):
            raise ValueError("token move outside the address universe")
        bal = state.balances[token]
        held = bal.get(payer, 0)
        if held >= amount:
            bal[payer] = held - amount
            self._credit(state, token, to, amount)
            return
        if payer == CONTRACT_ADDR:
            # nobody moves the contract's own tokens without its balance
            raise _Revert(f"{token}: insufficient contract balance")
        free = state.supply[token] - sum(bal.values())
        if amount <= free:
            # tokens arriving from holders outside the modeled universe
            self._credit(state, token, to, amount)
            return
        raise _Revert(f"{token}: amount exceeds circulating reserve")

    def _credit(self, state: ContractState, token: str, to: int, amount: int) -> None:
        bal = state.balances[token]
        total = bal.get(to, 0) + amount
        if total >= self.cfg.modulus:
            if self.cfg.arith == "revert":
                raise _Revert(f"{token}: balance overflow")
            total %= self.cfg.modulus
        bal[to] = total

    # statement execution --------------------------------------------------

    def _burn(self, stmt: ast.Stmt) -> None:
        if isinstance(stmt, GAS_FREE):
            return
        self._gas += 1
        if self.cfg.gas_cap is not None and self._gas > self.cfg.gas_cap:
            raise _GasExhausted()

    def _run_block(self, body: list[ast.Stmt], ctx: "_Ctx") -> None:
        for stmt in body:
            self._run_stmt(stmt, ctx)

    def _run_stmt(self, stmt: ast.Stmt, ctx: "_Ctx") -> None:
        self._burn(stmt)
        match stmt:
            case ast.Assign(target, expr):
                value = self._eval_code(expr, ctx)
                self._store(target, value, ctx)
            case ast.LocalDecl(name, _, expr):
                ctx.env[name] = self._eval_code(expr, ctx)
            case ast.Require(cond, message):
                if not self._truthy(self._eval_code(cond, ctx)):
                    raise _Revert(message or f"require at line {stmt.line}")
            case GuardStmt():
                if not self._truthy(self._eval_code(stmt.cond, ctx)):
                    raise _Revert(stmt.message or stmt.candidate_key)
            case CheckStmt(check):
                if not self._eval_check_bool(check.expr, ctx.state, ctx.sender, ctx.env):
                    raise _ViolationHit(check)
            case ast.If(cond, then, orelse):
                if self._truthy(self._eval_code(cond, ctx)):
                    self._run_block(then, ctx)
                else:
                    self._run_block(orelse, ctx)
            case ast.Return(expr):
                raise _ReturnSignal(
                    None if expr is None else self._eval_code(expr, ctx)
                )
            case CallFrame():
                args = [self._eval_code(a, ctx) for a in stmt.args]
                sub = _Ctx(
                    ctx.state,
                    ctx.sender,
                    dict(zip((p.name for p in stmt.params), args)),
                )
                try:
                    self._run_block(stmt.body, sub)
                except _ReturnSignal:
                    pass
            case ast.TokenCall(token, method, args):
                self._token_call(token, method, args, ctx)
            case LoopBoundRevert():
                raise _Revert(f"loop bound exceeded at line {stmt.line}")
            case _:
                raise UnsupportedConstruct(f"cannot execute {stmt!r}")

    def _token_call(self, token: str, method: str, args: list[ast.Expr], ctx: "_Ctx") -> None:
        method = TOKEN_ALIASES.get(method, method)
        vals = [self._eval_code(a, ctx) for a in args]
        state = ctx.state
        if method == "mint":
            to, amount = vals
            self._credit(state, token, to, amount)
            state.supply[token] += amount
            return
        if method == "mintReserve":
            state.supply[token] += vals[0]
            return
        if method == "transfer":
            payer, (to, amount) = CONTRACT_ADDR, vals
        else:  # transferFrom
            payer, to, amount = vals
        bal = state.balances[token]
        if not (0 <= to < self.cfg.addresses) or not (0 <= payer < self.cfg.addresses):
            raise _Revert(f"{token}: address outside the universe")
        held = bal.get(payer, 0)
        if held < amount:
            raise _Revert(f"{token}: insufficient balance")
        bal[payer] = held - amount
        self._credit(state, token, to, amount)

    def _store(self, target: ast.LValue, value: int, ctx: "_Ctx") -> None:
        if target.keys:
            keys = tuple(self._eval_code(k, ctx) for k in target.keys)
            ctx.state.mappings[target.name][keys] = value
            return
        if target.name in ctx.env:
            ctx.env[target.name] = value
        else:
            ctx.state.scalars[target.name] = value

    # machine-word expression evaluation ------------------------------------

    @staticmethod
    def _truthy(v: int) -> bool:
        return bool(v)

    def _wordize(self, value: int) -> int:
        if 0 <= value < self.cfg.modulus:
            return value
        if self.cfg.arith == "wrap":
            return value % self.cfg.modulus
        raise _Revert("arithmetic out of range")

    def _eval_code(self, e: ast.Expr, ctx: "_Ctx") -> int:
        match e:
            case ast.Num(v):
                return v
            case ast.BoolLit(v):
                return int(v)
            case ast.MsgSender():
                return ctx.sender
            case ast.AddressThis():
                return CONTRACT_ADDR
            case ast.BlockTimestamp():
                return ctx.state.timestamp
            case ast.Name(ident):
                if ident in ctx.env:
                    return ctx.env[ident]
                return ctx.state.scalars[ident]
            case ast.Index1(m, k):
                key = (self._eval_code(k, ctx),)
                return ctx.state.mappings[m].get(key, 0)
            case ast.Index2(m, k1, k2):
                key = (self._eval_code(k1, ctx), self._eval_code(k2, ctx))
                return ctx.state.mappings[m].get(key, 0)
            case ast.BalanceOf(t, a):
                return ctx.state.balances[t].get(self._eval_code(a, ctx), 0)
            case ast.TotalSupplyOf(t):
                return ctx.state.supply[t]
            case ast.NotOp(x):
                return int(not self._truthy(self._eval_code(x, ctx)))
            case ast.BinOp(op, l, r):
                return self._code_binop(op, l, r, ctx)
            case _:
                raise UnsupportedConstruct(f"cannot evaluate {e!r} in contract code")

    def _code_binop(self, op: str, l: ast.Expr, r: ast.Expr, ctx: "_Ctx") -> int:
        if op == "&&":
            return int(
                self._truthy(self._eval_code(l, ctx)) and self._truthy(self._eval_code(r, ctx))
            )
        if op == "||":
            return int(
                self._truthy(self._eval_code(l, ctx)) or self._truthy(self._eval_code(r, ctx))
            )
        a = self._eval_code(l, ctx)
        b = self._eval_code(r, ctx)
        match op:
            case "+":
                return self._wordize(a + b)
            case "-":
                return self._wordize(a - b)
            case "*":
                return self._wordize(a * b)
            case "/":
                if b == 0:
                    raise _Revert("division by zero")
                return self._wordize(a // b)
            case "==":
                return int(a == b)
            case "!=":
                return int(a != b)
            case "<":
                return int(a < b)
            case "<=":
                return int(a <= b)
            case ">":
                return int(a > b)
            case ">=":
                return int(a >= b)
        raise UnsupportedConstruct(f"operator {op!r}")

    # exact check-expression evaluation --------------------------------------

    def _eval_check_bool(
        self,
        e: ast.Expr,
        state: ContractState,
        sender: int,
        env: dict[str, int] | None = None,
    ) -> bool:
        try:
            return bool(self._eval_check(e, state, sender, env or {}))
        except _CallTermFailed:
            return False

    def _eval_check_int(
        self,
        e: ast.Expr,
        state: ContractState,
        sender: int,
        env: dict[str, int] | None = None,
    ) -> int:
        v = self._eval_check(e, state, sender, env or {})
        assert isinstance(v, int) and not isinstance(v, bool), e
        return v

    def _eval_check(self, e, state, sender, env):
        match e:
            case ast.Num(v):
                return v
            case ast.BoolLit(v):
                return v
            case FracConst(v):
                return v
            case ast.MsgSender():
                return sender
            case ast.AddressThis():
                return CONTRACT_ADDR
            case ast.BlockTimestamp():
                return state.timestamp
            case ast.Name(ident):
                if ident in env:
                    return env[ident]
                return state.scalars[ident]
            case SnapshotRef(cell):
                return state.snapshots[cell]
            case ast.Index1(m, k):
                return state.mappings[m].get((self._eval_check(k, state, sender, env),), 0)
            case ast.Index2(m, k1, k2):
                key = (
                    self._eval_check(k1, state, sender, env),
                    self._eval_check(k2, state, sender, env),
                )
                return state.mappings[m].get(key, 0)
            case ast.BalanceOf(t, a):
                return state.balances[t].get(self._eval_check(a, state, sender, env), 0)
            case ast.TotalSupplyOf(t):
                return state.supply[t]
            case ast.SumMapping(m):
                return sum(state.mappings[m].values())
            case ast.NotOp(x):
                return not self._eval_check(x, state, sender, env)
            case ast.CallExpr(fname, args):
                vals = [self._eval_check(a, state, sender, env) for a in args]
                return self._eval_call_term(fname, vals, state, sender)
            case ast.BinOp(op, l, r):
                a = self._eval_check(l, state, sender, env)
                if op == "&&":
                    return bool(a) and bool(self._eval_check(r, state, sender, env))
                if op == "||":
                    return bool(a) or bool(self._eval_check(r, state, sender, env))
                b = self._eval_check(r, state, sender, env)
                match op:
                    case "+":
                        return a + b
                    case "-":
                        return a - b
                    case "*":
                        return a * b
                    case "/":
                        # totalized like the constraint encoding's div
                        if b == 0:
                            return 0
                        q = Fraction(a) / Fraction(b)
                        return q.numerator // q.denominator
                    case "==":
                        return a == b
                    case "!=":
                        return a != b
                    case "<":
                        return a < b
                    case "<=":
                        return a <= b
                    case ">":
                        return a > b
                    case ">=":
                        return a >= b
            case ast.OldExpr():
                raise UnsupportedConstruct(
                    "Old(...) must be resolved to a snapshot cell before execution"
                )
        raise UnsupportedConstruct(f"cannot evaluate {e!r} in a check")

    def _eval_call_term(self, fname: str, args: list, state: ContractState, sender: int):
        """Run a function on a scratch copy; its side effects are discarded.

        A revert inside the scratch run means the term has no value, which
        counts against the check.
        """
        proc = self.ts.call_proc(fname)
        scratch = state.copy()
        env = dict(zip((p.name for p in proc.params), args))
        ctx = _Ctx(scratch, sender, env)
        gas_before = getattr(self, "_gas", 0)
        cap, self.cfg = self.cfg, DomainConfig(
            self.cfg.width, self.cfg.addresses, self.cfg.arith, None
        )
        try:
            self._run_block(proc.body, ctx)
            raise _CallTermFailed()  # fell off the end: no value produced
        except _ReturnSignal as r:
            return r.value
        except _Revert:
            raise _CallTermFailed() from None
        finally:
            self.cfg = cap
            self._gas = gas_before


@dataclass
class _Ctx:
    state: ContractState
    sender: int
    env: dict[str, int]


# -- top-level driving --------------------------------------------------------


def run(
    ts: TransitionSystem,
    init_args: Sequence[int] = (),
    txs: Sequence[Transaction] = (),
) -> Trace:
    """Deploy, then apply transactions until done or a check fails."""
    interp = Interp(ts)
    state, record = interp.deploy(init_args)
    records = [record]
    violation = None
    if record.status in ("violation", "gas"):
        violation = (record.detail, 0)
    elif record.status != "reverted":
        for tx in txs:
            state, record = interp.apply(state, tx)
            records.append(record)
            if record.status in ("violation", "gas"):
                violation = (record.detail, len(records) - 1)
                break
    return Trace(
        contract=ts.contract,
        cfg=ts.cfg,
        init_args=tuple(init_args),
        records=records,
        final=state,
        violation=violation,
    )


def transaction_space(
    ts: TransitionSystem,
    *,
    deltas: Sequence[int] = (0,),
) -> list[Transaction]:
    """Every transaction in the finite universe, in canonical order."""
    cfg = ts.cfg
    out: list[Transaction] = []
    uint_domain = range(cfg.modulus)
    addr_domain = range(cfg.addresses)
    for proc in ts.steps.values():
        domains = [
            addr_domain if p.ty is ast.Ty.ADDRESS else uint_domain for p in proc.params
        ]
        for sender in cfg.senders:
            for args in itertools.product(*domains):
                for delta in deltas:
                    out.append(Transaction(proc.name, sender, args, delta))
    return out


def search_violation(
    ts: TransitionSystem,
    init_args: Sequence[int] = (),
    *,
    max_txs: int,
    deltas: Sequence[int] = (0,),
) -> Trace | None:
    """Exhaustive breadth-first hunt for a violating transaction sequence.

    States already seen (by digest) are not expanded again: whether a
    transaction violates a check depends only on the state it runs from,
    so revisits cannot add counterexamples, only longer ones.
    """
    interp = Interp(ts)
    state, record = interp.deploy(init_args)
    if record.status in ("violation", "gas"):
        return run(ts, init_args, [])
    if record.status == "reverted":
        return None
    space = transaction_space(ts, deltas=deltas)
    seen = {state.digest()}
    frontier: list[tuple[ContractState, tuple[Transaction, ...]]] = [(state, ())]
    for _ in range(max_txs):
        nxt: list[tuple[ContractState, tuple[Transaction, ...]]] = []
        for cur, path in frontier:
            for tx in space:
                new_state, rec = interp.apply(cur, tx)
                if rec.status in ("violation", "gas"):
                    return run(ts, init_args, [*path, tx])
                if rec.status == "reverted":
                    continue
                d = new_state.digest()
                if d not in seen:
                    seen.add(d)
                    nxt.append((new_state, (*path, tx)))
        frontier = nxt
        if not frontier:
            break
    return None
