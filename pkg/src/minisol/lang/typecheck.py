"""Static checks over the contract IR.

Beyond ordinary typing this enforces two structural rules the back end
depends on: internal calls form an acyclic graph (so call inlining
terminates), and token mint operations appear only in constructors (they
model initial allocations, not runtime behavior).
"""

from __future__ import annotations

from collections.abc import Iterator

from ..errors import DuplicateDecl, TypeError_
from . import ast
from .ast import Ty

TOKEN_TX_METHODS = {
    "transfer": (Ty.ADDRESS, Ty.UINT),
    "transferFrom": (Ty.ADDRESS, Ty.ADDRESS, Ty.UINT),
}
TOKEN_CTOR_METHODS = {
    "mint": (Ty.ADDRESS, Ty.UINT),
    "mintReserve": (Ty.UINT,),
}
# Guarded wrappers share the plain methods' semantics here: the stub
# already reverts on insufficient holder balance.
TOKEN_ALIASES = {"safeTransfer": "transfer", "safeTransferFrom": "transferFrom"}


def iter_stmts(body: list[ast.Stmt]) -> Iterator[ast.Stmt]:
    """Yield every statement in a body, including nested ones, in order."""
    for stmt in body:
        yield stmt
        if isinstance(stmt, ast.If):
            yield from iter_stmts(stmt.then)
            yield from iter_stmts(stmt.orelse)
        elif isinstance(stmt, ast.While):
            yield from iter_stmts(stmt.body)


class ExprChecker:
    """Types an expression against a contract plus a local scope.

    Candidate templates extend the base rules (Old, sumMapping, k, and
    call terms); contract code runs with those switched off.
    """

    def __init__(
        self,
        ir: ast.ContractIr,
        locals_: dict[str, Ty] | None = None,
        candidate_mode: bool = False,
        line: int | None = None,
    ):
        self.ir = ir
        self.locals = locals_ or {}
        self.candidate_mode = candidate_mode
        self.line = line

    def err(self, message: str) -> TypeError_:
        return TypeError_(message, self.line)

    def check(self, expr: ast.Expr, want: Ty | None = None) -> Ty:
        got = self._infer(expr)
        if want is not None and got is not want:
            raise self.err(f"expected {want}, got {got}")
        return got

    def _infer(self, expr: ast.Expr) -> Ty:
        match expr:
            case ast.Num():
                return Ty.UINT
            case ast.BoolLit():
                return Ty.BOOL
            case ast.MsgSender() | ast.AddressThis():
                return Ty.ADDRESS
            case ast.BlockTimestamp():
                return Ty.UINT
            case ast.Name(ident):
                if ident in self.locals:
                    return self.locals[ident]
                decl = self.ir.lookup(ident)
                if decl is not None:
                    if decl.ty in (Ty.MAP1, Ty.MAP2):
                        raise self.err(f"mapping {ident!r} cannot be read whole; index it")
                    return decl.ty
                if ident in self.ir.token_stubs:
                    raise self.err(f"token stub {ident!r} is not a value")
                raise self.err(f"unknown identifier {ident!r}")
            case ast.Index1(mapping, key):
                self._want_mapping(mapping, Ty.MAP1)
                self.check(key, Ty.ADDRESS)
                return Ty.UINT
            case ast.Index2(mapping, k1, k2):
                self._want_mapping(mapping, Ty.MAP2)
                self.check(k1, Ty.ADDRESS)
                self.check(k2, Ty.UINT)
                return Ty.UINT
            case ast.BalanceOf(token, addr):
                self._want_token(token)
                self.check(addr, Ty.ADDRESS)
                return Ty.UINT
            case ast.TotalSupplyOf(token):
                self._want_token(token)
                return Ty.UINT
            case ast.BinOp(op, left, right):
                if op in ast.ARITH_OPS:
                    self.check(left, Ty.UINT)
                    self.check(right, Ty.UINT)
                    return Ty.UINT
                if op in ("==", "!="):
                    lt = self._infer(left)
                    if lt in (Ty.MAP1, Ty.MAP2, Ty.TOKEN):
                        raise self.err("mappings and stubs cannot be compared")
                    self.check(right, lt)
                    return Ty.BOOL
                if op in ast.CMP_OPS:
                    self.check(left, Ty.UINT)
                    self.check(right, Ty.UINT)
                    return Ty.BOOL
                if op in ast.BOOL_OPS:
                    self.check(left, Ty.BOOL)
                    self.check(right, Ty.BOOL)
                    return Ty.BOOL
                raise self.err(f"unknown operator {op!r}")
            case ast.NotOp(operand):
                self.check(operand, Ty.BOOL)
                return Ty.BOOL
            case ast.OldExpr(inner):
                if not self.candidate_mode:
                    raise self.err("Old(...) is only legal in invariant templates")
                return self.check(inner, Ty.UINT)
            case ast.SumMapping(mapping):
                if not self.candidate_mode:
                    raise self.err("sumMapping(...) is only legal in invariant templates")
                self._want_mapping(mapping, None)
                return Ty.UINT
            case ast.KConst():
                if not self.candidate_mode:
                    raise self.err("k is only legal in invariant templates")
                return Ty.UINT
            case ast.CallExpr(func, args):
                if not self.candidate_mode:
                    raise self.err("call expressions are only legal in invariant templates")
                target = self.ir.function(func)
                if target is None:
                    raise self.err(f"unknown function {func!r} in call term")
                if target.return_ty is None:
                    raise self.err(f"{func!r} returns nothing; call terms need a value")
                if len(args) != len(target.params):
                    raise self.err(f"{func!r} takes {len(target.params)} argument(s)")
                for arg, param in zip(args, target.params):
                    self.check(arg, param.ty)
                return target.return_ty
        raise self.err(f"unsupported expression {expr!r}")

    def _want_mapping(self, name: str, depth: Ty | None) -> ast.VarDecl:
        for m in self.ir.mappings:
            if m.name == name:
                if depth is not None and m.ty is not depth:
                    raise self.err(f"{name!r} is {m.ty}, not {depth}")
                return m
        raise self.err(f"unknown mapping {name!r}")

    def _want_token(self, name: str) -> None:
        if name not in self.ir.token_stubs:
            raise self.err(f"unknown token stub {name!r}")


class _FunctionChecker:
    def __init__(self, ir: ast.ContractIr, fn: ast.FunctionIr):
        self.ir = ir
        self.fn = fn
        self.locals: dict[str, Ty] = {}
        for p in fn.params:
            if p.ty in (Ty.MAP1, Ty.MAP2, Ty.TOKEN):
                raise TypeError_(f"parameter {p.name!r} has non-scalar type", fn.line)
            if p.name in self.locals or ir.lookup(p.name) or p.name in ir.token_stubs:
                raise DuplicateDecl(f"parameter {p.name!r} shadows another name", fn.line)
            self.locals[p.name] = p.ty

    def expr_checker(self, line: int) -> ExprChecker:
        return ExprChecker(self.ir, dict(self.locals), candidate_mode=False, line=line)

    def check_body(self, body: list[ast.Stmt]) -> None:
        for stmt in body:
            self.check_stmt(stmt)

    def check_stmt(self, stmt: ast.Stmt) -> None:
        checker = self.expr_checker(stmt.line)
        match stmt:
            case ast.LocalDecl(name=name, ty=ty, expr=expr):
                if name in self.locals or self.ir.lookup(name) or name in self.ir.token_stubs:
                    raise DuplicateDecl(f"local {name!r} shadows another name", stmt.line)
                checker.check(expr, ty)
                self.locals[name] = ty
            case ast.Assign(target=target, expr=expr):
                want = self._target_type(target, stmt.line)
                checker.check(expr, want)
            case ast.Require(cond=cond):
                checker.check(cond, Ty.BOOL)
            case ast.If(cond=cond, then=then, orelse=orelse):
                checker.check(cond, Ty.BOOL)
                self.check_body(then)
                self.check_body(orelse)
            case ast.While(cond=cond, body=body, unroll=unroll):
                if unroll < 1:
                    raise TypeError_("unroll bound must be at least 1", stmt.line)
                checker.check(cond, Ty.BOOL)
                self.check_body(body)
            case ast.Return(expr=expr):
                if self.fn.return_ty is None:
                    if expr is not None:
                        raise TypeError_(f"{self.fn.name!r} returns nothing", stmt.line)
                elif expr is None:
                    raise TypeError_(f"{self.fn.name!r} must return a value", stmt.line)
                else:
                    checker.check(expr, self.fn.return_ty)
            case ast.InternalCall(func=func, args=args):
                target = self.ir.function(func)
                if target is None:
                    raise TypeError_(f"unknown function {func!r}", stmt.line)
                if len(args) != len(target.params):
                    raise TypeError_(f"{func!r} takes {len(target.params)} argument(s)", stmt.line)
                for arg, param in zip(args, target.params):
                    checker.check(arg, param.ty)
            case ast.TokenCall(token=token, method=method, args=args):
                if token not in self.ir.token_stubs:
                    raise TypeError_(f"unknown token stub {token!r}", stmt.line)
                method = TOKEN_ALIASES.get(method, method)
                if method in TOKEN_CTOR_METHODS:
                    if self.fn.visibility != "constructor":
                        raise TypeError_(f"{method!r} is constructor-only", stmt.line)
                    sig = TOKEN_CTOR_METHODS[method]
                elif method in TOKEN_TX_METHODS:
                    sig = TOKEN_TX_METHODS[method]
                else:
                    raise TypeError_(f"unknown token method {method!r}", stmt.line)
                if len(args) != len(sig):
                    raise TypeError_(f"{method!r} takes {len(sig)} argument(s)", stmt.line)
                for arg, want in zip(args, sig):
                    checker.check(arg, want)
            case _:
                raise TypeError_(f"unsupported statement {stmt!r}", stmt.line)

    def _target_type(self, target: ast.LValue, line: int) -> Ty:
        checker = self.expr_checker(line)
        if target.keys:
            decl = None
            for m in self.ir.mappings:
                if m.name == target.name:
                    decl = m
            if decl is None:
                raise TypeError_(f"unknown mapping {target.name!r}", line)
            if decl.ty is Ty.MAP1:
                if len(target.keys) != 1:
                    raise TypeError_(f"{target.name!r} takes one key", line)
                checker.check(target.keys[0], Ty.ADDRESS)
            else:
                if len(target.keys) != 2:
                    raise TypeError_(f"{target.name!r} takes two keys", line)
                checker.check(target.keys[0], Ty.ADDRESS)
                checker.check(target.keys[1], Ty.UINT)
            return Ty.UINT
        if target.name in self.locals:
            return self.locals[target.name]
        decl = self.ir.lookup(target.name)
        if decl is None:
            raise TypeError_(f"unknown assignment target {target.name!r}", line)
        if decl.ty in (Ty.MAP1, Ty.MAP2):
            raise TypeError_(f"mapping {target.name!r} needs keys", line)
        return decl.ty


def _call_edges(fn: ast.FunctionIr) -> set[str]:
    return {s.func for s in iter_stmts(fn.body) if isinstance(s, ast.InternalCall)}


def typecheck(ir: ast.ContractIr) -> ast.ContractIr:
    """Validate the whole contract; returns it unchanged on success."""
    all_fns = list(ir.functions) + ([ir.constructor] if ir.constructor else [])
    for fn in all_fns:
        for mod in fn.modifiers:
            if ir.modifier(mod) is None:
                raise TypeError_(f"unknown modifier {mod!r} on {fn.name!r}", fn.line)
        _FunctionChecker(ir, fn).check_body(fn.body)
    for mod in ir.modifiers:
        ExprChecker(ir, {}, candidate_mode=False, line=mod.line).check(mod.cond, Ty.BOOL)
    # Internal calls must not recurse, directly or through a cycle.
    edges = {fn.name: _call_edges(fn) for fn in all_fns}
    state: dict[str, int] = {}  # 1 = in progress, 2 = done

    def visit(name: str, chain: tuple[str, ...]) -> None:
        if state.get(name) == 2:
            return
        if state.get(name) == 1:
            raise TypeError_(f"recursive internal call chain: {' -> '.join(chain + (name,))}")
        state[name] = 1
        for callee in sorted(edges.get(name, ())):
            if ir.function(callee) is not None:
                visit(callee, chain + (name,))
        state[name] = 2

    for fn in all_fns:
        visit(fn.name, ())
    return ir
