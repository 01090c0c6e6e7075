"""IR back to source text, preserving each statement's line number.

The printer places every construct on its recorded line (padding with
blanks, sharing lines when the original did), so reparsing the output
reproduces the same statement order and line mapping. Operands are
parenthesized whenever they are not primary, which keeps the expression
tree shape stable through a reparse.
"""

from __future__ import annotations

from . import ast


def _primary(expr: ast.Expr) -> bool:
    return not isinstance(expr, (ast.BinOp, ast.NotOp))


def fmt_expr(expr: ast.Expr) -> str:
    match expr:
        case ast.Num(value):
            return str(value)
        case ast.BoolLit(value):
            return "true" if value else "false"
        case ast.Name(ident):
            return ident
        case ast.MsgSender():
            return "msg.sender"
        case ast.BlockTimestamp():
            return "block.timestamp"
        case ast.AddressThis():
            return "address(this)"
        case ast.Index1(mapping, key):
            return f"{mapping}[{fmt_expr(key)}]"
        case ast.Index2(mapping, k1, k2):
            return f"{mapping}[{fmt_expr(k1)}][{fmt_expr(k2)}]"
        case ast.BalanceOf(token, addr):
            return f"{token}.balanceOf({fmt_expr(addr)})"
        case ast.TotalSupplyOf(token):
            return f"{token}.totalSupply()"
        case ast.BinOp(op, left, right):
            lhs = fmt_expr(left) if _primary(left) else f"({fmt_expr(left)})"
            rhs = fmt_expr(right) if _primary(right) else f"({fmt_expr(right)})"
            return f"{lhs} {op} {rhs}"
        case ast.NotOp(operand):
            inner = fmt_expr(operand) if _primary(operand) else f"({fmt_expr(operand)})"
            return f"!{inner}"
        case ast.OldExpr(inner):
            return f"Old({fmt_expr(inner)})"
        case ast.SumMapping(mapping):
            return f"sumMapping({mapping})"
        case ast.KConst():
            return "k"
        case ast.CallExpr(func, args):
            return f"{func}({', '.join(fmt_expr(a) for a in args)})"
    raise ValueError(f"unprintable expression {expr!r}")


class _LineWriter:
    def __init__(self) -> None:
        self.chunks: dict[int, list[str]] = {}
        self.high = 0

    def put(self, line: int, text: str) -> None:
        line = max(line, 1)
        self.chunks.setdefault(line, []).append(text)
        self.high = max(self.high, line)

    def fresh(self) -> int:
        """A line strictly after everything written so far."""
        self.high += 1
        return self.high

    def render(self) -> str:
        out = []
        for ln in range(1, self.high + 1):
            out.append(" ".join(self.chunks.get(ln, [])))
        return "\n".join(out) + "\n"


def _emit_stmt(w: _LineWriter, stmt: ast.Stmt) -> None:
    ln = stmt.line
    match stmt:
        case ast.Assign(target=t, expr=e):
            keys = "".join(f"[{fmt_expr(k)}]" for k in t.keys)
            w.put(ln, f"{t.name}{keys} = {fmt_expr(e)};")
        case ast.LocalDecl(name=name, ty=ty, expr=e):
            w.put(ln, f"{ty} {name} = {fmt_expr(e)};")
        case ast.Require(cond=c, message=m):
            msg = f', "{m}"' if m is not None else ""
            w.put(ln, f"require({fmt_expr(c)}{msg});")
        case ast.If(cond=c, then=then, orelse=orelse):
            w.put(ln, f"if ({fmt_expr(c)}) {{")
            for s in then:
                _emit_stmt(w, s)
            if orelse:
                w.put(w.fresh(), "} else {")
                for s in orelse:
                    _emit_stmt(w, s)
            w.put(w.fresh(), "}")
        case ast.While(cond=c, body=body, unroll=unroll):
            w.put(ln, f"while ({fmt_expr(c)}) /*@unroll {unroll}*/ {{")
            for s in body:
                _emit_stmt(w, s)
            w.put(w.fresh(), "}")
        case ast.Return(expr=e):
            w.put(ln, "return;" if e is None else f"return {fmt_expr(e)};")
        case ast.InternalCall(func=f, args=args):
            w.put(ln, f"{f}({', '.join(fmt_expr(a) for a in args)});")
        case ast.TokenCall(token=t, method=m, args=args):
            w.put(ln, f"{t}.{m}({', '.join(fmt_expr(a) for a in args)});")
        case _:
            raise ValueError(f"unprintable statement {stmt!r}")


def _emit_function(w: _LineWriter, fn: ast.FunctionIr) -> None:
    params = ", ".join(f"{p.ty} {p.name}" for p in fn.params)
    head = "constructor" if fn.visibility == "constructor" else f"function {fn.name}"
    parts = [f"{head}({params})"]
    parts.extend(fn.modifiers)
    if fn.visibility != "constructor":
        parts.append(fn.visibility)
    if fn.return_ty is not None:
        parts.append(f"returns ({fn.return_ty})")
    w.put(fn.line, " ".join(parts) + " {")
    for s in fn.body:
        _emit_stmt(w, s)
    w.put(w.fresh(), "}")


def pretty(ir: ast.ContractIr) -> str:
    """Render IR back to parseable source with stable line numbers."""
    w = _LineWriter()
    w.put(1, f"contract {ir.name} {{")
    decls = (
        [(v.line, f"{v.ty} {v.name};") for v in ir.state_vars]
        + [(m.line, f"{m.ty} {m.name};") for m in ir.mappings]
    )
    for name in ir.token_stubs:
        decls.append((ir.token_stub_lines.get(name, 2), f"IERC20 {name};"))
    for ln, text in sorted(decls, key=lambda p: p[0]):
        w.put(max(ln, 2), text)
    for mod in ir.modifiers:
        w.put(mod.line, f"modifier {mod.name} {{ require({fmt_expr(mod.cond)}); }}")
    items: list[ast.FunctionIr] = list(ir.functions)
    if ir.constructor is not None:
        items.append(ir.constructor)
    for fn in sorted(items, key=lambda f: f.line):
        _emit_function(w, fn)
    w.put(w.fresh(), "}")
    return w.render()
