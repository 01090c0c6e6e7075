"""Recursive-descent parser producing the typed IR.

One grammar serves both contract sources and invariant templates; the
template-only terms (Old, sumMapping, call terms) parse everywhere and the
type checker rejects them where they are not legal. Parsing is
deterministic and total: identical bytes yield structurally identical IR
or the same ParseError.
"""

from __future__ import annotations

import re
import warnings

from ..errors import DuplicateDecl, ParseError
from . import ast
from .lexer import Token, lex

_UNROLL_RE = re.compile(r"@unroll\s+(\d+)")

TYPE_KEYWORDS = ("uint", "bool", "address", "mapping", "IERC20")
DEFAULT_UNROLL = 4

# Multiplier for time-unit suffixes on numerals; one abstract unit per hour.
TIME_UNITS = {"hours": 1}


class _Parser:
    def __init__(self, tokens: list[Token], comments: list[tuple[int, str]]):
        self.toks = tokens
        self.pos = 0
        self.comments = comments
        self._unroll_lines = {
            line: int(m.group(1))
            for line, text in comments
            for m in [_UNROLL_RE.search(text)]
            if m
        }

    # -- token plumbing ----------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        self.pos += 1
        return tok

    def at(self, value: str) -> bool:
        tok = self.peek()
        return tok.value == value and tok.kind in ("PUNCT", "IDENT")

    def expect(self, value: str) -> Token:
        tok = self.peek()
        if tok.value != value or tok.kind == "EOF":
            raise ParseError(
                f"unexpected {tok.value!r}" if tok.kind != "EOF" else "unexpected end of input",
                tok.line,
                tok.col,
                expected=(value,),
            )
        return self.next()

    def expect_ident(self, what: str = "identifier") -> Token:
        tok = self.peek()
        if tok.kind != "IDENT":
            raise ParseError(f"expected {what}", tok.line, tok.col, expected=(what,))
        return self.next()

    def fail(self, message: str, expected: tuple[str, ...] = ()) -> ParseError:
        tok = self.peek()
        return ParseError(message, tok.line, tok.col, expected)

    # -- types -------------------------------------------------------------

    def parse_type(self) -> ast.Ty:
        tok = self.peek()
        if tok.value == "uint":
            self.next()
            return ast.Ty.UINT
        if tok.value == "bool":
            self.next()
            return ast.Ty.BOOL
        if tok.value == "address":
            self.next()
            return ast.Ty.ADDRESS
        if tok.value == "IERC20":
            self.next()
            return ast.Ty.TOKEN
        if tok.value == "mapping":
            self.next()
            self.expect("(")
            self.expect("address")
            self.expect("=>")
            if self.at("uint"):
                self.next()
                self.expect(")")
                return ast.Ty.MAP1
            self.expect("mapping")
            self.expect("(")
            self.expect("uint")
            self.expect("=>")
            self.expect("uint")
            self.expect(")")
            self.expect(")")
            return ast.Ty.MAP2
        raise self.fail("expected a type", expected=TYPE_KEYWORDS)

    # -- expressions -------------------------------------------------------

    def parse_expr(self) -> ast.Expr:
        return self._parse_or()

    def _parse_or(self) -> ast.Expr:
        left = self._parse_and()
        while self.at("||"):
            self.next()
            left = ast.BinOp("||", left, self._parse_and())
        return left

    def _parse_and(self) -> ast.Expr:
        left = self._parse_cmp()
        while self.at("&&"):
            self.next()
            left = ast.BinOp("&&", left, self._parse_cmp())
        return left

    def _parse_cmp(self) -> ast.Expr:
        left = self._parse_add()
        if self.peek().value in ast.CMP_OPS and self.peek().kind == "PUNCT":
            op = self.next().value
            return ast.BinOp(op, left, self._parse_add())
        return left

    def _parse_add(self) -> ast.Expr:
        left = self._parse_mul()
        while self.peek().kind == "PUNCT" and self.peek().value in ("+", "-"):
            op = self.next().value
            left = ast.BinOp(op, left, self._parse_mul())
        return left

    def _parse_mul(self) -> ast.Expr:
        left = self._parse_unary()
        while self.peek().kind == "PUNCT" and self.peek().value in ("*", "/"):
            op = self.next().value
            left = ast.BinOp(op, left, self._parse_unary())
        return left

    def _parse_unary(self) -> ast.Expr:
        if self.at("!"):
            self.next()
            return ast.NotOp(self._parse_unary())
        return self._parse_primary()

    def _parse_primary(self) -> ast.Expr:
        tok = self.peek()
        if tok.kind == "NUM":
            self.next()
            value = int(tok.value)
            nxt = self.peek()
            if nxt.kind == "IDENT" and nxt.value in TIME_UNITS:
                self.next()
                value *= TIME_UNITS[nxt.value]
            return ast.Num(value)
        if tok.value == "(":
            self.next()
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if tok.value == "true":
            self.next()
            return ast.BoolLit(True)
        if tok.value == "false":
            self.next()
            return ast.BoolLit(False)
        if tok.value == "msg":
            self.next()
            self.expect(".")
            self.expect("sender")
            return ast.MsgSender()
        if tok.value == "block":
            self.next()
            self.expect(".")
            self.expect("timestamp")
            return ast.BlockTimestamp()
        if tok.value == "address":
            self.next()
            self.expect("(")
            self.expect("this")
            self.expect(")")
            return ast.AddressThis()
        if tok.kind == "IDENT":
            name = self.next().value
            if self.at("."):
                self.next()
                method = self.expect_ident("token method").value
                self.expect("(")
                args = self._parse_args()
                self.expect(")")
                if method == "balanceOf":
                    if len(args) != 1:
                        raise self.fail("balanceOf takes one address argument")
                    return ast.BalanceOf(name, args[0])
                if method == "totalSupply":
                    if args:
                        raise self.fail("totalSupply takes no arguments")
                    return ast.TotalSupplyOf(name)
                raise self.fail(f"{method!r} is not readable in an expression",
                                expected=("balanceOf", "totalSupply"))
            if self.at("("):
                self.next()
                args = self._parse_args()
                self.expect(")")
                return ast.CallExpr(name, tuple(args))
            if self.at("["):
                self.next()
                k1 = self.parse_expr()
                self.expect("]")
                if self.at("["):
                    self.next()
                    k2 = self.parse_expr()
                    self.expect("]")
                    return ast.Index2(name, k1, k2)
                return ast.Index1(name, k1)
            return ast.Name(name)
        raise self.fail("expected an expression", expected=("number", "identifier", "("))

    def _parse_args(self) -> list[ast.Expr]:
        args: list[ast.Expr] = []
        if self.at(")"):
            return args
        args.append(self.parse_expr())
        while self.at(","):
            self.next()
            args.append(self.parse_expr())
        return args

    # -- statements ----------------------------------------------------

    def parse_block(self) -> list[ast.Stmt]:
        self.expect("{")
        stmts: list[ast.Stmt] = []
        while not self.at("}"):
            if self.peek().kind == "EOF":
                raise self.fail("unterminated block", expected=("}",))
            stmts.append(self.parse_stmt())
        self.expect("}")
        return stmts

    def parse_stmt(self) -> ast.Stmt:
        tok = self.peek()
        line = tok.line
        if tok.value in ("uint", "bool", "address"):
            ty = self.parse_type()
            name = self.expect_ident("local name").value
            self.expect("=")
            expr = self.parse_expr()
            self.expect(";")
            return ast.LocalDecl(name, ty, expr, line=line)
        if tok.value == "require":
            self.next()
            self.expect("(")
            cond = self.parse_expr()
            message = None
            if self.at(","):
                self.next()
                stok = self.peek()
                if stok.kind != "STRING":
                    raise self.fail("expected a string message", expected=("string",))
                message = self.next().value
            self.expect(")")
            self.expect(";")
            return ast.Require(cond, message, line=line)
        if tok.value == "if":
            self.next()
            self.expect("(")
            cond = self.parse_expr()
            self.expect(")")
            then = self.parse_block()
            orelse: list[ast.Stmt] = []
            if self.at("else"):
                self.next()
                orelse = self.parse_block()
            return ast.If(cond, then, orelse, line=line)
        if tok.value == "while":
            self.next()
            self.expect("(")
            cond = self.parse_expr()
            self.expect(")")
            body = self.parse_block()
            unroll = self._unroll_lines.get(line, DEFAULT_UNROLL)
            return ast.While(cond, body, unroll=unroll, line=line)
        if tok.value == "return":
            self.next()
            if self.at(";"):
                self.next()
                return ast.Return(None, line=line)
            expr = self.parse_expr()
            self.expect(";")
            return ast.Return(expr, line=line)
        if tok.kind == "IDENT":
            name = self.next().value
            if self.at("."):
                self.next()
                method = self.expect_ident("token method").value
                self.expect("(")
                args = self._parse_args()
                self.expect(")")
                self.expect(";")
                return ast.TokenCall(name, method, args, line=line)
            if self.at("("):
                self.next()
                args = self._parse_args()
                self.expect(")")
                self.expect(";")
                return ast.InternalCall(name, args, line=line)
            keys: list[ast.Expr] = []
            while self.at("["):
                self.next()
                keys.append(self.parse_expr())
                self.expect("]")
                if len(keys) > 2:
                    raise self.fail("mappings nest at most two levels")
            self.expect("=")
            expr = self.parse_expr()
            self.expect(";")
            return ast.Assign(ast.LValue(name, tuple(keys)), expr, line=line)
        raise self.fail("expected a statement",
                        expected=("require", "if", "while", "return", "identifier"))

    # -- declarations ----------------------------------------------------

    def parse_contract(self) -> ast.ContractIr:
        self.expect("contract")
        name = self.expect_ident("contract name").value
        ir = ast.ContractIr(name=name)
        self.expect("{")
        while not self.at("}"):
            tok = self.peek()
            if tok.kind == "EOF":
                raise self.fail("unterminated contract body", expected=("}",))
            if tok.value in TYPE_KEYWORDS:
                self._parse_state_decl(ir)
                continue
            if tok.value == "modifier":
                mod = self.parse_modifier()
                if any(m.name == mod.name for m in ir.modifiers):
                    raise DuplicateDecl(f"duplicate modifier {mod.name!r}", line=mod.line)
                ir.modifiers.append(mod)
                continue
            if tok.value == "constructor":
                if ir.constructor is not None:
                    raise self.fail("duplicate constructor")
                ir.constructor = self.parse_function(constructor=True)
                continue
            if tok.value == "function":
                fn = self.parse_function()
                if any(f.name == fn.name for f in ir.functions):
                    raise DuplicateDecl(f"duplicate function {fn.name!r}", line=fn.line)
                ir.functions.append(fn)
                continue
            raise self.fail(
                "expected a declaration",
                expected=("function", "constructor", "modifier") + TYPE_KEYWORDS,
            )
        self.expect("}")
        tok = self.peek()
        if tok.kind != "EOF":
            raise ParseError("trailing input after contract", tok.line, tok.col)
        return ir

    def _parse_state_decl(self, ir: ast.ContractIr) -> None:
        line = self.peek().line
        ty = self.parse_type()
        while True:
            nametok = self.expect_ident("variable name")
            decl = ast.VarDecl(nametok.value, ty, line)
            if ir.lookup(nametok.value) is not None or nametok.value in ir.token_stubs:
                raise DuplicateDecl(f"duplicate declaration of {nametok.value!r}", line)
            if ty is ast.Ty.TOKEN:
                ir.token_stubs.append(nametok.value)
                ir.token_stub_lines[nametok.value] = line
            elif ty in (ast.Ty.MAP1, ast.Ty.MAP2):
                ir.mappings.append(decl)
            else:
                ir.state_vars.append(decl)
            if self.at(","):
                self.next()
                continue
            break
        self.expect(";")

    def parse_modifier(self) -> ast.ModifierDecl:
        line = self.expect("modifier").line
        name = self.expect_ident("modifier name").value
        self.expect("{")
        self.expect("require")
        self.expect("(")
        cond = self.parse_expr()
        self.expect(")")
        self.expect(";")
        self.expect("}")
        return ast.ModifierDecl(name=name, cond=cond, line=line)

    def parse_function(self, constructor: bool = False) -> ast.FunctionIr:
        if constructor:
            line = self.expect("constructor").line
            name = "constructor"
        else:
            line = self.expect("function").line
            name = self.expect_ident("function name").value
        self.expect("(")
        params: list[ast.Param] = []
        if not self.at(")"):
            while True:
                ty = self.parse_type()
                pname = self.expect_ident("parameter name").value
                params.append(ast.Param(pname, ty))
                if self.at(","):
                    self.next()
                    continue
                break
        self.expect(")")
        visibility = "constructor" if constructor else ""
        modifiers: list[str] = []
        return_ty: ast.Ty | None = None
        while not self.at("{"):
            tok = self.peek()
            if tok.value in ("external", "public", "internal"):
                if visibility and not constructor:
                    raise self.fail("duplicate visibility")
                if not constructor:
                    visibility = tok.value
                self.next()
                continue
            if tok.value == "returns":
                self.next()
                self.expect("(")
                return_ty = self.parse_type()
                self.expect(")")
                continue
            if tok.kind == "IDENT":
                modifiers.append(self.next().value)
                continue
            raise self.fail("expected visibility, modifier, returns, or body",
                            expected=("external", "public", "internal", "returns", "{"))
        if not visibility:
            raise self.fail(f"function {name!r} needs a visibility")
        body = self.parse_block()
        return ast.FunctionIr(
            name=name, params=params, visibility=visibility, body=body,
            line=line, return_ty=return_ty, modifiers=modifiers,
        )


_PRAGMA_RE = re.compile(r"^(\s*)pragma\b[^;]*;", re.MULTILINE)


def _strip_pragmas(text: str) -> str:
    """Blank out pragma directives, warning once per line, keeping layout."""

    def drop(m: re.Match) -> str:
        line = text.count("\n", 0, m.start()) + 1
        warnings.warn(f"ignoring pragma directive at line {line}", stacklevel=4)
        return m.group(1)

    return _PRAGMA_RE.sub(drop, text)


def parse(source: ast.SourceFile) -> ast.ContractIr:
    """Parse a source file into contract IR and attach the comment map."""
    result = lex(_strip_pragmas(source.text))
    source.comments = result.comments
    parser = _Parser(result.tokens, result.comments)
    ir = parser.parse_contract()
    ir.source = source
    return ir


def parse_expression(text: str) -> ast.Expr:
    """Parse a standalone expression (used by the candidate template parser)."""
    result = lex(text)
    parser = _Parser(result.tokens, result.comments)
    expr = parser.parse_expr()
    tok = parser.peek()
    if tok.kind != "EOF":
        raise ParseError("trailing input after expression", tok.line, tok.col)
    return expr


def extract_inline_candidates(source: ast.SourceFile) -> list[str]:
    """Collect `//@inv: <candidate line>` annotations in source order."""
    out: list[str] = []
    for _, text in source.comments:
        if text.startswith("@inv:"):
            out.append(text[len("@inv:"):].strip())
    return out
