from .ast import ContractIr, FunctionIr, SourceFile, Ty
from .parser import extract_inline_candidates, parse, parse_expression
from .pretty import fmt_expr, pretty
from .typecheck import typecheck


def load_contract(text: str, path: str = "<memory>") -> ContractIr:
    """Parse and type-check source text in one step."""
    return typecheck(parse(SourceFile.from_text(text, path=path)))


def load_contract_file(path: str) -> ContractIr:
    return typecheck(parse(SourceFile.from_path(path)))


__all__ = [
    "ContractIr",
    "FunctionIr",
    "SourceFile",
    "Ty",
    "parse",
    "parse_expression",
    "extract_inline_candidates",
    "pretty",
    "fmt_expr",
    "typecheck",
    "load_contract",
    "load_contract_file",
]
