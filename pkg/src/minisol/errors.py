"""Error taxonomy shared across the toolchain.

Every user-facing failure is one of these; internal defects raise plain
exceptions so they are never mistaken for bad input.
"""

from __future__ import annotations


class MiniSolError(Exception):
    """Base class for all diagnostics raised on user input."""


class ParseError(MiniSolError):
    """Source text does not conform to the grammar.

    Carries the 1-indexed line/column and the token set the parser was
    prepared to accept at that point.
    """

    def __init__(self, message: str, line: int, column: int, expected: tuple[str, ...] = ()):
        self.line = line
        self.column = column
        self.expected = tuple(expected)
        suffix = f" (expected one of: {', '.join(expected)})" if expected else ""
        super().__init__(f"line {line}, col {column}: {message}{suffix}")


class TypeError_(MiniSolError):
    """Well-formed syntax with an ill-typed meaning."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class DuplicateDecl(TypeError_):
    """A name was declared twice in the same scope."""


class CandidateSyntaxError(MiniSolError):
    """A candidate invariant line failed to parse or type-check."""

    def __init__(self, message: str, raw: str = ""):
        self.raw = raw
        super().__init__(message)


class AnchorMismatch(MiniSolError):
    """A candidate's program point does not name a legal anchor in the IR."""


class DuplicateInstrumentation(MiniSolError):
    """The same candidate was instrumented twice into one program."""


class UnsupportedConstruct(MiniSolError):
    """The IR contains a construct the transition-system lowering rejects."""


class UndeclaredVariable(MiniSolError):
    """A constraint refers to a variable the store never declared."""


class ResourceBudgetExceeded(MiniSolError):
    """The constraint search exhausted its node budget."""


class MissingPriorTier(MiniSolError):
    """A tiered prompt was requested before its prerequisite answers exist."""


class AnswerParseError(MiniSolError):
    """A model answer could not be parsed into the tier's structured form."""


class ReplayMismatch(MiniSolError):
    """A counterexample trace failed to reproduce its recorded violation.

    This signals a defect in the verification pipeline itself, never in
    user input, so callers must not swallow it.
    """
