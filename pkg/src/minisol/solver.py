"""Finite-domain constraint store.

Queries here are conjunctions of literals over bounded integer variables:

  * AffineCmp  -- sum(coeff * var) compared against a constant, optionally
                  modulo m (equality forms only), which is how wrapped
                  machine arithmetic reaches the solver;
  * AuxDef     -- a variable defined as a non-affine combination of others
                  (product, floor quotient, or a table select).

check() runs a depth-first search over the variables in declaration order,
trying values in ascending order, with interval propagation after every
assignment. The first full assignment found this way is the
lexicographically least model, which keeps counterexamples canonical: two
runs over the same store always report the identical witness.

Disjunction never appears at this level; callers that need it split paths
and issue one store per path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

from .errors import ResourceBudgetExceeded, UndeclaredVariable

CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")

Operand = Union[str, int]


@dataclass(frozen=True)
class AffineCmp:
    """sum(c_i * x_i) op const, optionally taken mod `modulus`."""

    op: str
    terms: tuple[tuple[int, str], ...]
    const: int
    modulus: int | None = None

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise ValueError(f"bad comparison {self.op!r}")
        if self.modulus is not None and self.op not in ("==", "!="):
            raise ValueError("modulus is only meaningful for equality forms")
        if self.modulus is not None and self.modulus < 1:
            raise ValueError("modulus must be positive")
        for c, _ in self.terms:
            if not isinstance(c, int):
                raise ValueError(f"coefficients must be integers, got {c!r}")
        if not isinstance(self.const, int):
            raise ValueError(f"constant must be an integer, got {self.const!r}")
        # canonical form: one term per variable, zero coefficients dropped;
        # propagation relies on this
        merged: dict[str, int] = {}
        for c, v in self.terms:
            merged[v] = merged.get(v, 0) + c
        canon = tuple((c, v) for v, c in merged.items() if c != 0)
        if canon != self.terms:
            object.__setattr__(self, "terms", canon)

    def vars(self) -> Iterable[str]:
        return (v for _, v in self.terms)


@dataclass(frozen=True)
class AuxDef:
    """result := op(operands); op is mul, div, or select.

    div is floor division with quotient 0 when the divisor is 0 (callers
    model revert-on-zero separately). select requires its index operand to
    fall inside the table and acts as a constraint otherwise.
    """

    result: str
    op: str
    operands: tuple[Operand, ...]

    def __post_init__(self):
        if self.op not in ("mul", "div", "select"):
            raise ValueError(f"bad aux op {self.op!r}")
        if self.op in ("mul", "div") and len(self.operands) != 2:
            raise ValueError(f"{self.op} takes two operands")
        if self.op == "select" and len(self.operands) < 2:
            raise ValueError("select takes an index and at least one entry")

    def vars(self) -> Iterable[str]:
        yield self.result
        for o in self.operands:
            if isinstance(o, str):
                yield o


Literal = Union[AffineCmp, AuxDef]


def scaled_cmp(
    op: str,
    terms: Sequence[tuple[Fraction | int, str]],
    const: Fraction | int,
    modulus: int | None = None,
) -> AffineCmp:
    """Build an AffineCmp from rational coefficients by clearing denominators.

    Multiplying through by the (positive) common denominator preserves
    every comparison direction exactly, so rational candidate constants
    like k = 3/2 never cost precision.
    """
    fracs = [Fraction(c) for c, _ in terms] + [Fraction(const)]
    denom = math.lcm(*(f.denominator for f in fracs)) if fracs else 1
    if modulus is not None and denom != 1:
        raise ValueError("modular comparisons cannot carry rational coefficients")
    return AffineCmp(
        op,
        tuple((int(Fraction(c) * denom), v) for c, v in terms),
        int(Fraction(const) * denom),
        modulus,
    )


@dataclass(frozen=True)
class Model:
    """A satisfying assignment; ordered by variable declaration for ranking."""

    values: dict[str, int]
    order: tuple[str, ...]

    def __getitem__(self, name: str) -> int:
        return self.values[name]

    def get(self, name: str, default: int | None = None):
        return self.values.get(name, default)

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(self.values[v] for v in self.order)

    def __hash__(self):
        return hash(self.as_tuple())

    def __eq__(self, other):
        return isinstance(other, Model) and self.values == other.values


@dataclass(frozen=True)
class SAT:
    model: Model

    def __bool__(self) -> bool:
        return True


@dataclass(frozen=True)
class UNSAT:
    def __bool__(self) -> bool:
        return False


CheckResult = Union[SAT, UNSAT]

DEFAULT_NODE_BUDGET = 2_000_000


class Store:
    """A pushable conjunction of literals over bounded integer variables."""

    def __init__(self, node_budget: int = DEFAULT_NODE_BUDGET):
        self.node_budget = node_budget
        self._vars: list[str] = []
        self._bounds: dict[str, tuple[int, int]] = {}
        self._lits: list[Literal] = []
        self._frames: list[tuple[int, int]] = []
        self.nodes_visited = 0

    # -- construction ----------------------------------------------------

    def declare(self, name: str, lo: int, hi: int) -> None:
        if name in self._bounds:
            raise ValueError(f"variable {name!r} already declared")
        if lo > hi:
            raise ValueError(f"empty domain for {name!r}: [{lo}, {hi}]")
        self._vars.append(name)
        self._bounds[name] = (lo, hi)

    def assert_(self, lit: Literal) -> None:
        for v in lit.vars():
            if v not in self._bounds:
                raise UndeclaredVariable(f"variable {v!r} was never declared")
        self._lits.append(lit)

    def push(self) -> None:
        self._frames.append((len(self._vars), len(self._lits)))

    def pop(self) -> None:
        if not self._frames:
            raise IndexError("pop on an empty frame stack")
        nvars, nlits = self._frames.pop()
        for name in self._vars[nvars:]:
            del self._bounds[name]
        del self._vars[nvars:]
        del self._lits[nlits:]

    def dump(self) -> str:
        """Deterministic textual form of the current frame, for certificates."""
        out = []
        for name in self._vars:
            lo, hi = self._bounds[name]
            out.append(f"(declare {name} {lo} {hi})")
        for lit in self._lits:
            if isinstance(lit, AffineCmp):
                body = " ".join(f"(* {c} {v})" for c, v in lit.terms) or "0"
                lhs = f"(+ {body})" if lit.terms else "0"
                if lit.modulus is not None:
                    out.append(f"(assert ({lit.op} (mod {lhs} {lit.modulus}) "
                               f"(mod {lit.const} {lit.modulus})))")
                else:
                    out.append(f"(assert ({lit.op} {lhs} {lit.const}))")
            else:
                ops = " ".join(str(o) for o in lit.operands)
                out.append(f"(def {lit.result} ({lit.op} {ops}))")
        return "\n".join(out)

    # -- solving -----------------------------------------------------------

    def check(self) -> CheckResult:
        """Search for the lexicographically least model of the conjunction."""
        self.nodes_visited = 0
        intervals = dict(self._bounds)
        if not self._propagate(intervals):
            return UNSAT()
        assignment = self._search(0, intervals)
        if assignment is None:
            return UNSAT()
        return SAT(Model(values=assignment, order=tuple(self._vars)))

    def _search(self, idx: int, intervals: dict[str, tuple[int, int]]) -> dict[str, int] | None:
        if idx == len(self._vars):
            values = {v: intervals[v][0] for v in self._vars}
            return values if self._full_eval(values) else None
        name = self._vars[idx]
        lo, hi = intervals[name]
        for val in range(lo, hi + 1):
            self.nodes_visited += 1
            if self.nodes_visited > self.node_budget:
                raise ResourceBudgetExceeded(
                    f"constraint search exceeded {self.node_budget} nodes"
                )
            trial = dict(intervals)
            trial[name] = (val, val)
            if not self._propagate(trial):
                continue
            found = self._search(idx + 1, trial)
            if found is not None:
                return found
        return None

    # Bounds propagation: tighten intervals until a fixpoint or a conflict.
    def _propagate(self, intervals: dict[str, tuple[int, int]]) -> bool:
        for _ in range(len(self._lits) * 4 + 8):
            changed = False
            for lit in self._lits:
                res = self._tighten(lit, intervals)
                if res is False:
                    return False
                changed = changed or bool(res)
            if not changed:
                return True
        return True  # fixpoint not reached within the cap; search still decides

    def _tighten(self, lit: Literal, intervals) -> bool | None:
        if isinstance(lit, AuxDef):
            return self._tighten_aux(lit, intervals)
        if lit.modulus is not None:
            return self._check_modular(lit, intervals)
        return self._tighten_affine(lit, intervals)

    def _tighten_affine(self, lit: AffineCmp, intervals) -> bool | None:
        los = his = 0
        for c, v in lit.terms:
            lo, hi = intervals[v]
            los += c * lo if c > 0 else c * hi
            his += c * hi if c > 0 else c * lo
        op, C = lit.op, lit.const
        if op == "!=":
            if los == his and los == C:
                return False
            return None
        if op in ("<", "<="):
            bound = C - 1 if op == "<" else C
            if los > bound:
                return False
            return self._bound_terms(lit, intervals, upper=bound)
        if op in (">", ">="):
            bound = C + 1 if op == ">" else C
            if his < bound:
                return False
            return self._bound_terms(lit, intervals, lower=bound)
        # equality: conjunction of both inequalities
        if los > C or his < C:
            return False
        a = self._bound_terms(lit, intervals, upper=C)
        if a is False:
            return False
        b = self._bound_terms(lit, intervals, lower=C)
        if b is False:
            return False
        return True if (a or b) else None

    def _bound_terms(self, lit: AffineCmp, intervals, upper=None, lower=None):
        """Project the linear bound onto each variable in turn.

        Returns True if an interval tightened, None if nothing changed,
        False on an emptied interval.
        """
        changed = None
        for c, v in lit.terms:
            rest_lo = rest_hi = 0
            for c2, v2 in lit.terms:
                if v2 == v:
                    continue
                lo2, hi2 = intervals[v2]
                rest_lo += c2 * lo2 if c2 > 0 else c2 * hi2
                rest_hi += c2 * hi2 if c2 > 0 else c2 * lo2
            lo, hi = intervals[v]
            if upper is not None:
                # c*v <= upper - rest_lo
                room = upper - rest_lo
                if c > 0:
                    new_hi = math.floor(room / c)
                    if new_hi < hi:
                        hi = new_hi
                        changed = True
                else:
                    new_lo = math.ceil(room / c)
                    if new_lo > lo:
                        lo = new_lo
                        changed = True
            if lower is not None:
                room = lower - rest_hi
                if c > 0:
                    new_lo = math.ceil(room / c)
                    if new_lo > lo:
                        lo = new_lo
                        changed = True
                else:
                    new_hi = math.floor(room / c)
                    if new_hi < hi:
                        hi = new_hi
                        changed = True
            if lo > hi:
                return False
            intervals[v] = (lo, hi)
        return changed

    def _check_modular(self, lit: AffineCmp, intervals) -> bool | None:
        total = lit.const
        acc = 0
        for c, v in lit.terms:
            lo, hi = intervals[v]
            if lo != hi:
                return None  # undecided until every variable is fixed
            acc += c * lo
        ok = (acc - total) % lit.modulus == 0
        return None if (ok if lit.op == "==" else not ok) else False

    def _tighten_aux(self, lit: AuxDef, intervals) -> bool | None:
        def val(o: Operand) -> tuple[int, int]:
            return (o, o) if isinstance(o, int) else intervals[o]

        rlo, rhi = intervals[lit.result]
        if lit.op == "select":
            ilo, ihi = val(lit.operands[0])
            table = lit.operands[1:]
            if ilo == ihi:
                if not (0 <= ilo < len(table)):
                    return False
                tlo, thi = val(table[ilo])
                return self._force(lit.result, tlo, thi, intervals)
            if ihi < 0 or ilo >= len(table):
                return False
            return None
        (alo, ahi), (blo, bhi) = val(lit.operands[0]), val(lit.operands[1])
        if alo == ahi and blo == bhi:
            if lit.op == "mul":
                r = alo * blo
            else:
                r = alo // blo if blo != 0 else 0
            if r < rlo or r > rhi:
                return False
            return self._force(lit.result, r, r, intervals)
        if lit.op == "mul":
            prods = [alo * blo, alo * bhi, ahi * blo, ahi * bhi]
            return self._force(
                lit.result, max(rlo, min(prods)), min(rhi, max(prods)), intervals
            )
        return None

    def _force(self, name: str, lo: int, hi: int, intervals) -> bool | None:
        cur_lo, cur_hi = intervals[name]
        new = (max(cur_lo, lo), min(cur_hi, hi))
        if new[0] > new[1]:
            return False
        if new != (cur_lo, cur_hi):
            intervals[name] = new
            return True
        return None

    def _full_eval(self, values: dict[str, int]) -> bool:
        """Ground truth on a complete assignment; the search defers to this."""
        for lit in self._lits:
            if not eval_literal(lit, values):
                return False
        return True


def eval_literal(lit: Literal, values: dict[str, int]) -> bool:
    """Evaluate one literal under a complete assignment."""
    if isinstance(lit, AuxDef):
        def val(o: Operand) -> int:
            return o if isinstance(o, int) else values[o]

        if lit.op == "select":
            idx = val(lit.operands[0])
            table = lit.operands[1:]
            if not (0 <= idx < len(table)):
                return False
            return values[lit.result] == val(table[idx])
        a, b = val(lit.operands[0]), val(lit.operands[1])
        if lit.op == "mul":
            return values[lit.result] == a * b
        return values[lit.result] == (a // b if b != 0 else 0)
    acc = sum(c * values[v] for c, v in lit.terms)
    if lit.modulus is not None:
        hit = (acc - lit.const) % lit.modulus == 0
        return hit if lit.op == "==" else not hit
    match lit.op:
        case "==":
            return acc == lit.const
        case "!=":
            return acc != lit.const
        case "<":
            return acc < lit.const
        case "<=":
            return acc <= lit.const
        case ">":
            return acc > lit.const
        case ">=":
            return acc >= lit.const
    raise AssertionError(lit.op)
