"""Brute-force reference for the constraint store.

Deliberately structure-free: walk the full cartesian product of the
declared domains in lexicographic order and report the first assignment
satisfying every literal. Slow, obviously correct, and sharing no solving
or evaluation code with the store, which is the point: literal semantics
are re-stated here from scratch so a mistake in the store's evaluator
cannot hide.
"""

import itertools
import operator

from minisol.solver import AffineCmp, AuxDef, Model, SAT, UNSAT

_OPS = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}


def _holds(lit, values):
    if isinstance(lit, AuxDef):
        ops = [o if isinstance(o, int) else values[o] for o in lit.operands]
        if lit.op == "mul":
            want = ops[0] * ops[1]
        elif lit.op == "div":
            want = ops[0] // ops[1] if ops[1] != 0 else 0
        elif lit.op == "select":
            table = ops[1:]
            if not (0 <= ops[0] < len(table)):
                return False
            want = table[ops[0]]
        else:
            raise AssertionError(lit.op)
        return values[lit.result] == want
    if isinstance(lit, AffineCmp):
        total = sum(c * values[v] for c, v in lit.terms)
        if lit.modulus is None:
            return _OPS[lit.op](total, lit.const)
        same = (total % lit.modulus) == (lit.const % lit.modulus)
        return same if lit.op == "==" else not same
    raise AssertionError(type(lit))


def naive_check(variables, literals):
    """variables: ordered list of (name, lo, hi); literals: solver literals."""
    names = [name for name, _, _ in variables]
    domains = [range(lo, hi + 1) for _, lo, hi in variables]
    for combo in itertools.product(*domains):
        values = dict(zip(names, combo))
        if all(_holds(lit, values) for lit in literals):
            return SAT(Model(values=values, order=tuple(names)))
    return UNSAT()
