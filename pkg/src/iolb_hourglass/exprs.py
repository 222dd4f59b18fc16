"""Exact symbolic bound expressions.

Bounds are rational expressions in the program parameters (M, N, S, K, B, ...)
with exact rational coefficients.  We represent them directly as sympy
expressions and keep all arithmetic exact: evaluation substitutes integers and
never touches floating point.  Fractional powers (K**(3/2) from classical
Brascamp-Lieb sums) and floor() are supported because sympy evaluates them as
exact algebraic numbers.
"""

from __future__ import annotations

from fractions import Fraction

import sympy as sp

# Canonical parameter symbols, shared across the package so that expressions
# built in different modules compare equal.
M, N, S, K, B, W = sp.symbols("M N S K B W", positive=True, integer=True)

_SYMBOLS = {"M": M, "N": N, "S": S, "K": K, "B": B, "W": W}


class EvaluationError(ValueError):
    """Raised when a bound cannot be evaluated at a binding."""


def sym(name: str) -> sp.Symbol:
    """Return the canonical symbol for ``name`` (creating it if unknown)."""
    if name not in _SYMBOLS:
        _SYMBOLS[name] = sp.Symbol(name, positive=True, integer=True)
    return _SYMBOLS[name]


def rational(p, q=1) -> sp.Rational:
    return sp.Rational(p, q)


def normalize(expr: sp.Expr) -> sp.Expr:
    """Canonical form: single fraction with expanded, coprime numerator and
    denominator.  Syntactic equality of normalized forms decides equality of
    rational expressions."""
    return sp.cancel(sp.together(sp.expand(expr)))


def equal(a: sp.Expr, b: sp.Expr) -> bool:
    """Exact equality of two rational expressions."""
    return sp.cancel(sp.expand(a - b)) == 0


def evaluate(expr: sp.Expr, binding: dict) -> Fraction:
    """Evaluate ``expr`` exactly at a positive-integer binding.

    Returns a Fraction.  Raises EvaluationError on division by zero (the
    message names the offending subexpression) or if the value is irrational
    (fractional powers that do not resolve to a rational).
    """
    subs = {sym(k): sp.Integer(v) for k, v in binding.items()}
    free = expr.free_symbols - set(subs)
    if free:
        raise EvaluationError(f"unbound symbols: {sorted(map(str, free))}")
    # Check denominators before substituting so we can point at the culprit.
    for node in sp.preorder_traversal(expr):
        if isinstance(node, sp.Pow) and node.exp.is_negative:
            den = node.base.subs(subs)
            if den == 0:
                raise EvaluationError(f"division by zero in {sp.sstr(node.base)}")
    val = expr.subs(subs)
    val = sp.nsimplify(val)
    if val.has(sp.zoo) or val.has(sp.nan):
        raise EvaluationError(f"undefined value when evaluating {sp.sstr(expr)}")
    val = sp.simplify(val)
    if not val.is_rational:
        raise EvaluationError(f"irrational value {sp.sstr(val)}; use compare() instead")
    r = sp.Rational(val)
    return Fraction(int(r.p), int(r.q))


def evaluate_float(expr: sp.Expr, binding: dict) -> float:
    """Float approximation of ``expr`` at a binding (display only)."""
    subs = {sym(k): sp.Integer(v) for k, v in binding.items()}
    return float(expr.subs(subs))


def compare(a: sp.Expr, b: sp.Expr, binding: dict) -> int:
    """Exact three-way comparison of two expressions at a binding.

    Works for algebraic values (e.g. one side contains sqrt(S)); sympy decides
    the sign exactly.  Returns -1, 0 or 1.
    """
    subs = {sym(k): sp.Integer(v) for k, v in binding.items()}
    diff = sp.simplify(a.subs(subs) - b.subs(subs))
    if diff == 0:
        return 0
    return 1 if diff.is_positive else -1


def dominant_fraction(expr: sp.Expr) -> sp.Expr:
    """Dominant fractional term of a bound expression.

    The expression is normalized into a single fraction p/q; the result is
    (top total-degree part of p) / q.  Lower-order additive tails (and the
    lower-order terms they contribute to p) are discarded, which is the
    comparison the bound catalog regression uses.
    """
    norm = normalize(expr)
    num, den = sp.fraction(norm)
    num = sp.expand(num)
    params = sorted(num.free_symbols, key=str)
    if not params:
        return norm
    poly = sp.Poly(num, *params)
    top = max(sum(mon) for mon in poly.monoms())
    kept = [
        coeff * sp.prod(p**e for p, e in zip(params, mon))
        for mon, coeff in zip(poly.monoms(), poly.coeffs())
        if sum(mon) == top
    ]
    return sp.cancel(sp.Add(*kept) / den)


def same_dominant_fraction(a: sp.Expr, b: sp.Expr) -> bool:
    return equal(dominant_fraction(a), dominant_fraction(b))


def floor_div(num: sp.Expr, den: sp.Expr) -> sp.Expr:
    """floor(num/den) as an expression (den may involve fractional powers)."""
    return sp.floor(num / den)


def to_str(expr: sp.Expr) -> str:
    """Stable normalized string form for reports and JSON output."""
    return sp.sstr(normalize(expr))


def as_num_den(value: Fraction) -> tuple[int, int]:
    return value.numerator, value.denominator
