"""Affine expressions over loop indices and program parameters."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class AffineExpr:
    """constant + sum(coeff * symbol); symbols are loop indices or parameters.

    Evaluation at an integer assignment yields an integer.  Addition and
    negation are closed; equality is coefficient-wise (dataclass equality on
    the normalized term tuple).
    """

    const: int = 0
    terms: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        # normalize: merge duplicates, drop zero coefficients, sort by symbol
        acc: dict[str, int] = {}
        for name, coeff in self.terms:
            acc[name] = acc.get(name, 0) + coeff
        norm = tuple(sorted((n, c) for n, c in acc.items() if c != 0))
        object.__setattr__(self, "terms", norm)

    @staticmethod
    def const_(value: int) -> "AffineExpr":
        return AffineExpr(const=value)

    @staticmethod
    def var(name: str, coeff: int = 1, const: int = 0) -> "AffineExpr":
        return AffineExpr(const=const, terms=((name, coeff),))

    def __add__(self, other) -> "AffineExpr":
        other = _coerce(other)
        return AffineExpr(self.const + other.const, self.terms + other.terms)

    def __sub__(self, other) -> "AffineExpr":
        return self + (-_coerce(other))

    def __neg__(self) -> "AffineExpr":
        return AffineExpr(-self.const, tuple((n, -c) for n, c in self.terms))

    def __rsub__(self, other) -> "AffineExpr":
        return _coerce(other) + (-self)

    __radd__ = __add__

    def scaled(self, factor: int) -> "AffineExpr":
        return AffineExpr(self.const * factor, tuple((n, c * factor) for n, c in self.terms))

    def evaluate(self, env: dict[str, int]) -> int:
        val = self.const
        for name, coeff in self.terms:
            val += coeff * env[name]
        return val

    def symbols(self) -> frozenset[str]:
        return frozenset(n for n, _ in self.terms)

    def __str__(self) -> str:
        parts = [str(self.const)] if self.const or not self.terms else []
        for name, coeff in self.terms:
            if coeff == 1:
                parts.append(name)
            elif coeff == -1:
                parts.append(f"-{name}")
            else:
                parts.append(f"{coeff}*{name}")
        return " + ".join(parts).replace("+ -", "- ")


def _coerce(x) -> AffineExpr:
    if isinstance(x, AffineExpr):
        return x
    if isinstance(x, int):
        return AffineExpr(const=x)
    raise TypeError(f"cannot coerce {x!r} to AffineExpr")


def aff(x) -> AffineExpr:
    """Shorthand: build an AffineExpr from an int, symbol name, or pass through."""
    if isinstance(x, str):
        return AffineExpr.var(x)
    return _coerce(x)


@dataclass(frozen=True)
class Parameter:
    """A program parameter such as a matrix dimension or the cache size."""

    name: str
    role: str = "problem-size"  # problem-size | cache-size | block-size

    def __post_init__(self):
        if self.role not in ("problem-size", "cache-size", "block-size"):
            raise ValueError(f"unknown parameter role {self.role!r}")
