"""Parametric affine kernels: loop-nest model and built-in kernel definitions.

A kernel is a nest of ``Loop`` and ``Statement`` nodes.  Statements carry one
write access and a list of read accesses with affine subscripts; iteration
domains and the sequential program order are derived from the nest.  Scalar
temporaries of the original codes are expanded to arrays indexed by the loops
that version them (e.g. the MGS accumulator becomes ``nrm[k]``) so that flow
dependencies are exact without any dataflow approximation.

Built-in kernels:

* ``mgs``      -- right-looking modified Gram-Schmidt QR of an MxN matrix.
* ``hh_a2v``   -- Householder QR, reflector computation (A -> V), MxN.
* ``hh_v2q``   -- Householder QR, Q accumulation (V -> Q), MxN.  The original
  loop runs over reflectors in decreasing order; we model it with an
  increasing counter ``k`` standing for the k-th processed reflector, i.e.
  column ``N-1-k``.  The CDAG is identical.
* ``gehd2``    -- Hessenberg reduction of an NxN matrix.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import sympy as sp

from .affine import AffineExpr, Parameter, aff


@dataclass(frozen=True)
class ArrayAccess:
    array: str
    subscripts: tuple[AffineExpr, ...]

    def element(self, env: dict[str, int]) -> tuple:
        return (self.array,) + tuple(s.evaluate(env) for s in self.subscripts)

    def index_symbols(self, indices: frozenset[str]) -> frozenset[str]:
        """Loop indices appearing in the subscripts."""
        out = frozenset()
        for s in self.subscripts:
            out |= s.symbols()
        return out & indices

    def __str__(self) -> str:
        return self.array + "".join(f"[{s}]" for s in self.subscripts)


def acc(array: str, *subs) -> ArrayAccess:
    return ArrayAccess(array, tuple(aff(s) for s in subs))


@dataclass(frozen=True)
class Statement:
    """One assignment statement; ``writes`` is its single target access."""

    label: str
    writes: ArrayAccess
    reads: tuple[ArrayAccess, ...] = ()


@dataclass(frozen=True)
class Loop:
    """for (index = lower; index < upper; index++) { body... }"""

    index: str
    lower: AffineExpr
    upper: AffineExpr
    body: tuple


def loop(index: str, lower, upper, *body) -> Loop:
    return Loop(index, aff(lower), aff(upper), tuple(body))


@dataclass(frozen=True)
class IterationDomain:
    """Ordered loop indices with per-index half-open affine bounds.

    The bounds of index d may reference indices 0..d-1 and parameters only;
    for every parameter binding the domain is a finite set of integer points.
    """

    indices: tuple[str, ...]
    bounds: tuple[tuple[AffineExpr, AffineExpr], ...]

    def enumerate(self, binding: dict[str, int]) -> list[tuple[int, ...]]:
        """All integer points, in lexicographic order."""
        points: list[tuple[int, ...]] = []
        env = dict(binding)

        def rec(d: int, prefix: tuple[int, ...]):
            if d == len(self.indices):
                points.append(prefix)
                return
            lo, up = self.bounds[d]
            for v in range(lo.evaluate(env), up.evaluate(env)):
                env[self.indices[d]] = v
                rec(d + 1, prefix + (v,))
            env.pop(self.indices[d], None)

        rec(0, ())
        return points

    def cardinality(self, binding: dict[str, int]) -> int:
        return len(self.enumerate(binding))

    def contains(self, point, binding: dict[str, int]) -> bool:
        env = dict(binding)
        for name, value, (lo, up) in zip(self.indices, point, self.bounds):
            if not (lo.evaluate(env) <= value < up.evaluate(env)):
                return False
            env[name] = value
        return True

    def symbolic_cardinality(self) -> sp.Expr:
        """Exact closed-form point count (polynomial in the parameters)."""
        expr: sp.Expr = sp.Integer(1)
        for name, (lo, up) in reversed(list(zip(self.indices, self.bounds))):
            idx = sp.Symbol(name, integer=True)
            expr = sp.summation(expr, (idx, _to_sympy(lo), _to_sympy(up) - 1))
        return sp.expand(expr)


def _to_sympy(e: AffineExpr) -> sp.Expr:
    out: sp.Expr = sp.Integer(e.const)
    for name, coeff in e.terms:
        out += coeff * sp.Symbol(name, integer=True)
    return out


class AffineKernel:
    """A named loop nest with parameters, statements, and output arrays.

    Immutable after construction; safe to share across threads.
    """

    def __init__(self, name: str, parameters: tuple[Parameter, ...], body: tuple,
                 outputs: frozenset[str], split_param: str | None = None):
        self.name = name
        self.parameters = parameters
        self.body = body
        self.outputs = frozenset(outputs)
        self.split_param = split_param  # set on loop-split fragments
        self._stmts: dict[str, Statement] = {}
        self._domains: dict[str, IterationDomain] = {}
        self._order: list[str] = []
        self._collect(body, (), ())
        pnames = [p.name for p in parameters]
        if len(set(pnames)) != len(pnames):
            raise ValueError("parameter names must be unique")

    def _collect(self, body, indices, bounds):
        for node in body:
            if isinstance(node, Loop):
                self._collect(node.body, indices + (node.index,),
                              bounds + ((node.lower, node.upper),))
            else:
                if node.label in self._stmts:
                    raise ValueError(f"duplicate statement label {node.label!r}")
                self._stmts[node.label] = node
                self._domains[node.label] = IterationDomain(indices, bounds)
                self._order.append(node.label)

    # -- introspection ----------------------------------------------------

    @property
    def statements(self) -> list[Statement]:
        """Statements in program (textual) order."""
        return [self._stmts[lbl] for lbl in self._order]

    def statement(self, label: str) -> Statement:
        try:
            return self._stmts[label]
        except KeyError:
            raise KeyError(f"kernel {self.name!r} has no statement {label!r}") from None

    def domain(self, label: str) -> IterationDomain:
        self.statement(label)
        return self._domains[label]

    def parameter_names(self) -> list[str]:
        return [p.name for p in self.parameters]

    def statement_count(self, label: str) -> sp.Expr:
        """Symbolic instance count of one statement."""
        return self.domain(label).symbolic_cardinality()

    # -- execution order --------------------------------------------------

    def walk(self, binding: dict[str, int]):
        """Yield (statement, iteration-vector) in sequential program order."""
        env = dict(binding)

        def rec(body):
            for node in body:
                if isinstance(node, Loop):
                    lo = node.lower.evaluate(env)
                    up = node.upper.evaluate(env)
                    for v in range(lo, up):
                        env[node.index] = v
                        yield from rec(node.body)
                    env.pop(node.index, None)
                else:
                    vec = tuple(env[i] for i in self._domains[node.label].indices)
                    yield node, vec

        yield from rec(self.body)

    def instance_total(self, binding: dict[str, int]) -> int:
        return sum(self.domain(lbl).cardinality(binding) for lbl in self._order)


def enumerate_instances(kernel: AffineKernel, stmt: str,
                        binding: dict[str, int]) -> list[tuple[int, ...]]:
    """Lexicographic enumeration of a statement's domain at a binding."""
    for p in kernel.parameters:
        if p.role == "problem-size" and binding.get(p.name, 0) <= 0:
            raise ValueError(f"parameter {p.name} must be bound to a positive integer")
    return kernel.domain(stmt).enumerate(binding)


# ---------------------------------------------------------------------------
# Built-in kernels
# ---------------------------------------------------------------------------

def _p(name: str) -> Parameter:
    return Parameter(name, "problem-size")


k = "k"
j = "j"
i = "i"


def _mgs() -> AffineKernel:
    N, M = aff("N"), aff("M")
    body = (
        loop(k, 0, N,
             Statement("nrm0", acc("nrm", k)),
             loop(i, 0, M,
                  Statement("nrma", acc("nrm", k),
                            (acc("nrm", k), acc("A", i, k)))),
             Statement("sqrt", acc("R", k, k), (acc("nrm", k),)),
             loop(i, 0, M,
                  Statement("div", acc("Q", i, k),
                            (acc("A", i, k), acc("R", k, k)))),
             loop(j, aff(k) + 1, N,
                  Statement("r0", acc("R", k, j)),
                  loop(i, 0, M,
                       Statement("SR", acc("R", k, j),
                                 (acc("R", k, j), acc("Q", i, k), acc("A", i, j)))),
                  loop(i, 0, M,
                       Statement("SU", acc("A", i, j),
                                 (acc("A", i, j), acc("Q", i, k), acc("R", k, j)))))),
    )
    return AffineKernel("mgs", (_p("M"), _p("N")), body, frozenset({"Q", "R"}))


def _hh_a2v() -> AffineKernel:
    N, M = aff("N"), aff("M")
    kp1 = aff(k) + 1
    body = (
        loop(k, 0, N,
             Statement("n20", acc("norma2", k)),
             loop(i, kp1, M,
                  Statement("n2a", acc("norma2", k),
                            (acc("norma2", k), acc("A", i, k)))),
             Statement("nrm", acc("norma", k), (acc("A", k, k), acc("norma2", k))),
             Statement("piv1", acc("A", k, k), (acc("A", k, k), acc("norma", k))),
             Statement("tauk", acc("tau", k, k), (acc("norma2", k), acc("A", k, k))),
             loop(i, kp1, M,
                  Statement("scal", acc("A", i, k), (acc("A", i, k), acc("A", k, k)))),
             Statement("piv2", acc("A", k, k), (acc("A", k, k), acc("norma", k))),
             loop(j, kp1, N,
                  Statement("t0", acc("tau", k, j), (acc("A", k, j),)),
                  loop(i, kp1, M,
                       Statement("SR", acc("tau", k, j),
                                 (acc("tau", k, j), acc("A", i, k), acc("A", i, j)))),
                  Statement("tscl", acc("tau", k, j), (acc("tau", k, k), acc("tau", k, j))),
                  Statement("akj", acc("A", k, j), (acc("A", k, j), acc("tau", k, j))),
                  loop(i, kp1, M,
                       Statement("SU", acc("A", i, j),
                                 (acc("A", i, j), acc("A", i, k), acc("tau", k, j)))))),
    )
    return AffineKernel("hh_a2v", (_p("M"), _p("N")), body, frozenset({"A", "tau"}))


def _hh_v2q() -> AffineKernel:
    # k counts processed reflectors; the reflector column is c = N-1-k.
    N, M = aff("N"), aff("M")
    c = aff("N") - 1 - aff(k)          # original column index
    start = aff("N") - aff(k)          # = c + 1
    body = (
        loop(k, 0, N,
             loop(j, start, N,
                  Statement("t0", acc("tauv", k, j)),
                  loop(i, start, M,
                       Statement("SR", acc("tauv", k, j),
                                 (acc("tauv", k, j), ArrayAccess("A", (aff(i), c)),
                                  acc("A", i, j))))),
             loop(j, start, N,
                  Statement("ST", acc("tauv", k, j),
                            (acc("tauv", k, j), ArrayAccess("tau", (c,))))),
             Statement("akk", ArrayAccess("A", (c, c)), (ArrayAccess("tau", (c,)),)),
             loop(j, start, N,
                  Statement("akj", ArrayAccess("A", (c, aff(j))), (acc("tauv", k, j),))),
             loop(j, start, N,
                  loop(i, start, M,
                       Statement("SU", acc("A", i, j),
                                 (acc("A", i, j), ArrayAccess("A", (aff(i), c)),
                                  acc("tauv", k, j))))),
             loop(i, start, M,
                  Statement("scal", ArrayAccess("A", (aff(i), c)),
                            (ArrayAccess("A", (aff(i), c)), ArrayAccess("tau", (c,)))))),
    )
    return AffineKernel("hh_v2q", (_p("M"), _p("N")), body, frozenset({"A"}))


def _gehd2() -> AffineKernel:
    N = aff("N")
    jp1, jp2 = aff(j) + 1, aff(j) + 2
    body = (
        loop(j, 0, N - 2,
             Statement("n20", acc("norma2", j)),
             loop(i, jp2, N,
                  Statement("n2a", acc("norma2", j),
                            (acc("norma2", j), acc("A", i, j)))),
             Statement("nrm", acc("norma", j), (acc("A", jp1, j), acc("norma2", j))),
             Statement("piv1", acc("A", jp1, j), (acc("A", jp1, j), acc("norma", j))),
             Statement("tauj", acc("tau", j), (acc("norma2", j), acc("A", jp1, j))),
             loop(i, jp2, N,
                  Statement("scal", acc("A", i, j), (acc("A", i, j), acc("A", jp1, j)))),
             Statement("piv2", acc("A", jp1, j), (acc("A", jp1, j), acc("norma", j))),
             # apply reflector from the left to rows j+1.. (row sweep)
             loop(i, jp1, N,
                  Statement("rt0", acc("tmp", j, i), (acc("A", jp1, i),)),
                  loop(k, jp2, N,
                       Statement("rta", acc("tmp", j, i),
                                 (acc("tmp", j, i), acc("A", k, j), acc("A", k, i))))),
             loop(i, jp1, N,
                  Statement("rtt", acc("tmp", j, i), (acc("tmp", j, i), acc("tau", j)))),
             loop(i, jp1, N,
                  Statement("rowu", acc("A", jp1, i), (acc("A", jp1, i), acc("tmp", j, i)))),
             loop(i, jp2, N,
                  loop(k, jp1, N,
                       Statement("SUL", acc("A", i, k),
                                 (acc("A", i, k), acc("A", i, j), acc("tmp", j, k))))),
             # apply reflector from the right to all rows (column sweep)
             loop(i, 0, N,
                  Statement("ct0", acc("tmp", j, i), (acc("A", i, jp1),)),
                  loop(k, jp2, N,
                       Statement("cta", acc("tmp", j, i),
                                 (acc("tmp", j, i), acc("A", i, k), acc("A", k, j))))),
             loop(i, 0, N,
                  Statement("ctt", acc("tmp", j, i), (acc("tmp", j, i), acc("tau", j)))),
             loop(i, 0, N,
                  Statement("colu", acc("A", i, jp1), (acc("A", i, jp1), acc("tmp", j, i)))),
             loop(i, 0, N,
                  loop(k, jp2, N,
                       Statement("SUR", acc("A", i, k),
                                 (acc("A", i, k), acc("tmp", j, i), acc("A", k, j)))))),
    )
    return AffineKernel("gehd2", (_p("N"),), body, frozenset({"A", "tau"}))


_BUILTINS = {"mgs": _mgs, "hh_a2v": _hh_a2v, "hh_v2q": _hh_v2q, "gehd2": _gehd2}

KERNEL_IDS = tuple(sorted(_BUILTINS))


@lru_cache(maxsize=None)
def builtin_kernel(name: str) -> AffineKernel:
    """Construct one of the built-in kernels by id."""
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown kernel-id {name!r}; available: {sorted(_BUILTINS)}") from None
