"""Hourglass pattern detection.

A statement exhibits the hourglass pattern when its dimensions split into
temporal / reduction-broadcast / neutral groups such that, for every pair of
broadcast values b, b', a dependency chain connects SX[t, nu, b] to
SX[t+1, nu, b'].  Verification runs on concrete CDAGs at several small
bindings; the width expressions are recovered by exact affine fitting over
the measurements and confirmed on a held-out binding.

Width fields of a report:

* ``width_per_step``  -- number of statement instances at one (temporal,
  neutral) point, i.e. the length of the reduction/broadcast line.  This is
  the quantity the bound derivation divides K by.
* ``chain_width``     -- number of nodes with temporal coordinate strictly
  between two steps t and t+2 lying on dependency chains from the layer at t
  to the layer at t+2 (all cycle statements counted).
* ``width``           -- the headline width: ``chain_width`` when it is
  uniform along the temporal dimension, otherwise ``width_per_step``.
* ``width_min``       -- minimum of ``width`` over the temporal range.

For MGS this yields width 2M; for the Householder kernels width M-1-k with
minimum M-N; a constant ``line_width_min`` (e.g. Hessenberg reduction, where
it degrades to 1) signals that the loop-splitting path must be taken.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import sympy as sp

from .affine import AffineExpr, Parameter
from .cdag import Cdag, instantiate
from .kernels import AffineKernel, Loop, Statement, _to_sympy


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class HourglassReport:
    statement: str
    temporal: tuple[str, ...]
    broadcast: tuple[str, ...]
    neutral: tuple[str, ...]
    width: sp.Expr
    width_per_step: sp.Expr
    chain_width: sp.Expr | None
    width_min: sp.Expr
    line_width_min: sp.Expr

    @property
    def needs_split(self) -> bool:
        """Constant line width: the hourglass bound needs a loop split first."""
        return self.line_width_min.free_symbols == set()

    def to_json(self) -> dict:
        from . import exprs
        return {
            "statement": self.statement,
            "temporal": list(self.temporal),
            "broadcast": list(self.broadcast),
            "neutral": list(self.neutral),
            "width": exprs.to_str(self.width),
            "width_min": exprs.to_str(self.width_min),
            "width_per_step": exprs.to_str(self.width_per_step),
            "line_width_min": exprs.to_str(self.line_width_min),
            "needs_split": self.needs_split,
        }


# -- verification bindings ---------------------------------------------------

# The (10,4) binding breaks the N = (M+1)/2 collinearity of the first three,
# which would otherwise make e.g. M-N and (M-1)/2 indistinguishable to the fit.
_MN_BINDINGS = [{"M": 7, "N": 4}, {"M": 9, "N": 5}, {"M": 11, "N": 6}, {"M": 10, "N": 4}]
_MN_HELD_OUT = {"M": 13, "N": 7}
_N_BINDINGS = [{"N": 7}, {"N": 9}, {"N": 11}]
_N_HELD_OUT = {"N": 13}


def default_bindings(kernel: AffineKernel):
    """(verification bindings, held-out binding) for the kernel's parameters."""
    names = set(kernel.parameter_names())
    if kernel.split_param is not None:
        s = kernel.split_param
        base = names - {s}
        if base == {"N"}:
            # split fragment of an NxN kernel: vary N and the split point
            # independently so the fit can separate their coefficients
            return ([{"N": 9, s: 3}, {"N": 11, s: 3}, {"N": 11, s: 4}],
                    {"N": 13, s: 5})
        raise ValueError(f"no default verification bindings for split kernel over {sorted(base)}")
    if names == {"M", "N"}:
        return _MN_BINDINGS, _MN_HELD_OUT
    if names == {"N"}:
        return _N_BINDINGS, _N_HELD_OUT
    raise ValueError(f"no default verification bindings for parameters {sorted(names)}; "
                     "pass bindings explicitly")


# -- exact affine fitting -----------------------------------------------------

def _fit_affine(samples, var_names):
    """Fit value = c0 + sum(c_v * v) exactly; None if inconsistent/ambiguous.

    samples: list of (dict var->int, value).
    """
    cols = ["1"] + list(var_names)
    rows = []
    for env, val in samples:
        rows.append(([Fraction(1)] + [Fraction(env[v]) for v in var_names], Fraction(val)))
    # Gaussian elimination on the (overdetermined) augmented system
    m = len(cols)
    aug = [r[0] + [r[1]] for r in rows]
    pivots = []
    rank = 0
    for col in range(m):
        piv = next((r for r in range(rank, len(aug)) if aug[r][col] != 0), None)
        if piv is None:
            continue
        aug[rank], aug[piv] = aug[piv], aug[rank]
        inv = aug[rank][col]
        aug[rank] = [x / inv for x in aug[rank]]
        for r in range(len(aug)):
            if r != rank and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[rank])]
        pivots.append(col)
        rank += 1
        if rank == m:
            break
    for r in range(rank, len(aug)):
        if all(x == 0 for x in aug[r][:m]) and aug[r][m] != 0:
            return None  # inconsistent
    if rank < m:
        return None  # ambiguous: samples do not pin every coefficient
    sol = {cols[c]: aug[c][m] for c in range(m)}
    for env, val in samples:
        pred = sol["1"] + sum(sol[v] * env[v] for v in var_names)
        if pred != val:
            return None
    expr = sp.Rational(sol["1"])
    for v in var_names:
        if sol[v]:
            expr += sp.Rational(sol[v]) * sp.Symbol(v, integer=True)
    return sp.expand(expr)


# -- concrete layer structure -------------------------------------------------

class _Layers:
    """Statement instances grouped by (temporal, neutral) coordinates."""

    def __init__(self, cdag: Cdag, stmt: str, t_pos, n_pos, b_pos):
        self.by_tn: dict[tuple, dict[tuple, list[int]]] = {}
        self.t_values: list[tuple] = []
        seen_t = set()
        for u in cdag.instances_of(stmt):
            vec = cdag.vectors[u]
            t = tuple(vec[p] for p in t_pos)
            nu = tuple(vec[p] for p in n_pos)
            self.by_tn.setdefault(t, {}).setdefault(nu, []).append(u)
            if t not in seen_t:
                seen_t.add(t)
                self.t_values.append(t)
        self.t_values.sort()


def _positions(indices, dims):
    return tuple(indices.index(d) for d in dims)


def _chain_ok(cdag: Cdag, sources_targets, rng, max_pairs=20) -> bool:
    """Every sampled (source, target) pair must be connected by a path."""
    for nodes_a, nodes_b in sources_targets:
        pairs = set()
        pairs.add((nodes_a[0], nodes_b[0]))
        pairs.add((nodes_a[0], nodes_b[-1]))
        pairs.add((nodes_a[-1], nodes_b[0]))
        pairs.add((nodes_a[-1], nodes_b[-1]))
        while len(pairs) < min(max_pairs, len(nodes_a) * len(nodes_b)):
            pairs.add((rng.choice(nodes_a), rng.choice(nodes_b)))
        by_source: dict[int, set[int]] = {}
        for a, b in pairs:
            by_source.setdefault(a, set()).add(b)
        for a, targets in by_source.items():
            todo = set(targets) - {a}
            seen = {a}
            stack = [a]
            while stack and todo:
                u = stack.pop()
                for v in cdag.succs[u]:
                    if v not in seen:
                        seen.add(v)
                        todo.discard(v)
                        stack.append(v)
            if todo:
                return False
    return True


def _sample_neutrals(groups: dict, rng, limit=2):
    """Pick up to ``limit`` generic neutral values (prefer the largest, which
    avoids boundary interactions with pivot columns)."""
    nus = sorted(groups)
    if len(nus) <= limit:
        return nus
    picked = [nus[-1]]
    while len(picked) < limit:
        cand = rng.choice(nus)
        if cand not in picked:
            picked.append(cand)
    return picked


def _verify_candidate(cdag: Cdag, stmt: str, indices, temporal, broadcast, neutral,
                      rng) -> bool:
    t_pos = _positions(indices, temporal)
    n_pos = _positions(indices, neutral)
    b_pos = _positions(indices, broadcast)
    layers = _Layers(cdag, stmt, t_pos, n_pos, b_pos)
    if len(layers.t_values) < 2:
        return False
    t_pairs = list(zip(layers.t_values, layers.t_values[1:]))
    if len(t_pairs) > 3:
        t_pairs = [t_pairs[0], t_pairs[len(t_pairs) // 2], t_pairs[-1]]
    checks = []
    any_pair = False
    for t, t1 in t_pairs:
        common = set(layers.by_tn[t]) & set(layers.by_tn[t1])
        if not common:
            continue
        for nu in _sample_neutrals({n: None for n in common}, rng):
            a = sorted(layers.by_tn[t][nu])
            b = sorted(layers.by_tn[t1][nu])
            if len(a) >= 1 and len(b) >= 1 and (len(a) > 1 or len(b) > 1):
                any_pair = True
            checks.append((a, b))
    if not checks or not any_pair:
        return False
    return _chain_ok(cdag, checks, rng)


def _measure_line_width(kernel, stmt, binding, temporal, neutral):
    """(t-vector -> min over neutral of line length) from the domain."""
    dom = kernel.domain(stmt)
    t_pos = _positions(dom.indices, temporal)
    n_pos = _positions(dom.indices, neutral)
    counts: dict[tuple, dict[tuple, int]] = {}
    for vec in dom.enumerate(binding):
        t = tuple(vec[p] for p in t_pos)
        nu = tuple(vec[p] for p in n_pos)
        g = counts.setdefault(t, {})
        g[nu] = g.get(nu, 0) + 1
    return {t: min(g.values()) for t, g in counts.items()}


def _temporal_coord(cdag: Cdag, u: int, temporal) -> tuple | None:
    lbl = cdag.labels[u]
    if lbl == "INPUT":
        return None
    idx = cdag.kernel.domain(lbl).indices
    try:
        pos = [idx.index(d) for d in temporal]
    except ValueError:
        return None
    vec = cdag.vectors[u]
    return tuple(vec[p] for p in pos)


def _measure_chain_width(cdag: Cdag, stmt, indices, temporal, neutral, rng):
    """(t -> min over sampled neutrals of strictly-between chain node count)."""
    t_pos = _positions(indices, temporal)
    n_pos = _positions(indices, neutral)
    layers = _Layers(cdag, stmt, t_pos, n_pos, ())
    out: dict[tuple, int] = {}
    tv = layers.t_values
    for ti in range(len(tv) - 2):
        t, tmid, t2 = tv[ti], tv[ti + 1], tv[ti + 2]
        common = set(layers.by_tn[t]) & set(layers.by_tn[t2])
        if not common:
            continue
        vals = []
        for nu in _sample_neutrals({n: None for n in common}, rng):
            sources = layers.by_tn[t][nu]
            targets = layers.by_tn[t2][nu]
            down = cdag.reachable_from(sources)
            up = cdag.coreachable_to(targets)
            mid = 0
            for u in down & up:
                if _temporal_coord(cdag, u, temporal) == tmid:
                    mid += 1
            vals.append(mid)
        if vals:
            out[t] = min(vals)
    return out


_CDAG_CACHE: dict[tuple, Cdag] = {}


def _cached_cdag(kernel: AffineKernel, binding: dict) -> Cdag:
    key = (id(kernel), tuple(sorted(binding.items())))
    if key not in _CDAG_CACHE:
        _CDAG_CACHE[key] = instantiate(kernel, binding)
    return _CDAG_CACHE[key]


def _candidates(indices):
    """(temporal prefix, broadcast, neutral) candidates; broadcast-as-suffix
    and smaller groups first, matching the usual loop structure."""
    d = len(indices)
    out = []
    for a in range(1, d):
        temporal = tuple(indices[:a])
        rest = indices[a:]
        subsets = []
        for r in range(1, len(rest) + 1):
            for bc in itertools.combinations(rest, r):
                subsets.append(bc)
        subsets.sort(key=lambda bc: (bc != tuple(rest[len(rest) - len(bc):]),
                                     len(bc), bc))
        for bc in subsets:
            neutral = tuple(x for x in rest if x not in bc)
            out.append((temporal, bc, neutral))
    out.sort(key=lambda c: (len(c[0]),
                            c[1] != tuple(indices[len(indices) - len(c[1]):]),
                            len(c[1])))
    return out


def _range_substitution(kernel, stmt, tdim, expr):
    """Minimum of an affine expr over the temporal loop range, symbolically."""
    dom = kernel.domain(stmt)
    pos = dom.indices.index(tdim)
    lo, up = dom.bounds[pos]
    tsym = sp.Symbol(tdim, integer=True)
    coeff = sp.expand(expr).coeff(tsym)
    if coeff == 0:
        return sp.expand(expr)
    if coeff.is_negative:
        return sp.expand(expr.subs(tsym, _to_sympy(up) - 1))
    return sp.expand(expr.subs(tsym, _to_sympy(lo)))


def detect(kernel: AffineKernel, stmt: str, bindings=None, held_out=None,
           seed: int = 0) -> HourglassReport | None:
    """Detect the hourglass pattern on one statement; None when absent."""
    key = (id(kernel), stmt, seed) if bindings is None else None
    if key is not None and key in _DETECT_CACHE:
        return _DETECT_CACHE[key]
    report = _detect(kernel, stmt, bindings, held_out, seed)
    if key is not None:
        _DETECT_CACHE[key] = report
    return report


_DETECT_CACHE: dict = {}


def _detect(kernel, stmt, bindings, held_out, seed):
    kernel.statement(stmt)
    indices = kernel.domain(stmt).indices
    if len(indices) < 2:
        return None
    if bindings is None:
        bindings, held_out = default_bindings(kernel)
    rng = random.Random(seed)

    first = _cached_cdag(kernel, bindings[0])
    chosen = None
    for temporal, broadcast, neutral in _candidates(list(indices)):
        if _verify_candidate(first, stmt, indices, temporal, broadcast, neutral, rng):
            ok = all(
                _verify_candidate(_cached_cdag(kernel, b), stmt, indices,
                                  temporal, broadcast, neutral, rng)
                for b in bindings[1:])
            if ok:
                chosen = (temporal, broadcast, neutral)
                break
    if chosen is None:
        return None
    temporal, broadcast, neutral = chosen
    if len(temporal) != 1:
        return None  # multi-dimensional temporal ranges not supported

    params = kernel.parameter_names()
    fit_vars = params + list(temporal)

    def collect(measure):
        samples = []
        for b in bindings:
            for t, val in measure(b).items():
                env = dict(b)
                env.update(zip(temporal, t))
                samples.append((env, val))
        return samples

    line_samples = collect(lambda b: _measure_line_width(kernel, stmt, b, temporal, neutral))
    line = _fit_affine(line_samples, fit_vars)
    if line is None:
        return None
    held_line = _measure_line_width(kernel, stmt, held_out, temporal, neutral)
    for t, val in held_line.items():
        env = dict(held_out)
        env.update(zip(temporal, t))
        if sp.Integer(val) != line.subs({sp.Symbol(v, integer=True): env[v] for v in fit_vars}):
            return None

    chain_samples = collect(lambda b: _measure_chain_width(
        _cached_cdag(kernel, b), stmt, indices, temporal, neutral, rng))
    chain = _fit_affine(chain_samples, fit_vars) if chain_samples else None
    if chain is not None:
        held_chain = _measure_chain_width(_cached_cdag(kernel, held_out), stmt,
                                          indices, temporal, neutral, rng)
        for t, val in held_chain.items():
            env = dict(held_out)
            env.update(zip(temporal, t))
            if sp.Integer(val) != chain.subs(
                    {sp.Symbol(v, integer=True): env[v] for v in fit_vars}):
                chain = None
                break

    tsym = sp.Symbol(temporal[0], integer=True)
    if chain is not None and sp.expand(chain).coeff(tsym) == 0:
        width = chain
    else:
        width = line
    return HourglassReport(
        statement=stmt,
        temporal=temporal,
        broadcast=broadcast,
        neutral=neutral,
        width=width,
        width_per_step=line,
        chain_width=chain,
        width_min=_range_substitution(kernel, stmt, temporal[0], width),
        line_width_min=_range_substitution(kernel, stmt, temporal[0], line),
    )


def detect_all(kernel: AffineKernel, bindings=None, held_out=None,
               seed: int = 0) -> list[HourglassReport]:
    """Reports for every statement exhibiting the pattern, program order."""
    out = []
    for s in kernel.statements:
        r = detect(kernel, s.label, bindings, held_out, seed)
        if r is not None:
            out.append(r)
    return out


# -- loop splitting -----------------------------------------------------------

def split_temporal(kernel: AffineKernel, stmt: str, split: str,
                   bindings=None, held_out=None):
    """Split the statement's outermost temporal loop at a fresh parameter.

    Returns (head, tail) kernels covering iteration ranges [lower, split) and
    [split, upper).  Loop splitting leaves the dependence structure unchanged,
    so any bound valid for a fragment's sub-CDAG applies to the original.
    """
    report = detect(kernel, stmt, bindings, held_out)
    if report is None:
        raise SplitError(f"statement {stmt!r} has no hourglass pattern")
    if not report.needs_split:
        raise SplitError(
            f"split not applicable: width_min {report.line_width_min} is already parametric")
    if split in kernel.parameter_names():
        raise SplitError(f"split parameter {split!r} is not fresh")
    tdim = report.temporal[0]
    cut = AffineExpr.var(split)

    def rebuild(body, which):
        out = []
        for node in body:
            if isinstance(node, Loop) and node.index == tdim:
                if which == "head":
                    out.append(Loop(tdim, node.lower, cut, node.body))
                else:
                    out.append(Loop(tdim, cut, node.upper, node.body))
            elif isinstance(node, Loop):
                out.append(Loop(node.index, node.lower, node.upper,
                                rebuild(node.body, which)))
            else:
                out.append(node)
        return tuple(out)

    params = kernel.parameters + (Parameter(split, "problem-size"),)
    head = AffineKernel(kernel.name + "_head", params, rebuild(kernel.body, "head"),
                        kernel.outputs, split_param=split)
    tail = AffineKernel(kernel.name + "_tail", params, rebuild(kernel.body, "tail"),
                        kernel.outputs, split_param=split)
    return head, tail
