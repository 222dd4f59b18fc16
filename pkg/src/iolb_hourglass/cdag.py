"""Computational DAG instantiation and queries.

``instantiate`` replays a kernel at a concrete parameter binding in sequential
program order, recording the last writer of every array element.  Each
executed statement instance becomes a node; each distinct element that is read
before it is written becomes an INPUT node.  Edges run from the producer (or
INPUT) of each element to every consumer.

Nodes are integers 0..n-1 ordered by sequential program order with all INPUT
nodes first.  A Cdag is immutable after construction; queries are reentrant.
"""

from __future__ import annotations

from dataclasses import dataclass

from .kernels import AffineKernel

INPUT = "INPUT"

NODE_CEILING = 10**7


class CdagError(ValueError):
    pass


@dataclass(frozen=True)
class NodeId:
    """Statement label (or INPUT) plus iteration vector / element coordinates."""

    label: str
    vector: tuple

    def __str__(self) -> str:
        return f"{self.label}[{','.join(map(str, self.vector))}]"


class Cdag:
    """Instantiated computational DAG for one kernel and binding."""

    def __init__(self, kernel: AffineKernel, binding: dict[str, int],
                 labels: list[str], vectors: list[tuple],
                 succs: list[list[int]], preds: list[list[int]],
                 n_inputs: int, outputs: frozenset[int]):
        self.kernel = kernel
        self.binding = dict(binding)
        self.labels = labels            # per-node statement label or INPUT
        self.vectors = vectors          # per-node iteration vector / element coords
        self.succs = succs
        self.preds = preds
        self.n_inputs = n_inputs
        self.outputs = outputs
        self._index = {(labels[u], vectors[u]): u for u in range(len(labels))}

    # -- basics ------------------------------------------------------------

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_nodes(self) -> int:
        return len(self.labels)

    @property
    def inputs(self) -> range:
        return range(self.n_inputs)

    @property
    def computation_nodes(self) -> range:
        return range(self.n_inputs, len(self.labels))

    def node(self, label: str, vector: tuple) -> int:
        return self._index[(label, tuple(vector))]

    def node_id(self, u: int) -> NodeId:
        return NodeId(self.labels[u], self.vectors[u])

    def is_input(self, u: int) -> bool:
        return u < self.n_inputs

    def instances_of(self, label: str) -> list[int]:
        return [u for u in self.computation_nodes if self.labels[u] == label]

    # -- queries -----------------------------------------------------------

    def inset(self, nodes) -> set[int]:
        """Data used by the set but not produced inside it: the external
        predecessors { p | p not in E, p -> q for some q in E }."""
        E = set(nodes)
        out: set[int] = set()
        for q in E:
            for p in self.preds[q]:
                if p not in E:
                    out.add(p)
        return out

    def reachable_from(self, sources, restrict=None) -> set[int]:
        """Forward reachability (excluding the sources themselves unless they
        are reached through an edge)."""
        seen: set[int] = set()
        stack = list(sources)
        while stack:
            u = stack.pop()
            for v in self.succs[u]:
                if v not in seen and (restrict is None or v in restrict):
                    seen.add(v)
                    stack.append(v)
        return seen

    def coreachable_to(self, targets, restrict=None) -> set[int]:
        seen: set[int] = set()
        stack = list(targets)
        while stack:
            u = stack.pop()
            for v in self.preds[u]:
                if v not in seen and (restrict is None or v in restrict):
                    seen.add(v)
                    stack.append(v)
        return seen

    def is_convex(self, nodes, universe=None) -> bool:
        """True iff no dependency chain between two members passes through a
        node outside the set.

        With ``universe`` given, only intermediate nodes belonging to the
        universe are considered violations (used for statement-restricted
        convexity in the sampling oracle).
        """
        E = set(nodes)
        if len(E) <= 1:
            return True
        # Nodes outside E reachable from E and co-reachable to E, limited to
        # sequential positions between min(E) and max(E).
        lo, hi = min(E), max(E)
        window = range(lo, hi + 1)
        down = set()
        stack = [u for u in E]
        while stack:
            u = stack.pop()
            for v in self.succs[u]:
                if v <= hi and v not in down:
                    down.add(v)
                    stack.append(v)
        up = set()
        stack = [u for u in E]
        while stack:
            u = stack.pop()
            for v in self.preds[u]:
                if v >= lo and v not in up:
                    up.add(v)
                    stack.append(v)
        between = (down & up) - E
        if universe is not None:
            between &= set(universe)
        return not between

    def check_acyclic(self) -> None:
        """Edges must respect sequential order; construction guarantees it,
        this re-checks (cheap topological validation)."""
        for u in range(len(self.labels)):
            for v in self.succs[u]:
                if v <= u:
                    raise CdagError(f"edge violates sequential order: {u} -> {v}")

    # -- export ------------------------------------------------------------

    def to_dot(self) -> str:
        """DOT dump for small CDAGs (documentation aid)."""
        if len(self.labels) > 2000:
            raise CdagError("DOT dump limited to 2000 nodes")
        lines = ["digraph cdag {"]
        for u in range(len(self.labels)):
            shape = "box" if self.is_input(u) else "ellipse"
            peri = ", peripheries=2" if u in self.outputs else ""
            lines.append(f'  n{u} [label="{self.node_id(u)}", shape={shape}{peri}];')
        for u in range(len(self.labels)):
            for v in self.succs[u]:
                lines.append(f"  n{u} -> n{v};")
        lines.append("}")
        return "\n".join(lines)


def instantiate(kernel: AffineKernel, binding: dict[str, int],
                ceiling: int = NODE_CEILING) -> Cdag:
    """Build the CDAG of ``kernel`` at ``binding``."""
    for p in kernel.parameters:
        if p.name not in binding:
            raise CdagError(f"unbound parameter {p.name}")

    total = kernel.instance_total(binding)
    if total > ceiling:
        raise CdagError(f"node count {total} exceeds ceiling {ceiling}")

    # Pass 1: find input elements (read before written), in first-read order.
    last_writer_elem: set[tuple] = set()
    input_elems: list[tuple] = []
    input_set: set[tuple] = set()
    for stmt, vec in kernel.walk(binding):
        env = dict(binding)
        env.update(zip(kernel.domain(stmt.label).indices, vec))
        for read in stmt.reads:
            el = read.element(env)
            if el not in last_writer_elem and el not in input_set:
                input_set.add(el)
                input_elems.append(el)
        last_writer_elem.add(stmt.writes.element(env))

    n_inputs = len(input_elems)
    labels: list[str] = [INPUT] * n_inputs + [""] * total
    vectors: list[tuple] = [el for el in input_elems] + [()] * total
    succs: list[list[int]] = [[] for _ in range(n_inputs + total)]
    preds: list[list[int]] = [[] for _ in range(n_inputs + total)]

    # Pass 2: materialize computation nodes and flow edges.
    writer: dict[tuple, int] = {el: idx for idx, el in enumerate(input_elems)}
    u = n_inputs
    for stmt, vec in kernel.walk(binding):
        env = dict(binding)
        env.update(zip(kernel.domain(stmt.label).indices, vec))
        labels[u] = stmt.label
        vectors[u] = vec
        seen_preds = set()
        for read in stmt.reads:
            p = writer[read.element(env)]
            if p not in seen_preds:
                seen_preds.add(p)
                succs[p].append(u)
                preds[u].append(p)
        writer[stmt.writes.element(env)] = u
        u += 1

    outputs = frozenset(w for el, w in writer.items() if el[0] in kernel.outputs)
    cdag = Cdag(kernel, binding, labels, vectors, succs, preds, n_inputs, outputs)
    cdag.check_acyclic()
    return cdag
