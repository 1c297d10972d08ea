"""Seeded random-graph generators and DAG conversion.

Two undirected models are supported: Watts-Strogatz ring lattices with
rewiring (``generate_ws``) and Erdős–Rényi edge sampling (``generate_er``).
``to_dag`` orients every edge from the lower to the higher node index and
adds a virtual input node (feeding every node with no incoming edge) and a
virtual output node (fed by every node with no outgoing edge), which makes
the result acyclic by construction and connected end to end.

Everything here is a pure function of (params, seed): safe to call from
many threads, and byte-identical after serialization for identical inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from .errors import ParameterDomainError
from .rng import derive_seed, generator

GRAPH_SCHEMA = "nago-graph/1"
DAG_SCHEMA = "nago-dag/1"


@dataclass(frozen=True)
class WsParams:
    """Watts-Strogatz parameters: ring of ``n`` nodes, ``k`` ring neighbours,
    rewiring probability ``p``.

    Each node is wired to floor(k/2) neighbours per side, so an odd ``k``
    behaves as ``k - 1`` (the common reference-implementation convention;
    also stated in the CLI help).
    """

    n: int
    k: int
    p: float

    def __post_init__(self):
        if self.n < 3:
            raise ParameterDomainError(f"WS needs n >= 3, got n={self.n}")
        if not 2 <= self.k < self.n:
            raise ParameterDomainError(f"WS needs 2 <= k < n, got k={self.k}, n={self.n}")
        if not 0.0 <= self.p <= 1.0:
            raise ParameterDomainError(f"WS needs 0 <= p <= 1, got p={self.p}")


@dataclass(frozen=True)
class ErParams:
    """Erdős–Rényi parameters: ``n`` nodes, independent edge probability ``p``.

    Unlike the WS model this admits a single-node graph.
    """

    n: int
    p: float

    def __post_init__(self):
        if self.n < 1:
            raise ParameterDomainError(f"ER needs n >= 1, got n={self.n}")
        if not 0.0 <= self.p <= 1.0:
            raise ParameterDomainError(f"ER needs 0 <= p <= 1, got p={self.p}")


@dataclass(frozen=True)
class RandomGraph:
    """An undirected simple graph with provenance.

    ``edges`` is a sorted tuple of ``(u, v)`` pairs with ``u < v``; no
    self-loops, no duplicates.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    model_tag: str  # "ws" | "er"
    seed: int

    def edge_set(self) -> set[tuple[int, int]]:
        return set(self.edges)

    def to_json(self) -> str:
        doc = {
            "schema": GRAPH_SCHEMA,
            "model": self.model_tag,
            "node_count": self.node_count,
            "seed": self.seed,
            "edges": [list(e) for e in self.edges],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "RandomGraph":
        doc = json.loads(text)
        if doc.get("schema") != GRAPH_SCHEMA:
            raise ParameterDomainError(f"unexpected graph schema: {doc.get('schema')!r}")
        edges = tuple(sorted((min(u, v), max(u, v)) for u, v in doc["edges"]))
        return RandomGraph(doc["node_count"], edges, doc["model"], doc["seed"])

    def to_dot(self) -> str:
        lines = [f"graph {self.model_tag} {{"]
        lines += [f"  {i};" for i in range(self.node_count)]
        lines += [f"  {u} -- {v};" for u, v in self.edges]
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Dag:
    """Directed acyclic view of a random graph.

    Original nodes keep their indices ``0..node_count-1``; the virtual
    input is ``node_count`` and the virtual output ``node_count + 1``.
    Edges between original nodes always go from lower to higher index.
    """

    node_count: int
    directed_edges: tuple[tuple[int, int], ...]
    input_node: int
    output_node: int

    @property
    def total_nodes(self) -> int:
        return self.node_count + 2

    def input_boundary(self) -> tuple[int, ...]:
        """Original nodes fed directly by the virtual input."""
        return tuple(sorted(d for s, d in self.directed_edges if s == self.input_node))

    def output_boundary(self) -> tuple[int, ...]:
        """Original nodes feeding the virtual output directly."""
        return tuple(sorted(s for s, d in self.directed_edges if d == self.output_node))

    def topological_order(self) -> list[int]:
        """Kahn topological order over all nodes including the virtual pair."""
        indeg = {i: 0 for i in range(self.node_count)}
        indeg[self.input_node] = 0
        indeg[self.output_node] = 0
        succ: dict[int, list[int]] = {i: [] for i in indeg}
        for s, d in self.directed_edges:
            succ[s].append(d)
            indeg[d] += 1
        ready = sorted(i for i, deg in indeg.items() if deg == 0)
        order: list[int] = []
        while ready:
            node = ready.pop(0)
            order.append(node)
            for nxt in succ[node]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    ready.append(nxt)
            ready.sort()
        if len(order) != self.total_nodes:
            raise ParameterDomainError("cycle detected in supposed DAG")
        return order

    def to_json(self) -> str:
        doc = {
            "schema": DAG_SCHEMA,
            "node_count": self.node_count,
            "input": self.input_node,
            "output": self.output_node,
            "edges": [list(e) for e in self.directed_edges],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "Dag":
        doc = json.loads(text)
        if doc.get("schema") != DAG_SCHEMA:
            raise ParameterDomainError(f"unexpected dag schema: {doc.get('schema')!r}")
        return Dag(
            doc["node_count"],
            tuple((s, d) for s, d in doc["edges"]),
            doc["input"],
            doc["output"],
        )

    def to_dot(self) -> str:
        lines = ["digraph dag {"]
        lines.append(f'  {self.input_node} [label="in", shape=diamond];')
        lines.append(f'  {self.output_node} [label="out", shape=diamond];')
        lines += [f"  {i};" for i in range(self.node_count)]
        lines += [f"  {s} -> {d};" for s, d in self.directed_edges]
        lines.append("}")
        return "\n".join(lines) + "\n"


def _canon(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


def generate_ws(params: WsParams, seed: int) -> RandomGraph:
    """Sample a Watts-Strogatz graph.

    Ring lattice of ``n`` nodes, each wired to floor(k/2) neighbours per
    side; every lattice edge is then independently rewired with
    probability ``p``: the target endpoint is re-drawn uniformly until it
    is neither the source nor a current neighbour (at most ``n`` retries;
    on exhaustion the edge is kept in place).  Edge count is therefore
    exactly ``n * floor(k/2)`` for every ``p``.
    """
    n, k, p = params.n, params.k, params.p
    half = k // 2
    rng = generator(derive_seed(seed, "ws", n, k, p))

    edges: set[tuple[int, int]] = set()
    for j in range(1, half + 1):
        for u in range(n):
            edges.add(_canon(u, (u + j) % n))

    # Rewiring pass walks the lattice positions in construction order.
    for j in range(1, half + 1):
        for u in range(n):
            v = (u + j) % n
            if rng.random() >= p:
                continue
            neighbours = {a if b == u else b for a, b in edges if u in (a, b)}
            target = -1
            for _ in range(n):
                w = int(rng.integers(0, n))
                if w != u and w not in neighbours:
                    target = w
                    break
            if target >= 0:
                edges.remove(_canon(u, v))
                edges.add(_canon(u, target))

    return RandomGraph(n, tuple(sorted(edges)), "ws", seed)


def generate_er(params: ErParams, seed: int) -> RandomGraph:
    """Sample an Erdős–Rényi graph: each of the n(n-1)/2 candidate edges is
    included independently with probability ``p``.  ``n=1`` yields a single
    node with no edges."""
    n, p = params.n, params.p
    rng = generator(derive_seed(seed, "er", n, p))
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                edges.append((u, v))
    return RandomGraph(n, tuple(edges), "er", seed)


def to_dag(g: RandomGraph) -> Dag:
    """Orient an undirected graph into a single-input/single-output DAG.

    Every edge goes low index → high index; a virtual input node feeds all
    nodes of in-degree zero and a virtual output collects all nodes of
    out-degree zero, so isolated nodes and disconnected components stay
    reachable end to end.
    """
    if g.node_count < 1:
        raise ParameterDomainError("cannot convert an empty graph")
    directed = sorted(_canon(u, v) for u, v in g.edges)
    has_in = {d for _, d in directed}
    has_out = {s for s, _ in directed}
    input_node = g.node_count
    output_node = g.node_count + 1
    edges = [(input_node, i) for i in range(g.node_count) if i not in has_in]
    edges += directed
    edges += [(i, output_node) for i in range(g.node_count) if i not in has_out]
    return Dag(g.node_count, tuple(edges), input_node, output_node)
