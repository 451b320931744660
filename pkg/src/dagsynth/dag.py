"""Directed acyclic variable graphs and their generator-ready form.

The user supplies a graph over the schema's variables. Before the generator
is built, every conditional-input variable is forced to be a source node by
reversing its incoming edges, the graph is linearized (Kahn order with ties
broken by schema column position), and each node is annotated with its direct
parents and with the indirect ancestors it should attend to.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import CycleDetected, DagValidationError, InputError, ReversalCycle
from .schema import TableSchema


@dataclass(frozen=True)
class Dag:
    """Plain node/edge container. Acyclicity is checked by the operations,
    not the constructor: edge reversal may legitimately repair a cyclic input."""

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]

    @classmethod
    def from_edges(cls, edges, nodes=None) -> "Dag":
        edges = tuple((str(a), str(b)) for a, b in edges)
        if nodes is None:
            seen: list[str] = []
            for a, b in edges:
                for n in (a, b):
                    if n not in seen:
                        seen.append(n)
            nodes = tuple(seen)
        else:
            nodes = tuple(str(n) for n in nodes)
            for a, b in edges:
                for n in (a, b):
                    if n not in nodes:
                        raise InputError(f"edge endpoint {n!r} is not in the node list")
        return cls(nodes, edges)

    def parents(self, node: str) -> tuple[str, ...]:
        return tuple(a for a, b in self.edges if b == node)

    def children(self, node: str) -> tuple[str, ...]:
        return tuple(b for a, b in self.edges if a == node)

    def to_json(self, conditional_inputs=()) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [list(e) for e in self.edges],
            "conditional_inputs": list(conditional_inputs),
        }


def load_dag_file(path) -> tuple[Dag, tuple[str, ...]]:
    """Read a graph file: {"edges": [[from, to], ...], "conditional_inputs":
    [...], "nodes": [...]?}. "nodes" is only needed for isolated variables."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        edges = [(str(a), str(b)) for a, b in data["edges"]]
    except (KeyError, TypeError, ValueError):
        raise InputError('graph file must contain an "edges" list of [from, to] pairs')
    nodes = data.get("nodes")
    ci = tuple(str(c) for c in data.get("conditional_inputs", []))
    return Dag.from_edges(edges, nodes=nodes), ci


def save_dag_file(path, dag: Dag, conditional_inputs=()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dag.to_json(conditional_inputs), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # "cycle" | "unknown_node" | "duplicate_edge" | "self_loop" | "missing_variable"
    message: str
    witness: tuple[str, ...] = ()


def _find_cycle(nodes, adjacency) -> tuple[str, ...] | None:
    """Return one witness cycle [n0, ..., n0], or None if acyclic."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {n: WHITE for n in nodes}
    parent: dict[str, str | None] = {}

    for start in nodes:
        if color[start] != WHITE:
            continue
        stack = [(start, iter(adjacency.get(start, ())))]
        color[start] = GRAY
        parent[start] = None
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == GRAY:
                    cycle = [nxt, node]
                    cur = node
                    while cur != nxt:
                        cur = parent[cur]
                        cycle.append(cur)
                    cycle.reverse()  # starts and ends at nxt
                    return tuple(cycle)
                if color[nxt] == WHITE:
                    color[nxt] = GRAY
                    parent[nxt] = node
                    stack.append((nxt, iter(adjacency.get(nxt, ()))))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
    return None


def validate(dag: Dag, schema: TableSchema) -> list[Diagnostic]:
    """Lint a graph against a schema. Returns diagnostics, never raises."""
    out: list[Diagnostic] = []
    known = set(schema.names)
    for n in dag.nodes:
        if n not in known:
            out.append(Diagnostic("unknown_node", f"node {n!r} is not a schema variable", (n,)))
    for n in known - set(dag.nodes):
        out.append(
            Diagnostic("missing_variable", f"schema variable {n!r} is absent from the graph", (n,))
        )
    seen = set()
    for a, b in dag.edges:
        if a == b:
            out.append(Diagnostic("self_loop", f"self-loop on {a!r}", (a,)))
        if (a, b) in seen:
            out.append(Diagnostic("duplicate_edge", f"duplicate edge {a!r} -> {b!r}", (a, b)))
        seen.add((a, b))

    adjacency: dict[str, list[str]] = {n: [] for n in dag.nodes}
    for a, b in set(dag.edges):
        if a != b and a in adjacency and b in adjacency:
            adjacency[a].append(b)
    cycle = _find_cycle(dag.nodes, adjacency)
    if cycle is not None:
        out.append(Diagnostic("cycle", "cycle: " + " -> ".join(cycle), cycle))
    return out


def apply_conditional_inputs(dag: Dag, conditional_inputs) -> Dag:
    """Force every conditional-input variable to be a source node.

    Every edge u -> c with c a conditional input is reversed to c -> u
    (reversal keeps the user's dependency, with the direction flipped toward
    the known value); duplicates created by reversal are merged. An edge with
    *both* endpoints conditional is dropped outright: neither direction could
    leave both nodes source nodes, and the generator consumes no such edge
    since conditional values are given, not generated. The result must be
    acyclic, otherwise the caller has to edit the graph by hand. Idempotent.
    """
    ci = set(conditional_inputs)
    unknown = ci - set(dag.nodes)
    if unknown:
        raise InputError(f"conditional inputs not in the graph: {sorted(unknown)}")
    new_edges: list[tuple[str, str]] = []
    for a, b in dag.edges:
        if a in ci and b in ci:
            continue
        if b in ci:
            edge = (b, a)
        else:
            edge = (a, b)
        if edge not in new_edges:
            new_edges.append(edge)
    result = Dag(dag.nodes, tuple(new_edges))
    adjacency: dict[str, list[str]] = {n: [] for n in result.nodes}
    for a, b in result.edges:
        adjacency[a].append(b)
    cycle = _find_cycle(result.nodes, adjacency)
    if cycle is not None:
        raise ReversalCycle(cycle)
    return result


def linearize(dag: Dag, priority=None) -> list[str]:
    """Kahn topological order with deterministic tie-breaking.

    Among the available in-degree-0 nodes, the one with the smallest priority
    is emitted first; by default priority is the position in ``dag.nodes``
    (callers pass schema column positions for schema-stable orderings).
    """
    if priority is None:
        priority = {n: i for i, n in enumerate(dag.nodes)}
    indeg = {n: 0 for n in dag.nodes}
    children: dict[str, list[str]] = {n: [] for n in dag.nodes}
    for a, b in set(dag.edges):
        indeg[b] += 1
        children[a].append(b)
    ready = sorted((n for n in dag.nodes if indeg[n] == 0), key=lambda n: priority[n])
    order: list[str] = []
    while ready:
        node = ready.pop(0)
        order.append(node)
        changed = False
        for ch in children[node]:
            indeg[ch] -= 1
            if indeg[ch] == 0:
                ready.append(ch)
                changed = True
        if changed:
            ready.sort(key=lambda n: priority[n])
    if len(order) != len(dag.nodes):
        adjacency = {n: children[n] for n in dag.nodes}
        cycle = _find_cycle(dag.nodes, adjacency)
        raise CycleDetected(cycle if cycle else tuple(set(dag.nodes) - set(order)))
    return order


ROLE_CONDITIONAL = "conditional_input"
ROLE_GENERATED = "generated"


@dataclass(frozen=True)
class GraphNode:
    name: str
    index: int
    role: str
    parents: tuple[int, ...]  # direct predecessors, as positions in the order
    attention: tuple[int, ...]  # ancestors that are not direct parents


@dataclass(frozen=True)
class GeneratorGraph:
    """Linearized, annotated graph the generator is built from."""

    nodes: tuple[GraphNode, ...]

    @property
    def order(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes)

    @property
    def generated(self) -> tuple[GraphNode, ...]:
        return tuple(n for n in self.nodes if n.role == ROLE_GENERATED)

    @property
    def conditional(self) -> tuple[GraphNode, ...]:
        return tuple(n for n in self.nodes if n.role == ROLE_CONDITIONAL)

    def __getitem__(self, name: str) -> GraphNode:
        for n in self.nodes:
            if n.name == name:
                return n
        raise KeyError(name)


def build_graph(dag: Dag, conditional_inputs, schema: TableSchema) -> GeneratorGraph:
    """Validate, source-ify the conditional inputs, linearize, and annotate.

    Each node's parent set holds its direct predecessors; its attention set
    holds every other ancestor, computed by transitive closure over the
    modified graph.
    """
    ci = set(conditional_inputs)
    modified = apply_conditional_inputs(dag, ci)
    diagnostics = validate(modified, schema)
    if diagnostics:
        raise DagValidationError(diagnostics)

    priority = {name: schema.index(name) for name in modified.nodes}
    order = linearize(modified, priority)
    pos = {name: i for i, name in enumerate(order)}

    parent_sets: list[set[int]] = [set() for _ in order]
    for a, b in modified.edges:
        parent_sets[pos[b]].add(pos[a])

    ancestor_sets: list[set[int]] = [set() for _ in order]
    for i in range(len(order)):
        for p in parent_sets[i]:
            ancestor_sets[i].add(p)
            ancestor_sets[i] |= ancestor_sets[p]

    nodes = []
    for i, name in enumerate(order):
        role = ROLE_CONDITIONAL if name in ci else ROLE_GENERATED
        attention = tuple(sorted(ancestor_sets[i] - parent_sets[i]))
        nodes.append(
            GraphNode(
                name=name,
                index=i,
                role=role,
                parents=tuple(sorted(parent_sets[i])),
                attention=attention,
            )
        )
    return GeneratorGraph(tuple(nodes))
