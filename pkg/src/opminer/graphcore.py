"""Labeled directed graphs and the operations every other stage builds on.

A graph is a set of (id, label) nodes plus directed (src, dst, label) edges.
The module provides weak connected components, a canonical form for connected
graphs (minimal DFS code over all depth-first enumerations, with an explicit
direction flag per code entry), label- and direction-preserving subgraph
embedding search, and the line-based transaction file format shared by the
mining pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterable, Iterator, Mapping, Sequence


class GraphError(ValueError):
    """Malformed graph data or graph file."""


@dataclass(frozen=True)
class LabeledGraph:
    """Immutable directed graph with string labels on nodes and edges.

    Node ids are opaque integers local to one graph. Parallel edges between
    the same ordered node pair are allowed when their labels differ;
    (src, dst, label) triples are unique. Self-loops are rejected.
    """

    nodes: tuple[tuple[int, str], ...]
    edges: tuple[tuple[int, int, str], ...]

    @classmethod
    def of(
        cls,
        nodes: Mapping[int, str] | Iterable[tuple[int, str]],
        edges: Iterable[tuple[int, int, str]] = (),
    ) -> "LabeledGraph":
        """Build a graph from any node/edge iterables, normalized and validated."""
        if isinstance(nodes, Mapping):
            node_items = tuple(sorted(nodes.items()))
        else:
            node_items = tuple(sorted(nodes))
        return cls(node_items, tuple(sorted(edges)))

    def __post_init__(self) -> None:
        seen: dict[int, str] = {}
        for nid, label in self.nodes:
            if not isinstance(nid, int):
                raise GraphError(f"node id {nid!r} is not an integer")
            if nid in seen:
                raise GraphError(f"duplicate node id {nid}")
            seen[nid] = label
        edge_seen = set()
        for src, dst, label in self.edges:
            if src not in seen or dst not in seen:
                raise GraphError(f"edge ({src},{dst},{label!r}) references undeclared node")
            if src == dst:
                raise GraphError(f"self-loop on node {src} is not supported")
            triple = (src, dst, label)
            if triple in edge_seen:
                raise GraphError(f"duplicate edge {triple}")
            edge_seen.add(triple)

    @cached_property
    def label_map(self) -> dict[int, str]:
        return dict(self.nodes)

    @cached_property
    def edge_set(self) -> frozenset[tuple[int, int, str]]:
        return frozenset(self.edges)

    @cached_property
    def incident(self) -> dict[int, tuple[tuple[int, int, str], ...]]:
        """Per node: (other endpoint, direction flag, edge label) in both directions.

        Direction flag 0 means the edge leaves this node, 1 means it enters.
        """
        inc: dict[int, list[tuple[int, int, str]]] = {nid: [] for nid, _ in self.nodes}
        for src, dst, label in self.edges:
            inc[src].append((dst, 0, label))
            inc[dst].append((src, 1, label))
        return {nid: tuple(sorted(items)) for nid, items in inc.items()}

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def size(self) -> int:
        """Node count plus edge count; the quantity compression scores weigh."""
        return len(self.nodes) + len(self.edges)

    def label(self, nid: int) -> str:
        return self.label_map[nid]

    def induced(self, node_ids: Iterable[int]) -> "LabeledGraph":
        """Subgraph on the given nodes with every edge among them."""
        keep = set(node_ids)
        return LabeledGraph.of(
            [(n, l) for n, l in self.nodes if n in keep],
            [e for e in self.edges if e[0] in keep and e[1] in keep],
        )

    def relabel_ids(self, mapping: Mapping[int, int]) -> "LabeledGraph":
        """Copy with node ids renamed through a bijection (labels unchanged)."""
        return LabeledGraph.of(
            [(mapping[n], l) for n, l in self.nodes],
            [(mapping[s], mapping[d], l) for s, d, l in self.edges],
        )


def connected_components(g: LabeledGraph) -> list[LabeledGraph]:
    """Split into induced subgraphs on weak-connectivity classes.

    Edge direction is ignored for connectivity. Components are ordered by
    their smallest node id; the empty graph yields an empty list.
    """
    unvisited = dict(g.nodes)
    components = []
    for start, _ in g.nodes:
        if start not in unvisited:
            continue
        stack = [start]
        comp = []
        del unvisited[start]
        while stack:
            v = stack.pop()
            comp.append(v)
            for w, _, _ in g.incident[v]:
                if w in unvisited:
                    del unvisited[w]
                    stack.append(w)
        components.append(g.induced(comp))
    return components


# --- canonical form -------------------------------------------------------

# A code entry is (i, j, dflag, from_label, edge_label, to_label) where i, j
# are DFS discovery indices, and dflag records the underlying edge direction:
# 0 when the edge runs from the node at index i to the node at index j, else 1.
# Forward entries discover index j == len(order); backward entries close to an
# earlier index j < i on the rightmost path.
CodeEntry = tuple[int, int, int, str, str, str]


def _entry_key(entry: CodeEntry) -> tuple:
    i, j, dflag, _lf, le, lt = entry
    if j < i:  # backward: smaller target index first
        return (0, j, dflag, le, "")
    return (1, -i, dflag, le, lt)  # forward: deeper source index first


@dataclass(frozen=True)
class CanonicalCode:
    """Minimal DFS code of a connected graph; equal iff graphs are isomorphic.

    Ordered lexicographically by (root label, per-entry keys), which is a
    total order usable as a deterministic tie-break.
    """

    root_label: str
    entries: tuple[CodeEntry, ...]

    @cached_property
    def sort_key(self) -> tuple:
        return (self.root_label, tuple(_entry_key(e) for e in self.entries))

    def __lt__(self, other: "CanonicalCode") -> bool:
        return self.sort_key < other.sort_key

    def __le__(self, other: "CanonicalCode") -> bool:
        return self.sort_key <= other.sort_key

    @property
    def text(self) -> str:
        if not self.entries:
            return self.root_label
        parts = [self.root_label]
        for i, j, dflag, _lf, le, lt in self.entries:
            arrow = ">" if dflag == 0 else "<"
            parts.append(f"{i}{arrow}{j}:{le}:{lt}")
        return ";".join(parts)


def _alive(
    g: LabeledGraph,
    order: tuple[int, ...],
    covered: frozenset[tuple[int, int, str]],
    rmpath: Sequence[int],
) -> bool:
    """Whether a partial DFS enumeration can still cover every remaining edge.

    An uncovered edge is only reachable later if (a) both endpoints are
    undiscovered, (b) its single discovered endpoint lies on the rightmost
    path, or (c) both are discovered but one is the rightmost vertex and the
    other is on the rightmost path (an emittable backward edge).
    """
    mapped = set(order)
    onpath = {order[idx] for idx in rmpath}
    vr = order[rmpath[-1]]
    for edge in g.edges:
        if edge in covered:
            continue
        a, b, _ = edge
        a_in, b_in = a in mapped, b in mapped
        if not a_in and not b_in:
            continue
        if a_in and b_in:
            if not ((a == vr and b in onpath) or (b == vr and a in onpath)):
                return False
        elif (a if a_in else b) not in onpath:
            return False
    return True


@lru_cache(maxsize=32768)
def canonical_code(g: LabeledGraph) -> CanonicalCode:
    """Minimal DFS code over all valid depth-first enumerations of g.

    Deterministic and invariant under node-id renaming. Raises GraphError
    for empty or disconnected input.

    The minimum is found greedily: all projections (partial embeddings of the
    evolving code into g) are kept, the smallest viable extension entry is
    appended at each step, and projections whose remaining edges can no
    longer be emitted are dropped. Materialized edge-cover sets are only
    built for the entry actually chosen.
    """
    if g.n_nodes == 0:
        raise GraphError("canonical code of the empty graph is undefined")
    if len(connected_components(g)) != 1:
        raise GraphError("canonical_code requires a connected graph")
    labels = g.label_map
    root_label = min(labels.values())
    if g.n_edges == 0:
        return CanonicalCode(root_label, ())

    incident = g.incident
    entries: list[CodeEntry] = []
    rmpath: list[int] = [0]
    projections: set[tuple[tuple[int, ...], frozenset]] = {
        ((v,), frozenset()) for v, l in g.nodes if l == root_label
    }

    while len(entries) < g.n_edges:
        r = rmpath[-1]
        nidx = len(next(iter(projections))[0])  # next discovery index
        # entry -> lazy materializations (order, covered-before, new triple)
        candidates: dict[CodeEntry, list[tuple]] = {}
        for order, covered in projections:
            vr = order[r]
            mapped = set(order)
            for jdx in rmpath[:-1]:
                u = order[jdx]
                for w, dflag, el in incident[vr]:
                    if w != u:
                        continue
                    triple = (vr, w, el) if dflag == 0 else (w, vr, el)
                    if triple in covered:
                        continue
                    entry = (r, jdx, dflag, labels[vr], el, labels[u])
                    candidates.setdefault(entry, []).append((order, covered, triple))
            for idx in rmpath:
                x = order[idx]
                for w, dflag, el in incident[x]:
                    if w in mapped:
                        continue
                    triple = (x, w, el) if dflag == 0 else (w, x, el)
                    entry = (idx, nidx, dflag, labels[x], el, labels[w])
                    candidates.setdefault(entry, []).append((order + (w,), covered, triple))

        for entry in sorted(candidates, key=_entry_key):
            i, j, _, _, _, _ = entry
            new_rmpath = rmpath if j < i else rmpath[: rmpath.index(i) + 1] + [j]
            alive = set()
            for order, covered, triple in candidates[entry]:
                mat = (order, covered | {triple})
                if mat not in alive and _alive(g, mat[0], mat[1], new_rmpath):
                    alive.add(mat)
            if alive:
                entries.append(entry)
                rmpath = new_rmpath
                projections = alive
                break
        else:  # unreachable for connected input: some projection is always alive
            raise GraphError("no viable DFS extension; graph invariants violated")

    return CanonicalCode(root_label, tuple(entries))


# --- subgraph embedding ---------------------------------------------------


def _search_order(needle: LabeledGraph) -> list[int]:
    """Node visit order keeping each next node adjacent to placed ones."""
    remaining = {nid for nid, _ in needle.nodes}
    order: list[int] = []
    placed: set[int] = set()
    while remaining:
        adjacent = sorted(
            v for v in remaining if any(w in placed for w, _, _ in needle.incident[v])
        )
        pick = adjacent[0] if adjacent else min(remaining)
        order.append(pick)
        placed.add(pick)
        remaining.remove(pick)
    return order


def find_embeddings(needle: LabeledGraph, hay: LabeledGraph) -> Iterator[dict[int, int]]:
    """Yield every injective label- and direction-preserving embedding.

    Embeddings map needle node ids to hay node ids, in a deterministic order.
    """
    if needle.n_nodes == 0:
        yield {}
        return
    order = _search_order(needle)
    by_label: dict[str, list[int]] = {}
    for nid, label in hay.nodes:
        by_label.setdefault(label, []).append(nid)
    candidates = {v: by_label.get(needle.label(v), []) for v in order}
    hay_edges = hay.edge_set
    mapping: dict[int, int] = {}
    used: set[int] = set()

    def backtrack(pos: int) -> Iterator[dict[int, int]]:
        if pos == len(order):
            yield dict(mapping)
            return
        v = order[pos]
        for h in candidates[v]:
            if h in used:
                continue
            ok = True
            for w, dflag, el in needle.incident[v]:
                if w not in mapping:
                    continue
                need = (h, mapping[w], el) if dflag == 0 else (mapping[w], h, el)
                if need not in hay_edges:
                    ok = False
                    break
            if not ok:
                continue
            mapping[v] = h
            used.add(h)
            yield from backtrack(pos + 1)
            del mapping[v]
            used.remove(h)

    yield from backtrack(0)


def is_subgraph_isomorphic(
    needle: LabeledGraph, hay: LabeledGraph
) -> tuple[bool, dict[int, int] | None]:
    """Decide embeddability and return one witness embedding if it exists."""
    witness = next(find_embeddings(needle, hay), None)
    return (witness is not None, witness)


# --- transaction line format ----------------------------------------------


def dumps_transactions(graphs: Sequence[LabeledGraph]) -> str:
    """Serialize graphs in the line-based transaction format.

    ``t # <k>`` starts transaction k, ``v <id> <label>`` declares a node and
    ``e <src> <dst> <label>`` a directed edge. Output is deterministic: nodes
    sorted by id, edges by (src, dst, label).
    """
    lines: list[str] = []
    for k, g in enumerate(graphs):
        lines.append(f"t # {k}")
        for nid, label in g.nodes:
            if nid < 0:
                raise GraphError(f"node id {nid} not representable (negative)")
            if not label or any(c.isspace() for c in label):
                raise GraphError(f"label {label!r} not representable (whitespace/empty)")
            lines.append(f"v {nid} {label}")
        for src, dst, label in g.edges:
            if any(c.isspace() for c in label):
                raise GraphError(f"label {label!r} not representable (whitespace)")
            lines.append(f"e {src} {dst} {label}")
    return "\n".join(lines) + ("\n" if lines else "")


def loads_transactions(text: str) -> list[LabeledGraph]:
    """Parse the line-based transaction format; errors carry line numbers."""
    graphs: list[LabeledGraph] = []
    nodes: list[tuple[int, str]] | None = None
    edges: list[tuple[int, int, str]] = []
    start_line = 0

    def flush() -> None:
        if nodes is None:
            return
        try:
            graphs.append(LabeledGraph.of(nodes, edges))
        except GraphError as exc:
            raise GraphError(f"line {start_line}: transaction invalid: {exc}") from exc

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        if kind == "t":
            flush()
            nodes, edges = [], []
            start_line = lineno
        elif kind == "v":
            if nodes is None:
                raise GraphError(f"line {lineno}: node before first transaction")
            if len(parts) != 3:
                raise GraphError(f"line {lineno}: expected 'v <id> <label>'")
            try:
                nid = int(parts[1])
            except ValueError:
                raise GraphError(f"line {lineno}: node id {parts[1]!r} is not an integer")
            if nid < 0:
                raise GraphError(f"line {lineno}: node id must be non-negative")
            nodes.append((nid, parts[2]))
        elif kind == "e":
            if nodes is None:
                raise GraphError(f"line {lineno}: edge before first transaction")
            if len(parts) != 4:
                raise GraphError(f"line {lineno}: expected 'e <src> <dst> <label>'")
            try:
                src, dst = int(parts[1]), int(parts[2])
            except ValueError:
                raise GraphError(f"line {lineno}: edge endpoints must be integers")
            edges.append((src, dst, parts[3]))
        else:
            raise GraphError(f"line {lineno}: unknown record {kind!r}")
    flush()
    return graphs


def save_transactions(graphs: Sequence[LabeledGraph], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_transactions(graphs))


def load_transactions(path) -> list[LabeledGraph]:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_transactions(fh.read())
