"""Exact frequent connected subgraph mining over graph transactions.

Pattern growth proceeds level by level: level k holds every frequent pattern
with k edges (level 0 is single nodes), and level k+1 candidates are built by
extending stored pattern embeddings one edge at a time. Support counts
distinct transactions, never embeddings. Candidates are deduplicated by
canonical code; the first generator of a code supplies its complete embedding
set, since extending all embeddings of a direct subgraph by the missing edge
reaches every embedding of the supergraph. The result is exactly the set of
connected subgraphs (up to isomorphism) contained in at least ``threshold``
transactions, linked into a subgraph lattice.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .graphcore import (
    CanonicalCode,
    LabeledGraph,
    canonical_code,
    connected_components,
    find_embeddings,
)


class MinerError(ValueError):
    """Invalid mining input or configuration."""


class MiningBudgetExceeded(RuntimeError):
    """Wall-clock budget ran out; carries the patterns finished so far."""

    def __init__(self, budget_s: float, partial: list["Pattern"]):
        super().__init__(f"mining exceeded the {budget_s:g}s budget")
        self.partial = partial


@dataclass(frozen=True)
class TransactionDB:
    """Connected graph transactions plus a source tag per transaction."""

    transactions: tuple[LabeledGraph, ...]
    tags: tuple[str, ...] = ()

    @classmethod
    def of(cls, transactions: Iterable[LabeledGraph], tags: Iterable[str] | None = None):
        txns = tuple(transactions)
        tag_tuple = tuple(tags) if tags is not None else tuple("" for _ in txns)
        return cls(txns, tag_tuple)

    def __post_init__(self) -> None:
        if len(self.tags) != len(self.transactions):
            raise MinerError("one source tag per transaction required")
        for idx, txn in enumerate(self.transactions):
            if txn.n_nodes == 0:
                raise MinerError(f"transaction {idx} is empty")
            if len(connected_components(txn)) != 1:
                raise MinerError(f"transaction {idx} is not connected")

    def __len__(self) -> int:
        return len(self.transactions)


@dataclass(frozen=True)
class Pattern:
    """A mined connected subgraph with transaction support and lattice links.

    ``children`` are canonical codes of direct subgraphs (one edge smaller),
    ``parents`` codes of direct supergraphs (one edge larger); both restricted
    to patterns in the same mined set.
    """

    graph: LabeledGraph
    code: CanonicalCode
    support: int
    children: tuple[CanonicalCode, ...] = ()
    parents: tuple[CanonicalCode, ...] = ()

    @property
    def size(self) -> int:
        return self.graph.size


@dataclass(frozen=True)
class MinerConfig:
    """Knobs bounding a mining run; defaults suit desk-scale inputs.

    ``max_embeddings_per_pattern`` caps stored embedding lists; patterns over
    the cap fall back to re-enumerating embeddings on demand, trading time for
    memory without affecting the mined set.
    """

    time_budget_s: float = 300.0
    max_pattern_edges: int | None = None
    max_embeddings_per_pattern: int | None = None


# internal: embeddings of one pattern, grouped per transaction id; an
# embedding is a tuple of transaction node ids aligned with pattern node ids
# 0..n-1. ``None`` means the store overflowed and embeddings are re-derived.
_EmbStore = dict[int, list[tuple[int, ...]]]


@dataclass
class _Work:
    graph: LabeledGraph
    code: CanonicalCode | None  # filled once the candidate passes the threshold
    tids: frozenset[int]
    embeddings: _EmbStore | None


def _stream_embeddings(pattern: LabeledGraph, txn: LabeledGraph) -> Iterator[tuple[int, ...]]:
    order = [n for n, _ in pattern.nodes]
    for mapping in find_embeddings(pattern, txn):
        yield tuple(mapping[v] for v in order)


def _embeddings_in(work: _Work, tid: int, txn: LabeledGraph) -> Iterator[tuple[int, ...]]:
    if work.embeddings is not None:
        yield from work.embeddings.get(tid, ())
    else:
        yield from _stream_embeddings(work.graph, txn)


def _level0(db: TransactionDB) -> dict[str, _EmbStore]:
    by_label: dict[str, _EmbStore] = {}
    for tid, txn in enumerate(db.transactions):
        for nid, label in txn.nodes:
            by_label.setdefault(label, {}).setdefault(tid, []).append((nid,))
    return by_label


_PERM_KEY_LIMIT = 2000


def _dedup_key(g: LabeledGraph) -> tuple:
    """Complete isomorphism key for candidate deduplication.

    Uses the permutation-minimum edge encoding within label classes when the
    class sizes keep that cheap, falling back to the DFS canonical code
    otherwise. The choice depends only on the label multiset, so every member
    of an isomorphism class picks the same branch.
    """
    groups: dict[str, list[int]] = {}
    for nid, label in g.nodes:
        groups.setdefault(label, []).append(nid)
    cost = 1
    for ids in groups.values():
        cost *= math.factorial(len(ids))
        if cost > _PERM_KEY_LIMIT:
            return ("dfs", canonical_code(g))
    labels_sorted = sorted(groups)
    label_tuple = tuple(l for l in labels_sorted for _ in groups[l])
    best = None
    for combo in itertools.product(
        *(itertools.permutations(groups[l]) for l in labels_sorted)
    ):
        index: dict[int, int] = {}
        pos = 0
        for perm in combo:
            for nid in perm:
                index[nid] = pos
                pos += 1
        enc = tuple(sorted((index[s], index[d], l) for s, d, l in g.edges))
        if best is None or enc < best:
            best = enc
    return ("perm", label_tuple, best)


def _extend_one(
    graph: LabeledGraph, desc: tuple, next_node_id: int
) -> LabeledGraph:
    """Pattern graph plus one descriptor edge (and node, for forward growth)."""
    src, dst, elabel, new_label = desc
    nodes = list(graph.nodes)
    if src == -1:
        nodes.append((next_node_id, new_label))
        edge = (next_node_id, dst, elabel)
    elif dst == -1:
        nodes.append((next_node_id, new_label))
        edge = (src, next_node_id, elabel)
    else:
        edge = (src, dst, elabel)
    return LabeledGraph.of(nodes, list(graph.edges) + [edge])


def _mine_raw(
    db: TransactionDB,
    threshold: int,
    config: MinerConfig,
    *,
    trees_only: bool = False,
    max_nodes: int | None = None,
) -> list[tuple[LabeledGraph, CanonicalCode, int]]:
    """Level-wise growth shared by full mining and the tree-restricted pass."""
    deadline = time.monotonic() + config.time_budget_s
    results: list[tuple[LabeledGraph, CanonicalCode, int]] = []

    def check_budget() -> None:
        if time.monotonic() > deadline:
            raise MiningBudgetExceeded(config.time_budget_s, _finalize(results))

    cap = config.max_embeddings_per_pattern
    level0 = _level0(db)
    frontier: list[_Work] = []
    for label in sorted(level0):
        store = level0[label]
        tids = frozenset(store)
        if len(tids) >= threshold:
            g = LabeledGraph.of([(0, label)])
            frontier.append(_Work(g, canonical_code(g), tids, store))
    results.extend((w.graph, w.code, len(w.tids)) for w in frontier)

    while frontier:
        check_budget()
        candidates: dict[tuple, _Work] = {}
        for work in sorted(frontier, key=lambda w: w.code.sort_key):
            check_budget()
            if config.max_pattern_edges is not None and work.graph.n_edges >= config.max_pattern_edges:
                continue
            pat_nodes = [n for n, _ in work.graph.nodes]
            next_id = max(pat_nodes) + 1
            # descriptor -> per-tid extended embeddings
            ext: dict[tuple, dict[int, list[tuple[int, ...]]]] = {}
            for tid in sorted(work.tids):
                check_budget()
                txn = db.transactions[tid]
                incident = txn.incident
                labels = txn.label_map
                for emb in _embeddings_in(work, tid, txn):
                    image = dict(zip(pat_nodes, emb))
                    inverse = {v: k for k, v in image.items()}
                    covered = {
                        (image[s], image[d], l) for s, d, l in work.graph.edges
                    }
                    for pnode, tnode in image.items():
                        for other, dflag, el in incident[tnode]:
                            triple = (tnode, other, el) if dflag == 0 else (other, tnode, el)
                            if triple in covered:
                                continue
                            if other in inverse:
                                if trees_only:
                                    continue  # closing an edge creates a cycle
                                # count each closing edge once, from its source side
                                if dflag != 0:
                                    continue
                                desc = (pnode, inverse[other], el, "")
                                new_emb = emb
                            else:
                                if max_nodes is not None and len(pat_nodes) >= max_nodes:
                                    continue
                                if dflag == 0:
                                    desc = (pnode, -1, el, labels[other])
                                else:
                                    desc = (-1, pnode, el, labels[other])
                                new_emb = emb + (other,)
                            ext.setdefault(desc, {}).setdefault(tid, []).append(new_emb)
            for desc in sorted(ext):
                check_budget()
                if len(ext[desc]) < threshold:
                    continue  # cannot be frequent: tids come from one generator
                grown = _extend_one(work.graph, desc, next_id)
                key = _dedup_key(grown)
                if key in candidates:
                    continue  # first generator already supplied all embeddings
                store: _EmbStore = {
                    tid: sorted(set(embs)) for tid, embs in ext[desc].items()
                }
                total = sum(len(v) for v in store.values())
                candidates[key] = _Work(
                    grown,
                    None,
                    frozenset(store),
                    None if cap is not None and total > cap else store,
                )
        frontier = []
        for key in sorted(candidates):
            work = candidates[key]
            if len(work.tids) >= threshold:
                work.code = canonical_code(work.graph)
                frontier.append(work)
        frontier.sort(key=lambda w: w.code.sort_key)
        results.extend((w.graph, w.code, len(w.tids)) for w in frontier)
    return results


def _direct_subgraphs(g: LabeledGraph) -> list[LabeledGraph]:
    """Connected subgraphs obtainable by removing exactly one edge.

    Removing an edge may strand nodes or split the graph; only resulting
    components that kept every other edge count as direct subgraphs.
    """
    out = []
    for drop in g.edges:
        rest = LabeledGraph.of(g.nodes, [e for e in g.edges if e != drop])
        for comp in connected_components(rest):
            if comp.n_edges == g.n_edges - 1:
                out.append(comp)
    return out


def _finalize(raw: list[tuple[LabeledGraph, CanonicalCode, int]]) -> list[Pattern]:
    """Order patterns deterministically and complete the subgraph lattice."""
    ordered = sorted(raw, key=lambda r: (r[0].n_edges, r[1].sort_key))
    by_code = {code: i for i, (_, code, _) in enumerate(ordered)}
    children: list[set[CanonicalCode]] = [set() for _ in ordered]
    parents: list[set[CanonicalCode]] = [set() for _ in ordered]
    for idx, (graph, code, _) in enumerate(ordered):
        for sub in _direct_subgraphs(graph):
            sub_code = canonical_code(sub)
            j = by_code.get(sub_code)
            if j is not None:
                children[idx].add(sub_code)
                parents[j].add(code)
    return [
        Pattern(
            graph,
            code,
            support,
            children=tuple(sorted(children[i], key=lambda c: c.sort_key)),
            parents=tuple(sorted(parents[i], key=lambda c: c.sort_key)),
        )
        for i, (graph, code, support) in enumerate(ordered)
    ]


def mine(
    db: TransactionDB,
    threshold: int,
    *,
    strict: bool = False,
    config: MinerConfig = MinerConfig(),
) -> list[Pattern]:
    """All connected subgraphs contained in at least ``threshold`` transactions.

    Support counts distinct transactions. The result is deduplicated by
    canonical code, sorted by (edge count, code), and carries complete direct
    sub/supergraph links among the returned patterns. A threshold above the
    transaction count yields an empty result, or raises in strict mode.
    Raises MiningBudgetExceeded (with partial results) past the time budget.
    """
    if threshold < 1:
        raise MinerError("threshold must be a positive integer")
    if threshold > len(db):
        if strict:
            raise MinerError(
                f"threshold {threshold} exceeds transaction count {len(db)}"
            )
        return []
    return _finalize(_mine_raw(db, threshold, config))


@dataclass(frozen=True)
class CalibrationConfig:
    """Threshold search bounds: smallest t whose frequent-subtree count fits.

    Counts frequent subtrees with node count in ``size_range`` per candidate
    threshold (one exact tree-restricted pass at ``t_min``) and returns the
    first t in [t_min, t_max] keeping the count at or under ``budget``;
    ``t_max`` falls back to the transaction count when unset.
    """

    t_min: int = 2
    t_max: int | None = None
    size_range: tuple[int, int] = (3, 8)
    budget: int = 100
    miner: MinerConfig = field(default_factory=MinerConfig)


def calibrate_threshold(db: TransactionDB, config: CalibrationConfig = CalibrationConfig()) -> int:
    """Pick the mining threshold via an exact frequent-subtree pre-pass."""
    if len(db) == 0:
        raise MinerError("cannot calibrate on an empty transaction database")
    t_max = len(db) if config.t_max is None else config.t_max
    if t_max < config.t_min:
        return config.t_min
    lo, hi = config.size_range
    raw = _mine_raw(
        db, config.t_min, config.miner, trees_only=True, max_nodes=hi
    )
    supports = [s for g, _, s in raw if lo <= g.n_nodes <= hi]
    for t in range(config.t_min, t_max + 1):
        if sum(1 for s in supports if s >= t) <= config.budget:
            return t
    return t_max


def size_at_threshold(db: TransactionDB, threshold: int) -> int:
    """Node count of the t-th largest transaction (descending by node count)."""
    if not 1 <= threshold <= len(db):
        raise MinerError(
            f"threshold {threshold} out of range 1..{len(db)}"
        )
    sizes = sorted((t.n_nodes for t in db.transactions), reverse=True)
    return sizes[threshold - 1]
