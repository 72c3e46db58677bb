import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opminer.graphcore import (
    CanonicalCode,
    GraphError,
    LabeledGraph,
    canonical_code,
    connected_components,
    dumps_transactions,
    find_embeddings,
    is_subgraph_isomorphic,
    loads_transactions,
)
from oracles import (
    components_oracle,
    embeddings_oracle,
    isomorphic_oracle,
    random_connected_graph,
    random_labeled_graph,
)


def g_of(nodes, edges=()):
    return LabeledGraph.of(nodes, edges)


class TestLabeledGraph:
    def test_validation(self):
        with pytest.raises(GraphError):
            g_of([(0, "A"), (0, "B")])
        with pytest.raises(GraphError):
            g_of([(0, "A")], [(0, 1, "x")])
        with pytest.raises(GraphError):
            g_of([(0, "A")], [(0, 0, "x")])
        with pytest.raises(GraphError):
            LabeledGraph(((0, "A"), (1, "B")), ((0, 1, "x"), (0, 1, "x")))

    def test_parallel_edges_with_distinct_labels_allowed(self):
        g = g_of([(0, "A"), (1, "B")], [(0, 1, "x"), (0, 1, "y"), (1, 0, "x")])
        assert g.n_edges == 3

    def test_induced_keeps_internal_edges_only(self):
        g = g_of([(0, "A"), (1, "B"), (2, "C")], [(0, 1, "x"), (1, 2, "y")])
        sub = g.induced([0, 1])
        assert sub.nodes == ((0, "A"), (1, "B"))
        assert sub.edges == ((0, 1, "x"),)


class TestConnectedComponents:
    def test_two_components(self):
        g = g_of([(1, "A"), (2, "B"), (3, "C")], [(1, 2, "x")])
        comps = connected_components(g)
        assert [{n for n, _ in c.nodes} for c in comps] == [{1, 2}, {3}]

    def test_empty_graph(self):
        assert connected_components(g_of([])) == []

    def test_direction_ignored(self):
        g = g_of([(0, "A"), (1, "B"), (2, "C")], [(1, 0, "x"), (1, 2, "x")])
        assert len(connected_components(g)) == 1

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_union_find_oracle(self, seed):
        rng = random.Random(seed)
        g = random_labeled_graph(rng, n_nodes=10, n_labels=3, edge_prob=0.12)
        got = [frozenset(n for n, _ in c.nodes) for c in connected_components(g)]
        assert got == components_oracle(g)

    @pytest.mark.parametrize("seed", range(6))
    def test_partition(self, seed):
        rng = random.Random(100 + seed)
        g = random_labeled_graph(rng, n_nodes=12, n_labels=2, edge_prob=0.1)
        comps = connected_components(g)
        all_nodes = [n for c in comps for n, _ in c.nodes]
        assert sorted(all_nodes) == sorted(n for n, _ in g.nodes)
        assert len(set(all_nodes)) == len(all_nodes)


def all_connected_graphs(n_nodes, node_labels, edge_labels):
    """All connected labeled digraphs on exactly n_nodes nodes (no parallels)."""
    import itertools

    for labels in itertools.product(node_labels, repeat=n_nodes):
        nodes = list(enumerate(labels))
        pairs = [(s, d) for s in range(n_nodes) for d in range(n_nodes) if s != d]
        for flags in itertools.product([None] + list(edge_labels), repeat=len(pairs)):
            edges = [(s, d, l) for (s, d), l in zip(pairs, flags) if l is not None]
            g = LabeledGraph.of(nodes, edges)
            if len(connected_components(g)) == 1:
                yield g


class TestCanonicalCode:
    def test_single_node(self):
        code = canonical_code(g_of([(7, "A")]))
        assert code == CanonicalCode("A", ())
        assert code.text == "A"

    def test_relabelled_copy_same_code(self):
        a = g_of([(0, "A"), (1, "B")], [(0, 1, "x")])
        b = g_of([(5, "B"), (9, "A")], [(9, 5, "x")])
        assert canonical_code(a) == canonical_code(b)

    def test_direction_distinguishes(self):
        fwd = g_of([(0, "A"), (1, "B")], [(0, 1, "x")])
        rev = g_of([(0, "A"), (1, "B")], [(1, 0, "x")])
        assert canonical_code(fwd) != canonical_code(rev)

    def test_disconnected_rejected(self):
        with pytest.raises(GraphError):
            canonical_code(g_of([(0, "A"), (1, "B")]))
        with pytest.raises(GraphError):
            canonical_code(g_of([]))

    def test_antiparallel_pair(self):
        g = g_of([(0, "A"), (1, "A")], [(0, 1, "x"), (1, 0, "x")])
        h = g.relabel_ids({0: 3, 1: 2})
        assert canonical_code(g) == canonical_code(h)

    @pytest.mark.parametrize("seed", range(25))
    def test_invariant_under_id_permutation(self, seed):
        rng = random.Random(seed)
        g = random_connected_graph(rng, n_nodes=rng.randint(2, 7), n_labels=3)
        ids = [n for n, _ in g.nodes]
        shuffled = ids[:]
        rng.shuffle(shuffled)
        h = g.relabel_ids(dict(zip(ids, shuffled)))
        assert canonical_code(g) == canonical_code(h)

    def test_equality_matches_isomorphism_oracle_exhaustive(self):
        # All connected 3-node digraphs over 2 node labels and 1 edge label:
        # code equality must coincide with brute-force isomorphism.
        graphs = list(all_connected_graphs(3, ["A", "B"], ["x"]))
        codes = [canonical_code(g) for g in graphs]
        rng = random.Random(0)
        for _ in range(400):
            i = rng.randrange(len(graphs))
            j = rng.randrange(len(graphs))
            assert (codes[i] == codes[j]) == isomorphic_oracle(graphs[i], graphs[j]), (
                graphs[i],
                graphs[j],
            )

    @pytest.mark.parametrize("seed", range(30))
    def test_equality_matches_isomorphism_oracle_random_4node(self, seed):
        rng = random.Random(1000 + seed)
        a = random_connected_graph(rng, 4, n_labels=2, edge_labels=("x",))
        b = random_connected_graph(rng, 4, n_labels=2, edge_labels=("x",))
        assert (canonical_code(a) == canonical_code(b)) == isomorphic_oracle(a, b)

    def test_total_order_is_deterministic(self):
        a = canonical_code(g_of([(0, "A")]))
        b = canonical_code(g_of([(0, "A"), (1, "B")], [(0, 1, "x")]))
        assert (a < b) != (b < a)


class TestSubgraphIsomorphism:
    def test_single_node_needle(self):
        needle = g_of([(0, "preserved_Component")])
        hay = g_of([(0, "preserved_Component"), (1, "create_Port")], [(0, 1, "create_port")])
        ok, emb = is_subgraph_isomorphic(needle, hay)
        assert ok and emb == {0: 0}

    def test_absent_label(self):
        needle = g_of([(0, "Z")])
        hay = g_of([(0, "A"), (1, "B")], [(0, 1, "x")])
        ok, emb = is_subgraph_isomorphic(needle, hay)
        assert not ok and emb is None

    def test_direction_respected(self):
        needle = g_of([(0, "A"), (1, "B")], [(1, 0, "x")])
        hay = g_of([(0, "A"), (1, "B")], [(0, 1, "x")])
        assert is_subgraph_isomorphic(needle, hay) == (False, None)

    @pytest.mark.parametrize("seed", range(50))
    def test_matches_bruteforce_oracle(self, seed):
        rng = random.Random(2000 + seed)
        needle = random_labeled_graph(rng, rng.randint(1, 6), 2, 0.3)
        hay = random_labeled_graph(rng, rng.randint(1, 10), 2, 0.3)
        expected = embeddings_oracle(needle, hay)
        got = list(find_embeddings(needle, hay))
        assert sorted(map(sorted, (e.items() for e in got))) == sorted(
            map(sorted, (e.items() for e in expected))
        )
        ok, emb = is_subgraph_isomorphic(needle, hay)
        assert ok == bool(expected)
        if ok:
            assert emb in expected

    @pytest.mark.parametrize("seed", range(15))
    def test_random_deletion_stays_embeddable(self, seed):
        rng = random.Random(3000 + seed)
        g = random_connected_graph(rng, 8, n_labels=3)
        keep_edges = [e for e in g.edges if rng.random() < 0.7]
        keep_nodes = {n for e in keep_edges for n in (e[0], e[1])} or {g.nodes[0][0]}
        sub = LabeledGraph.of([(n, g.label(n)) for n in keep_nodes], keep_edges)
        ok, _ = is_subgraph_isomorphic(sub, g)
        assert ok


class TestTransactionFormat:
    def test_round_trip_bit_exact(self):
        graphs = [
            g_of([(0, "A"), (1, "B")], [(0, 1, "x"), (1, 0, "y")]),
            g_of([(0, "C")]),
        ]
        text = dumps_transactions(graphs)
        parsed = loads_transactions(text)
        assert parsed == graphs
        assert dumps_transactions(parsed) == text

    def test_format_shape(self):
        text = dumps_transactions([g_of([(0, "A"), (2, "B")], [(0, 2, "ref")])])
        assert text == "t # 0\nv 0 A\nv 2 B\ne 0 2 ref\n"

    def test_parse_errors_name_lines(self):
        with pytest.raises(GraphError, match="line 1"):
            loads_transactions("v 0 A\n")
        with pytest.raises(GraphError, match="line 2"):
            loads_transactions("t # 0\nv x A\n")
        with pytest.raises(GraphError, match="line 3"):
            loads_transactions("t # 0\nv 0 A\nq 1 2\n")
        with pytest.raises(GraphError, match="line 1"):
            loads_transactions("t # 0\nv 0 A\ne 0 1 x\n")

    def test_whitespace_labels_rejected_on_write(self):
        with pytest.raises(GraphError):
            dumps_transactions([g_of([(0, "a b")])])

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_random_round_trip(self, seed):
        rng = random.Random(seed)
        graphs = [
            random_labeled_graph(rng, rng.randint(1, 6), 3, 0.3)
            for _ in range(rng.randint(1, 4))
        ]
        assert loads_transactions(dumps_transactions(graphs)) == graphs
