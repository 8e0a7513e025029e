"""Chain tests: contraction cores, spanner embeddings, lifting, churn."""

import random

import pytest

from dynflow.chain import Chain, ChainError, CoreGraph, SpannerWithEmbedding
from dynflow.graph import Circulation, DynGraph, divergence
from dynflow.lsd import mwu_build_collection
from dynflow.params import Params


def _derived(n, m, k=2, C=4, U=4, **kw):
    return Params(k=k, **kw).resolve(n, m, C, U)


def _cycle_values(graph, cycle):
    g = 0.0
    l = 0.0
    for eid, sign in cycle:
        e = graph.edges[eid]
        g += sign * e.gradient
        l += e.length
    return g, l


def _assert_closed(graph, cycle):
    circ = Circulation()
    for eid, sign in cycle:
        circ.add_scaled({eid: sign})
    div = divergence(graph, circ)
    assert all(v == 0 for v in div.values()), f"open cycle {cycle}"


def _check_all_candidates(chain, graph):
    """Every sparsifier cycle lifts to a closed base cycle, keeps its
    gradient exactly, and never quotes a better ratio than it delivers."""
    count = 0
    for owner, off in chain.candidates():
        quote_g, quote_l = _cycle_values(chain.quote_graph(owner),
                                         chain.cycle_at(owner, off))
        lifted = chain.lift(owner, chain.cycle_at(owner, off))
        _assert_closed(graph, lifted)
        true_g, true_l = _cycle_values(graph, lifted)
        assert true_g == pytest.approx(quote_g, abs=1e-9)
        assert true_l <= quote_l + 1e-9 * max(1.0, quote_l)
        if quote_g < 0:
            assert true_g / true_l <= quote_g / quote_l + 1e-9
        count += 1
    return count


def _random_graph(rng, n, m, grad_lo=-3.0, grad_hi=3.0):
    g = DynGraph(n=n, m_cap=m + 64, C=8, U=8)
    for _ in range(m):
        a = rng.randrange(n)
        b = rng.randrange(n)
        g.insert_edge(a, b, rng.randint(0, 8), rng.randint(-8, 8),
                      gradient=rng.uniform(grad_lo, grad_hi),
                      length=rng.choice([0.5, 1.0, 1.5, 2.0, 3.0]))
    return g


def test_core_values_and_lift_by_hand():
    # path 0-1-2 plus a chord (0,2); unit gradients and lengths
    g = DynGraph(n=4, m_cap=8, C=4, U=4)
    t1 = g.insert_edge(0, 1, 1, 1, gradient=1.0, length=1.0)
    t2 = g.insert_edge(1, 2, 1, 1, gradient=1.0, length=1.0)
    off = g.insert_edge(0, 2, 1, 1, gradient=1.0, length=1.0)
    d = _derived(4, 3)
    assert d.d_s == 0 and d.d_t == 1

    chain = Chain(g, d)
    chain.check_invariants()
    root = chain.root
    assert len(root.forests) == 1
    forest = root.forests[0]
    core = root.cores[0]

    # carving splits the 3-vertex path: piece {0} and piece {1, 2}
    assert forest.forest_edges == {t2}
    assert forest.piece_of(1) == forest.piece_of(2)
    assert forest.piece_of(0) != forest.piece_of(1)

    ce = core.graph.edges
    assert t2 in core.contracted
    assert ce[t2].gradient == 0.0
    assert ce[t2].length == pytest.approx(2.0)      # stretch 2 via root path
    assert ce[t1].gradient == pytest.approx(1.0)
    assert ce[t1].length == pytest.approx(1.0)
    # chord gradient absorbs the path potential: 1 + psi(2) - psi(0) = 0
    assert ce[off].gradient == pytest.approx(0.0)
    assert ce[off].length == pytest.approx(2.0)

    spanner = root.spanners[0]
    assert spanner.in_spanner == {t1}
    assert set(spanner.embedding) == {off}

    cands = list(chain.candidates())
    assert len(cands) == 1
    owner, off_eid = cands[0]
    assert off_eid == off
    cycle = chain.cycle_at(owner, off_eid)
    assert ("%s" % cycle) and cycle == [(off, 1), (t1, -1)]

    lifted = chain.lift(owner, cycle)
    assert lifted == [(off, 1), (t2, -1), (t1, -1)]
    _assert_closed(g, lifted)
    tg, tl = _cycle_values(g, lifted)
    assert tg == pytest.approx(-1.0)
    assert tl == pytest.approx(3.0)

    leaf = chain.leaf_for(owner)
    assert leaf.is_leaf
    assert chain.leaf_forest_edges(leaf) == [t2]


def test_static_build_random_invariants():
    rng = random.Random(7)
    for trial in range(12):
        n = rng.randint(6, 16)
        m = rng.randint(n, 3 * n)
        g = _random_graph(rng, n, m)
        chain = Chain(g, _derived(n, m))
        chain.check_invariants()
        _check_all_candidates(chain, g)


def test_spanner_level_present_when_dense():
    rng = random.Random(11)
    n, m = 8, 24
    g = _random_graph(rng, n, m)
    d = _derived(n, m)
    assert d.d_s == 1
    chain = Chain(g, d)
    chain.check_invariants()
    assert len(chain.level_spanners) == 1
    owners = {o[0] for o, _ in chain.candidates()}
    assert 'level' in owners
    # level graphs shrink and mirror base values
    assert len(chain.level_graphs[1]) <= len(g)
    for eid, e in chain.level_graphs[1].edges.items():
        b = g.edges[eid]
        assert (e.tail, e.head, e.gradient, e.length) == \
            (b.tail, b.head, b.gradient, b.length)
    _check_all_candidates(chain, g)


def test_leaf_union_forest_is_acyclic():
    rng = random.Random(23)
    for trial in range(6):
        n = rng.randint(8, 14)
        m = rng.randint(n, 2 * n)
        g = _random_graph(rng, n, m)
        chain = Chain(g, _derived(n, m))
        for leaf in chain.leaves():
            edges = chain.leaf_forest_edges(leaf)
            assert len(edges) == len(set(edges))
            parent = list(range(g.n))

            def find(x):
                while parent[x] != x:
                    parent[x] = parent[parent[x]]
                    x = parent[x]
                return x

            for eid in edges:
                e = g.edges[eid]
                ra, rb = find(e.tail), find(e.head)
                assert ra != rb, "leaf forest union holds a cycle"
                parent[ra] = rb


def test_insert_cascades_and_stays_consistent():
    rng = random.Random(41)
    n = 10
    g = _random_graph(rng, n, 14)
    chain = Chain(g, _derived(n, 40))
    for _ in range(26):
        a, b = rng.randrange(n), rng.randrange(n)
        eid = g.insert_edge(a, b, rng.randint(0, 8), rng.randint(-8, 8),
                            gradient=rng.uniform(-3, 3),
                            length=rng.choice([0.5, 1.0, 2.0]))
        chain.insert(eid)
        chain.check_invariants()
    assert _check_all_candidates(chain, g) > 0


def test_delete_rebuilds_or_repairs():
    rng = random.Random(59)
    n = 10
    g = _random_graph(rng, n, 24)
    chain = Chain(g, _derived(n, 24))
    ids = list(g.edges)
    rng.shuffle(ids)
    for eid in ids[:16]:
        g.delete_edge(eid)
        chain.delete(eid)
        chain.check_invariants()
        _check_all_candidates(chain, g)


def test_value_refresh_is_delete_then_reinsert():
    rng = random.Random(73)
    n = 9
    g = _random_graph(rng, n, 18)
    chain = Chain(g, _derived(n, 60))
    for _ in range(12):
        eid = rng.choice(list(g.edges))
        e = g.edges[eid]
        e.gradient = rng.uniform(-3, 3)
        e.length = rng.choice([0.5, 1.0, 2.0, 4.0])
        chain.delete(eid)
        chain.insert(eid)
        chain.check_invariants()
    _check_all_candidates(chain, g)


def test_churn_triggers_rebuilds():
    rng = random.Random(97)
    n = 12
    g = _random_graph(rng, n, 20)
    chain = Chain(g, _derived(n, 80))
    events = []
    chain.before_rebuild = lambda node: events.append(node.depth)
    for step in range(60):
        if g.edges and rng.random() < 0.4:
            eid = rng.choice(list(g.edges))
            g.delete_edge(eid)
            chain.delete(eid)
        else:
            a, b = rng.randrange(n), rng.randrange(n)
            eid = g.insert_edge(a, b, rng.randint(0, 8), rng.randint(-8, 8),
                                gradient=rng.uniform(-3, 3),
                                length=rng.choice([0.5, 1.0, 2.0]))
            chain.insert(eid)
        if step % 10 == 9:
            chain.check_invariants()
            _check_all_candidates(chain, g)
    assert chain.rebuild_count > 0
    assert chain.rebuild_count == len(events)


def test_core_rejects_forest_edge_delete():
    g = DynGraph(n=4, m_cap=8, C=4, U=4)
    g.insert_edge(0, 1, 1, 1, gradient=1.0, length=1.0)
    t2 = g.insert_edge(1, 2, 1, 1, gradient=1.0, length=1.0)
    g.insert_edge(0, 2, 1, 1, gradient=1.0, length=1.0)
    root = Chain(g, _derived(4, 3)).root
    with pytest.raises(ChainError):
        root.cores[0].delete_plain(t2)


def test_lift_detects_cross_piece_stitch():
    g = DynGraph(n=6, m_cap=10, C=4, U=4)
    e01 = g.insert_edge(0, 1, 1, 1, gradient=1.0, length=1.0)
    e23 = g.insert_edge(2, 3, 1, 1, gradient=1.0, length=1.0)
    forests = mwu_build_collection(g, _derived(6, 2))
    core = CoreGraph(g, forests[0])
    # a fake cycle whose hop endpoints never meet in one piece
    with pytest.raises(ChainError):
        core.lift_cycle([(e01, 1), (e23, 1)])


def test_spanner_promotion_on_delete():
    g = DynGraph(n=5, m_cap=16, C=4, U=4, validate=False)
    a = g.insert_edge(0, 1, 1, 1, gradient=0.0, length=1.0)
    b = g.insert_edge(1, 2, 1, 1, gradient=0.0, length=1.0)
    c = g.insert_edge(0, 2, 1, 1, gradient=0.0, length=1.0)
    sp = SpannerWithEmbedding(g, gamma=3)
    assert sp.in_spanner == {a, b}
    assert set(sp.embedding) == {c}
    g.delete_edge(a)
    promoted = sp.delete_edge(a)
    assert promoted == [c]
    assert c in sp.in_spanner
    sp.check_invariants()
