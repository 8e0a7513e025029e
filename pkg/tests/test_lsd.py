from __future__ import annotations

import random

import pytest

from dynflow.graph import DynGraph
from dynflow.lsd import (
    LsdError,
    build_forest,
    collection_averages,
    mwu_build_collection,
)
from dynflow.params import Params


def _random_graph(rng, n, m, lmin=0.25, lmax=4.0):
    g = DynGraph(n=n, m_cap=m + 8, C=8, U=8)
    for _ in range(m):
        eid = g.insert_edge(rng.randrange(n), rng.randrange(n), 1, 0)
        g.edges[eid].gradient = rng.uniform(-4, 4)
        g.edges[eid].length = rng.uniform(lmin, lmax)
    return g


def _unit_weights(g):
    return {eid: 1.0 for eid in g.edges}


def test_path_graph_structure():
    g = DynGraph(n=6, m_cap=5, C=1, U=1)
    eids = [g.insert_edge(i, i + 1, 1, 0) for i in range(5)]
    for eid in eids:
        g.edges[eid].length = 1.0
    f = build_forest(g, _unit_weights(g), piece_target=3)
    f.check_invariants()
    assert f.tree_edges == set(eids)
    # piece roots carry zero distances
    for pid, r in f.root.items():
        assert f.root_distance(r) == 0.0
        assert f.psi(r) == 0.0
    # every vertex reaches its root along the forest
    for v in range(6):
        path = f.root_path(v)
        assert sum(g.edges[eid].length for eid, _ in path) == pytest.approx(
            f.root_distance(v))


def test_forest_edge_bound_at_least_two():
    rng = random.Random(0)
    for _ in range(20):
        g = _random_graph(rng, 8, 14)
        f = build_forest(g, _unit_weights(g), piece_target=4)
        f.check_invariants()
        for eid in f.forest_edges:
            assert f.stretch_bound[eid] >= 2.0 - 1e-12
        for eid in g.edges:
            assert f.stretch_bound[eid] >= 1.0 - 1e-12
            assert f.stretch_bound[eid] >= f.definition_stretch(eid) - 1e-9


def test_heavy_edge_joins_tree():
    g = DynGraph(n=3, m_cap=3, C=1, U=1)
    a = g.insert_edge(0, 1, 1, 0)
    b = g.insert_edge(1, 2, 1, 0)
    c = g.insert_edge(2, 0, 1, 0)
    for eid in (a, b, c):
        g.edges[eid].length = 1.0
    weights = {a: 1.0, b: 1.0, c: 1e9}
    f = build_forest(g, weights, piece_target=8)
    assert c in f.tree_edges


def test_delete_splits_piece_and_keeps_bounds_valid():
    rng = random.Random(7)
    for trial in range(30):
        g = _random_graph(rng, 10, 18)
        f = build_forest(g, _unit_weights(g), piece_target=5)
        forest_edges = sorted(f.forest_edges)
        rng.shuffle(forest_edges)
        for eid in forest_edges[:4]:
            e = g.edges[eid]
            before = {f.piece_of(e.tail), f.piece_of(e.head)}
            assert len(before) == 1
            new_pid = f.handle_delete(eid)
            g.delete_edge(eid)
            assert new_pid is not None
            assert f.piece_of(e.tail) != f.piece_of(e.head)
            f.check_invariants()


def test_delete_nonforest_edge_is_quiet():
    rng = random.Random(3)
    g = _random_graph(rng, 8, 16)
    f = build_forest(g, _unit_weights(g), piece_target=4)
    off = [eid for eid in g.edges if eid not in f.forest_edges]
    if not off:
        pytest.skip("random draw had no off-forest edge")
    labels = dict(f.label)
    assert f.handle_delete(off[0]) is None
    g.delete_edge(off[0])
    assert f.label == labels
    f.check_invariants()


def test_register_insert_freezes_live_bound():
    rng = random.Random(5)
    g = _random_graph(rng, 8, 12)
    f = build_forest(g, _unit_weights(g), piece_target=4)
    eid = g.insert_edge(0, 7, 1, 0)
    g.edges[eid].length = 0.5
    f.register_insert(eid)
    want = 1.0 + (f.root_distance(0) + f.root_distance(7)) / 0.5
    assert f.stretch_bound[eid] == pytest.approx(want)
    f.check_invariants()


def test_psi_telescopes_along_root_paths():
    rng = random.Random(11)
    g = _random_graph(rng, 9, 15)
    f = build_forest(g, _unit_weights(g), piece_target=4)
    for v in range(9):
        total = 0.0
        for eid, sign in f.root_path(v):
            total += sign * g.edges[eid].gradient
        assert total == pytest.approx(f.psi(v), abs=1e-9)


def test_mwu_collection_meets_target():
    rng = random.Random(21)
    params = Params(k=2)
    for _ in range(10):
        g = _random_graph(rng, 12, 30)
        derived = params.resolve(n=12, m=30, C=8, U=8)
        forests = mwu_build_collection(g, derived)
        assert 1 <= len(forests) <= derived.t_budget
        avgs = collection_averages(g, forests)
        assert max(avgs.values()) <= derived.beta_avg + 1e-9
        for f in forests:
            f.check_invariants()


def test_mwu_deterministic():
    rng = random.Random(2)
    g = _random_graph(rng, 10, 20)
    derived = Params(k=2).resolve(n=10, m=20, C=8, U=8)
    a = mwu_build_collection(g, derived)
    b = mwu_build_collection(g, derived)
    assert len(a) == len(b)
    for fa, fb in zip(a, b):
        assert fa.forest_edges == fb.forest_edges
        assert fa.label == fb.label
        assert fa.stretch_bound == fb.stretch_bound


def test_mwu_upweights_bad_edge_into_tree():
    # a short parallel edge is non-tree in the first build; its huge
    # stretch must push it into a later forest
    g = DynGraph(n=4, m_cap=6, C=1, U=1)
    chain = [g.insert_edge(i, i + 1, 1, 0) for i in range(3)]
    for eid in chain:
        g.edges[eid].length = 1.0
    short = g.insert_edge(0, 3, 1, 0)
    g.edges[short].length = 1e-6
    derived = Params(k=2, c_avg=0.01).resolve(n=4, m=4, C=1, U=1)
    try:
        forests = mwu_build_collection(g, derived)
    except LsdError:
        forests = None
    if forests is not None:
        assert any(short in f.tree_edges for f in forests)


def test_empty_and_self_loop_graphs():
    g = DynGraph(n=3, m_cap=2, C=1, U=1)
    f = build_forest(g, {}, piece_target=2)
    f.check_invariants()
    assert f.forest_edges == set()
    loop = g.insert_edge(1, 1, 1, 0)
    f2 = build_forest(g, _unit_weights(g), piece_target=2)
    f2.check_invariants()
    assert loop not in f2.tree_edges
    assert f2.stretch_bound[loop] == pytest.approx(1.0)
