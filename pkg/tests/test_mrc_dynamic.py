"""Dynamic min-ratio handle: exactness when collapsed, quality when chained."""

import random

import pytest

from dynflow.graph import DynGraph, divergence
from dynflow.mrc_dynamic import MrcHandle, NegCycleMonitor, cycle_circulation
from dynflow.mrc_exact import min_ratio_cycle_exact
from dynflow.params import Params


def _random_graph(rng, n, m):
    g = DynGraph(n=n, m_cap=m + 256, C=8, U=8)
    for _ in range(m):
        a = rng.randrange(n)
        b = rng.randrange(n)
        g.insert_edge(a, b, rng.randint(0, 8), rng.randint(-8, 8),
                      gradient=rng.uniform(-3.0, 3.0),
                      length=rng.choice([0.5, 1.0, 1.5, 2.0, 3.0]))
    return g


def _insert_random(rng, g, handle):
    a = rng.randrange(g.n)
    b = rng.randrange(g.n)
    eid = g.insert_edge(a, b, rng.randint(0, 8), rng.randint(-8, 8),
                        gradient=rng.uniform(-3.0, 3.0),
                        length=rng.choice([0.5, 1.0, 2.0]))
    handle.insert(eid)
    return eid


def _assert_closed(graph, cycle):
    div = divergence(graph, cycle_circulation(cycle.edges))
    assert all(abs(v) < 1e-9 for v in div.values())


def test_collapsed_query_matches_exact():
    rng = random.Random(5)
    n = 10
    g = _random_graph(rng, n, 14)
    d = Params(k=64).resolve(n, 80, 8, 8)
    assert d.d_s == 0 and d.d_t == 0
    handle = MrcHandle(g, d)
    for step in range(40):
        if g.edges and rng.random() < 0.35:
            eid = rng.choice(list(g.edges))
            g.delete_edge(eid)
            handle.delete(eid)
        else:
            _insert_random(rng, g, handle)
        found = handle.query(rel_tol=1e-9)
        opt = min_ratio_cycle_exact(g, rel_tol=1e-9)
        if opt is None or opt.ratio >= -1e-12:
            assert found is None or found.ratio >= -1e-9
        else:
            assert found is not None
            assert found.ratio == pytest.approx(opt.ratio, rel=1e-6)
            _assert_closed(g, found)


def test_chained_query_meets_kappa_quality():
    rng = random.Random(13)
    for trial in range(8):
        n = rng.randint(10, 18)
        m = rng.randint(n, 3 * n)
        g = _random_graph(rng, n, m)
        d = Params(k=2).resolve(n, m, 8, 8)
        assert d.d_t >= 1
        handle = MrcHandle(g, d)
        for step in range(10):
            if g.edges and rng.random() < 0.3:
                eid = rng.choice(list(g.edges))
                g.delete_edge(eid)
                handle.delete(eid)
            else:
                _insert_random(rng, g, handle)
            found = handle.query()
            opt = min_ratio_cycle_exact(g, rel_tol=1e-9)
            if opt is not None and opt.ratio < -1e-12:
                assert found is not None, "missed a negative cycle"
                assert found.ratio <= d.kappa * opt.ratio + 1e-12
                _assert_closed(g, found)
                bound = d.gamma_length * (d.d_t + 1) + 1
                assert found.meta['off_union'] <= bound


def test_query_below_two_sided_contract():
    rng = random.Random(29)
    n = 12
    g = _random_graph(rng, n, 30)
    d = Params(k=2).resolve(n, 30, 8, 8)
    handle = MrcHandle(g, d)
    for tau in (-1.5, -0.6, -0.2, -0.05):
        res = handle.query_below(tau)
        opt = min_ratio_cycle_exact(g, rel_tol=1e-9)
        if res is not None:
            assert res.ratio <= tau + 1e-9
            _assert_closed(g, res)
        else:
            # quote space is clean below tau, so the optimum cannot be
            # deeper than tau by more than the quality factor
            if opt is not None:
                assert opt.ratio > tau / d.kappa * (1 + 1e-9) - 1e-9


def test_collapsed_query_below_is_exact():
    rng = random.Random(31)
    n = 9
    g = _random_graph(rng, n, 16)
    d = Params(k=64).resolve(n, 80, 8, 8)
    handle = MrcHandle(g, d)
    for tau in (-2.0, -0.8, -0.3, -0.1):
        res = handle.query_below(tau)
        opt = min_ratio_cycle_exact(g, rel_tol=1e-12)
        below = opt is not None and opt.ratio < tau - 1e-12
        above = opt is None or opt.ratio > tau + 1e-12
        if below:
            assert res is not None and res.ratio <= tau + 1e-9
        elif above:
            assert res is None


def test_monitor_certifies_and_repairs():
    g = DynGraph(n=6, m_cap=64, C=8, U=8)
    for i in range(5):
        g.insert_edge(i, i + 1, 1, 1, gradient=0.1, length=1.0)
    mon = NegCycleMonitor(g, tau=-0.5)
    assert mon.valid
    # both arcs nonnegative: satisfied without touching potentials
    calm = g.insert_edge(0, 3, 1, 1, gradient=0.2, length=1.0)
    mon.on_change(calm)
    assert mon.valid and mon.repairs == 0
    # steep chord: its reverse arc forces a local repair, yet the best
    # cycle through it has ratio -1.8/4 which is still above tau
    steep = g.insert_edge(1, 4, 1, 1, gradient=2.0, length=1.0)
    mon.on_change(steep)
    assert mon.valid and mon.repairs == 1
    # a self-loop below the threshold is an unrepairable violation
    loop = g.insert_edge(2, 2, 1, 1, gradient=-2.0, length=1.0)
    mon.on_change(loop)
    assert not mon.valid
    g.delete_edge(loop)
    assert mon.certify()


def test_threshold_uses_certificate_on_benign_stream():
    rng = random.Random(47)
    n = 48
    g = DynGraph(n=n, m_cap=256, C=8, U=8)
    d = Params(k=64).resolve(n, 200, 8, 8)
    handle = MrcHandle(g, d)
    assert handle.monitor is not None
    tau = d.threshold_ratio
    # tree edges only: no closed walk exists, so every answer is "no"
    pairs = [(rng.randrange(0, i), i) for i in range(1, n)]
    rng.shuffle(pairs)
    for a, b in pairs[:40]:
        eid = g.insert_edge(a, b, rng.randint(0, 8), rng.randint(-8, 8),
                            gradient=rng.uniform(0.1, 2.0), length=1.0)
        handle.insert(eid)
        assert handle.query_below(tau) is None
    assert handle.stats['certified_no'] > 30
    assert handle.stats['exact_solves'] == 0

    back = g.insert_edge(3, 4, 1, 1, gradient=-50.0, length=1.0)
    fwd = g.insert_edge(4, 3, 1, 1, gradient=-50.0, length=1.0)
    handle.insert(back)
    handle.insert(fwd)
    res = handle.query_below(tau)
    assert res is not None
    assert res.ratio <= tau


def test_refresh_keeps_answers_current():
    rng = random.Random(61)
    n = 10
    g = _random_graph(rng, n, 20)
    d = Params(k=2).resolve(n, 60, 8, 8)
    handle = MrcHandle(g, d)
    for step in range(12):
        eid = rng.choice(list(g.edges))
        e = g.edges[eid]
        e.gradient = rng.uniform(-3.0, 3.0)
        e.length = rng.choice([0.5, 1.0, 2.0])
        handle.refresh(eid)
        found = handle.query()
        opt = min_ratio_cycle_exact(g, rel_tol=1e-9)
        if opt is not None and opt.ratio < -1e-12:
            assert found is not None
            assert found.ratio <= d.kappa * opt.ratio + 1e-12


def test_cycle_circulation_accumulates_repeats():
    circ = cycle_circulation([(1, 1), (2, 1), (1, -1), (3, 1), (3, 1)])
    assert circ == {2: 1.0, 3: 2.0}
