"""Exact minimum gradient-to-length ratio cycles.

A cycle here is a closed walk using each edge id at most once, in either
direction; self-loops and opposite parallel edges count, but traversing one
edge forward and immediately backward does not. Its value is the signed
gradient sum divided by the unsigned length sum. Reversal negates the
numerator, so whenever any cycle exists the optimum is at most zero.

The optimum is located by bisection on lambda: a cycle of value below
lambda exists iff the bidirected arc graph with weights sign*g - lambda*l
contains a strictly negative cycle, which Bellman-Ford certifies together
with a witness. For lambda <= 0 the forward+backward degenerate pair has
weight -2*lambda*l >= 0 and can never pollute a witness.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from dynflow.graph import Circulation, forest_adjacency, forest_path


class MrcError(RuntimeError):
    pass


@dataclass
class RatioCycle:
    edges: list[tuple[int, int]]        # (edge id, +-1) in cycle order
    gradient: float
    length: float
    meta: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.gradient / self.length

    def circulation(self) -> Circulation:
        return Circulation({eid: float(sign) for eid, sign in self.edges})


def evaluate_cycle(graph, edges):
    """Signed gradient sum and unsigned length sum of an edge/sign list."""
    g = 0.0
    l = 0.0
    for eid, sign in edges:
        e = graph.edges[eid]
        g += sign * e.gradient
        l += e.length
    return g, l


def _make(graph, edges) -> RatioCycle:
    g, l = evaluate_cycle(graph, edges)
    if l <= 0:
        raise MrcError("cycle with nonpositive length")
    return RatioCycle(edges=edges, gradient=g, length=l)


def _negative_cycle(graph, lam, exclude):
    """Witness cycle with gradient - lam*length < 0, or None."""
    arcs = []
    vertices = set()
    for eid, e in graph.edges.items():
        if eid in exclude:
            continue
        wf = e.gradient - lam * e.length
        wb = -e.gradient - lam * e.length
        if e.tail == e.head:
            if wf < 0:
                return [(eid, 1)]
            if wb < 0:
                return [(eid, -1)]
            continue
        vertices.add(e.tail)
        vertices.add(e.head)
        arcs.append((e.tail, e.head, wf, eid, 1))
        arcs.append((e.head, e.tail, wb, eid, -1))
    if not arcs:
        return None
    n = len(vertices)
    dist = {v: 0.0 for v in vertices}
    pred = {}
    for round_no in range(n + 1):
        hot = None
        for u, v, w, eid, sign in arcs:
            nd = dist[u] + w
            if nd < dist[v]:
                dist[v] = nd
                pred[v] = (u, eid, sign)
                hot = v
        if hot is None:
            return None
    # The predecessor graph now contains at least one strictly negative
    # cycle, but it can also hold zero-weight ones: at lam == 0 the
    # forward+backward pair of a single edge sums to exactly zero. So
    # enumerate every cycle of the (functional) pred graph and keep the
    # most negative.
    best = None
    best_val = 0.0
    state = {}
    for start in vertices:
        if state.get(start):
            continue
        path = []
        x = start
        while x is not None and not state.get(x):
            state[x] = 1
            path.append(x)
            x = pred[x][0] if x in pred else None
        if x is not None and state.get(x) == 1:
            cyc = []
            cur = x
            while True:
                pv, eid, sign = pred[cur]
                cyc.append((eid, sign))
                cur = pv
                if cur == x:
                    break
            cyc.reverse()
            g, l = evaluate_cycle(graph, cyc)
            val = g - lam * l
            if val < best_val:
                best = cyc
                best_val = val
        for v in path:
            state[v] = 2
    return best


def find_any_cycle(graph, exclude=frozenset()):
    """Some cycle in insertion order, ignoring values; None on forests."""
    parent = {}

    def find(x):
        root = x
        while parent.get(root, root) != root:
            root = parent[root]
        while parent.get(x, x) != x:
            parent[x], x = root, parent[x]
        return root

    tree = []
    for eid, e in graph.edges.items():
        if eid in exclude:
            continue
        if e.tail == e.head:
            return [(eid, 1)]
        ru, rv = find(e.tail), find(e.head)
        if ru == rv:
            adjacency = forest_adjacency(graph, tree)
            path = forest_path(adjacency, e.head, e.tail)
            if path is None:
                raise MrcError("spanning forest lost the connecting path")
            return [(eid, 1)] + path
        parent[ru] = rv
        tree.append(eid)
    return None


def has_cycle_below(graph, tau, exclude=frozenset()):
    """Witness with ratio < tau (tau <= 0 required), or None."""
    if tau > 0:
        raise MrcError("threshold queries are only sound for tau <= 0")
    edges = _negative_cycle(graph, tau, exclude)
    if edges is None:
        return None
    return _make(graph, edges)


def min_ratio_cycle_exact(graph, exclude=frozenset(), rel_tol=1e-12,
                          max_iter=200):
    """Minimum-ratio cycle, or None when the graph has no cycle at all.

    The returned witness is exact; its ratio is within rel_tol (relative)
    of the true optimum. Bisection only ever probes strictly negative
    lambdas; the starting upper bound comes from orienting an arbitrary
    cycle so its gradient sum is nonpositive.
    """
    edges = find_any_cycle(graph, exclude)
    if edges is None:
        return None
    g, _ = evaluate_cycle(graph, edges)
    if g > 0:
        edges = [(eid, -sign) for eid, sign in reversed(edges)]
    best = _make(graph, edges)
    lo = 0.0
    for eid, e in graph.edges.items():
        if eid in exclude:
            continue
        if e.length <= 0:
            raise MrcError(f"edge {eid} has nonpositive length")
        lo = min(lo, -abs(e.gradient) / e.length)
    hi = best.ratio
    for _ in range(max_iter):
        if hi - lo <= rel_tol * max(1.0, abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        found = _negative_cycle(graph, mid, exclude)
        if found is None:
            lo = mid
        else:
            cand = _make(graph, found)
            best = cand
            hi = cand.ratio
    return best
