"""Directed multigraph with append-only edge identities plus the sparse
circulation algebra used everywhere else.

Flow convention: a circulation assigns a signed value to each edge id;
value +x on edge (a, b) means x units from a to b, the divergence picks up
-x at a and +x at b, and a circulation has zero divergence everywhere.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field


class GraphError(ValueError):
    pass


@dataclass
class Edge:
    id: int
    tail: int
    head: int
    capacity: int
    cost: int
    gradient: float = 0.0
    length: float = 1.0


class DynGraph:
    """Insert-ordered multigraph; ids are dense, monotone, never reused.

    Self-loops and parallel edges are allowed. `m_cap`, `C`, `U` bound what
    insert_edge accepts; levels of the hierarchy that relabel endpoints or
    carry their own gradients construct instances with validation off.
    """

    def __init__(self, n=None, m_cap=None, C=None, U=None, validate=True):
        self.n = n
        self.m_cap = m_cap
        self.C = C
        self.U = U
        self.validate = validate
        self.edges = {}
        self.adj = defaultdict(list)        # vertex -> edge ids (tail or head)
        self.inserted_total = 0
        self._next_id = 0

    def vertices(self):
        if self.n is not None:
            return range(self.n)
        seen = set()
        for e in self.edges.values():
            seen.add(e.tail)
            seen.add(e.head)
        return sorted(seen)

    def insert_edge(self, tail, head, capacity, cost, gradient=0.0, length=1.0):
        if self.validate:
            if self.n is not None and not (0 <= tail < self.n and 0 <= head < self.n):
                raise GraphError(f"endpoint out of range: ({tail}, {head})")
            if self.m_cap is not None and self.inserted_total >= self.m_cap:
                raise GraphError(f"insertion budget m={self.m_cap} exhausted")
            if self.U is not None and not (0 <= capacity <= self.U):
                raise GraphError(f"capacity {capacity} outside [0, {self.U}]")
            if self.C is not None and abs(cost) > self.C:
                raise GraphError(f"|cost| {abs(cost)} exceeds {self.C}")
            if capacity != int(capacity) or cost != int(cost):
                raise GraphError("capacity and cost must be integral")
        eid = self._next_id
        self._insert_with_id(eid, tail, head, capacity, cost, gradient, length)
        return eid

    def _insert_with_id(self, eid, tail, head, capacity, cost, gradient=0.0, length=1.0):
        if eid in self.edges:
            raise GraphError(f"edge id {eid} already present")
        self.edges[eid] = Edge(eid, tail, head, capacity, cost, gradient, length)
        self.adj[tail].append(eid)
        if head != tail:
            self.adj[head].append(eid)
        self.inserted_total += 1
        self._next_id = max(self._next_id, eid + 1)

    def delete_edge(self, eid):
        e = self.edges.pop(eid, None)
        if e is None:
            raise GraphError(f"no edge {eid}")
        self.adj[e.tail].remove(eid)
        if e.head != e.tail:
            self.adj[e.head].remove(eid)
        return e

    def __len__(self):
        return len(self.edges)

    def __contains__(self, eid):
        return eid in self.edges


class Circulation(dict):
    """Sparse signed edge vector. Plain dict with a little algebra."""

    def add_scaled(self, other, coef=1):
        for eid, v in other.items():
            nv = self.get(eid, 0) + coef * v
            if nv == 0:
                self.pop(eid, None)
            else:
                self[eid] = nv
        return self

    def scaled(self, coef):
        return Circulation({eid: coef * v for eid, v in self.items() if coef * v != 0})


def divergence(graph, circ):
    """Net inflow per vertex; zero everywhere iff circ is a circulation."""
    out = defaultdict(lambda: 0)
    for eid, v in circ.items():
        e = graph.edges[eid]
        out[e.tail] -= v
        out[e.head] += v
    return {v: x for v, x in out.items() if x != 0}


def gradient_value(graph, circ):
    return sum(graph.edges[eid].gradient * v for eid, v in circ.items())


def length_value(graph, circ):
    """l^T |c|, the weighted one-norm that ratio denominators use."""
    return sum(graph.edges[eid].length * abs(v) for eid, v in circ.items())


def cost_value(graph, circ):
    return sum(graph.edges[eid].cost * v for eid, v in circ.items())


def cycle_decompose(graph, circ):
    """Split a circulation into simple signed cycles with positive weights.

    Returns [(cycle_dict, weight)] where each cycle_dict maps edge id to
    +/-1 and sum(weight * cycle) reproduces the input. Peeling always
    terminates because every pass zeroes at least one edge.
    """
    residual = {eid: v for eid, v in circ.items() if v != 0}
    if residual:
        bad = divergence(graph, Circulation(residual))
        if bad:
            raise GraphError(f"not a circulation, divergence at {sorted(bad)[:4]}")
    pieces = []
    while residual:
        # orient every remaining edge along its flow sign and walk until a
        # vertex repeats; that closes a simple cycle within the support
        out_of = defaultdict(list)
        for eid, v in residual.items():
            e = graph.edges[eid]
            a, b = (e.tail, e.head) if v > 0 else (e.head, e.tail)
            out_of[a].append((eid, b))
        start = next(iter(out_of))
        seen_at = {}
        path = []
        v = start
        while v not in seen_at:
            seen_at[v] = len(path)
            eid, nxt = out_of[v][-1]
            path.append(eid)
            v = nxt
        cyc_ids = path[seen_at[v]:]
        cycle = {}
        for eid in cyc_ids:
            cycle[eid] = 1 if residual[eid] > 0 else -1
        lam = min(abs(residual[eid]) for eid in cyc_ids)
        for eid in cyc_ids:
            nv = residual[eid] - cycle[eid] * lam
            if nv == 0:
                del residual[eid]
            else:
                residual[eid] = nv
        pieces.append((Circulation(cycle), lam))
    return pieces


@dataclass
class ImplicitCycle:
    """Cycle given as ordered off-tree hops stitched together by forest
    paths: traverse segment j, then walk the forest from where it ends to
    where segment j+1 begins (wrapping around).

    segments: [(edge id, sign)], sign +1 traverses tail->head.
    forest: index of the forest whose paths close the gaps, None when every
    consecutive pair of segments already meets at a shared vertex.
    """
    segments: list
    forest: int | None = None
    meta: dict = field(default_factory=dict)

    def hop_endpoints(self, graph):
        pts = []
        for eid, sign in self.segments:
            e = graph.edges[eid]
            pts.append((e.tail, e.head) if sign > 0 else (e.head, e.tail))
        return pts


def forest_path(adjacency, u, v):
    """BFS path u->v in a forest given adjacency {vertex: [(eid, other)]}.

    Returns [(eid, sign)] with sign +1 when the edge is traversed
    tail->head, or None if u and v are disconnected.
    """
    if u == v:
        return []
    prev = {u: None}
    q = deque([u])
    while q:
        x = q.popleft()
        for eid, other, sign in adjacency.get(x, ()):
            if other not in prev:
                prev[other] = (x, eid, sign)
                if other == v:
                    q.clear()
                    break
                q.append(other)
    if v not in prev:
        return None
    out = []
    x = v
    while prev[x] is not None:
        px, eid, sign = prev[x]
        out.append((eid, sign))
        x = px
    out.reverse()
    return out


def forest_adjacency(graph, edge_ids):
    adj = defaultdict(list)
    for eid in edge_ids:
        e = graph.edges[eid]
        adj[e.tail].append((eid, e.head, 1))
        adj[e.head].append((eid, e.tail, -1))
    return adj


def materialize_cycle(graph, cycle, path_fn=None):
    """Expand an ImplicitCycle into an explicit Circulation.

    path_fn(u, v) -> [(eid, sign)] supplies forest paths; it is only called
    when consecutive segments do not share a vertex. Raises GraphError when
    a needed path does not exist (stale forest).
    """
    if not cycle.segments:
        raise GraphError("empty cycle")
    pts = cycle.hop_endpoints(graph)
    out = Circulation()
    for j, (eid, sign) in enumerate(cycle.segments):
        out.add_scaled({eid: sign})
        end = pts[j][1]
        start_next = pts[(j + 1) % len(pts)][0]
        if end != start_next:
            if path_fn is None:
                raise GraphError("gap between segments but no forest paths supplied")
            path = path_fn(end, start_next)
            if path is None:
                raise GraphError(f"forest path {end}->{start_next} missing")
            for peid, psign in path:
                out.add_scaled({peid: psign})
    return out
