"""Low-stretch rooted forests and multiplicative-weight collections.

A forest build picks a spanning tree biased toward heavily weighted edges,
then carves it into pieces of bounded vertex count. Every piece is rooted
at its topmost vertex, and each edge freezes a stretch bound of the
root-path form

    bound(e) = 1 + (dist(tail, root_tail) + dist(head, root_head)) / len(e)

measured inside the forest at build time. The root-path form (rather than
the direct tail-head path) is what makes contracted-cycle lifts stitch
through piece roots with total length at most sum(bound * len), and it
survives piece splits: a split reroots the far side at an endpoint of the
deleted edge, which lies on every old root path of that side, so live
root distances only shrink and the frozen bounds stay valid upper bounds.

The collection builder reweights edges by their running stretch bounds
until every edge's uniform average over the collection meets the target,
or the forest budget runs out, which is a hard error naming the worst
edge.
"""

from __future__ import annotations

import math
from collections import defaultdict, deque


class LsdError(RuntimeError):
    pass


class ForestRouting:
    """One rooted, carved forest with frozen stretch bounds."""

    def __init__(self, graph, tree_edges, forest_edges, fparent, roots):
        self.graph = graph
        self.tree_edges = set(tree_edges)
        self.forest_edges = set(forest_edges)
        self.fparent = dict(fparent)      # vertex -> (eid, parent, sign)
        self.fchildren = defaultdict(list)
        for v, (eid, p, sign) in self.fparent.items():
            self.fchildren[p].append(v)
        self.label = {}
        self.root = {}
        self.rootdist_l = {}
        self.rootdist_g = {}
        self._next_pid = 0
        for r in roots:
            self._label_from(r, new_root=True)
        self.stretch_bound = {}
        for eid in graph.edges:
            self.stretch_bound[eid] = self._live_bound(eid)

    # -- construction helpers ------------------------------------------------

    def _label_from(self, start, new_root):
        pid = self._next_pid
        self._next_pid += 1
        self.root[pid] = start
        base_l = self.rootdist_l.get(start, 0.0)
        base_g = self.rootdist_g.get(start, 0.0)
        queue = deque([start])
        self.label[start] = pid
        if new_root:
            self.rootdist_l[start] = 0.0
            self.rootdist_g[start] = 0.0
        while queue:
            v = queue.popleft()
            for w in self.fchildren.get(v, ()):
                self.label[w] = pid
                if new_root:
                    eid, _, sign = self.fparent[w]
                    e = self.graph.edges[eid]
                    self.rootdist_l[w] = self.rootdist_l[v] + e.length
                    self.rootdist_g[w] = self.rootdist_g[v] + sign * e.gradient
                queue.append(w)

    def _live_bound(self, eid):
        e = self.graph.edges[eid]
        if e.length <= 0:
            raise LsdError(f"edge {eid} has nonpositive length")
        if e.tail == e.head:
            # a self-loop is a cycle by itself and routes over no path
            return 1.0
        du = self.rootdist_l.get(e.tail, 0.0)
        dv = self.rootdist_l.get(e.head, 0.0)
        return 1.0 + (du + dv) / e.length

    # -- queries -------------------------------------------------------------

    def piece_of(self, v):
        return self.label[v]

    def pieces(self):
        return set(self.root)

    def psi(self, v):
        """Signed gradient along the forest path v -> root(piece(v))."""
        return self.rootdist_g.get(v, 0.0)

    def root_distance(self, v):
        return self.rootdist_l.get(v, 0.0)

    def root_path(self, v):
        """[(eid, sign)] along the forest path v -> root(piece(v))."""
        out = []
        while v in self.fparent:
            eid, p, sign = self.fparent[v]
            out.append((eid, sign))
            v = p
        return out

    def definition_stretch(self, eid):
        """Exact two-case stretch of the edge against the current forest."""
        e = self.graph.edges[eid]
        u, v = e.tail, e.head
        if self.label.get(u) is not None and self.label.get(u) == self.label.get(v):
            if u == v:
                return 1.0
            anc = {u: self.rootdist_l[u]}
            x = u
            while x in self.fparent:
                x = self.fparent[x][1]
                anc[x] = self.rootdist_l[x]
            x = v
            while x not in anc:
                x = self.fparent[x][1]
            dist = self.rootdist_l[u] + self.rootdist_l[v] - 2 * self.rootdist_l[x]
            return 1.0 + dist / e.length
        return self._live_bound(eid)

    # -- dynamic hooks -------------------------------------------------------

    def register_insert(self, eid):
        """Fresh edges are non-tree; freeze their bound from live distances."""
        self.stretch_bound[eid] = self._live_bound(eid)

    def handle_delete(self, eid):
        """Returns the new piece id when a piece split, else None."""
        self.stretch_bound.pop(eid, None)
        self.tree_edges.discard(eid)
        if eid not in self.forest_edges:
            return None
        self.forest_edges.discard(eid)
        child = None
        for v in (self.graph.edges[eid].tail, self.graph.edges[eid].head):
            ent = self.fparent.get(v)
            if ent is not None and ent[0] == eid:
                child = v
                break
        if child is None:
            raise LsdError(f"forest edge {eid} has no child endpoint")
        _, parent, _ = self.fparent.pop(child)
        self.fchildren[parent].remove(child)
        # shift the far side's distances so they are measured from the new root
        shift_l = self.rootdist_l[child]
        shift_g = self.rootdist_g[child]
        queue = deque([child])
        side = []
        while queue:
            v = queue.popleft()
            side.append(v)
            for w in self.fchildren.get(v, ()):
                queue.append(w)
        pid = self._next_pid
        self._next_pid += 1
        self.root[pid] = child
        for v in side:
            self.label[v] = pid
            self.rootdist_l[v] -= shift_l
            self.rootdist_g[v] -= shift_g
        return pid

    # -- invariants ----------------------------------------------------------

    def check_invariants(self):
        if not self.forest_edges <= self.tree_edges:
            raise LsdError("carved forest is not a subset of the tree")
        if not self.tree_edges <= set(self.graph.edges):
            raise LsdError("tree contains unknown edges")
        for pid, r in self.root.items():
            if self.label.get(r) != pid:
                raise LsdError(f"piece {pid} root is labeled {self.label.get(r)}")
            if r in self.fparent:
                raise LsdError(f"piece {pid} root has a forest parent")
        for v, (eid, p, sign) in self.fparent.items():
            if self.label[v] != self.label[p]:
                raise LsdError("forest edge crosses piece labels")
            if eid not in self.forest_edges:
                raise LsdError("parent pointer uses a non-forest edge")
            e = self.graph.edges[eid]
            want = (v, p) if sign == 1 else (p, v)
            if (e.tail, e.head) != want:
                raise LsdError(f"parent pointer sign wrong on edge {eid}")
        for eid in self.graph.edges:
            bound = self.stretch_bound.get(eid)
            if bound is None:
                raise LsdError(f"edge {eid} has no frozen stretch bound")
            live = self.definition_stretch(eid)
            if bound < live - 1e-9 * max(1.0, abs(bound)):
                raise LsdError(
                    f"frozen bound {bound} fell below live stretch {live} "
                    f"on edge {eid}")


def build_forest(graph, weights, piece_target, scale_allowance=None):
    """Carved rooted forest biased toward heavy multiplicative weights.

    With `scale_allowance` set, every piece's radius is additionally kept
    at or below the allowance times the smallest non-loop edge length
    incident to the piece.  Both root distances of an edge then stay
    within allowance * its own length, so every frozen bound is at most
    1 + 2 * allowance no matter how wide the length spread is.
    """
    if piece_target < 2:
        raise LsdError("piece target must be at least 2")
    items = []
    for eid, e in graph.edges.items():
        if e.tail == e.head:
            continue
        items.append(eid)
    if items:
        vbar = sum(weights.get(eid, 1.0) for eid in items) / len(items)
        vbar = max(vbar, 1e-300)

        def key(eid):
            e = graph.edges[eid]
            return (e.length * vbar / (vbar + weights.get(eid, 1.0)), eid)

        items.sort(key=key)

    parent = {}

    def find(x):
        root = x
        while parent.get(root, root) != root:
            root = parent[root]
        while parent.get(x, x) != x:
            parent[x], x = root, parent[x]
        return root

    tree = []
    for eid in items:
        e = graph.edges[eid]
        ru, rv = find(e.tail), find(e.head)
        if ru != rv:
            parent[ru] = rv
            tree.append(eid)

    adj = defaultdict(list)
    for eid in tree:
        e = graph.edges[eid]
        adj[e.tail].append((eid, e.head))
        adj[e.head].append((eid, e.tail))

    vertices = sorted(graph.vertices())
    seen = set()
    tparent = {}
    cuts = set()
    roots = []
    full_order = []
    for start in vertices:
        if start in seen:
            continue
        roots.append(start)
        seen.add(start)
        order = [start]
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for eid, w in adj[v]:
                if w in seen:
                    continue
                seen.add(w)
                sign = 1 if graph.edges[eid].tail == w else -1
                tparent[w] = (eid, v, sign)
                order.append(w)
                queue.append(w)
        # children-first accumulation; cut an edge when the live subtree
        # below it reaches the piece target
        acc = {v: 1 for v in order}
        for v in reversed(order):
            if v == start:
                continue
            eid, p, _ = tparent[v]
            if acc[v] >= piece_target:
                cuts.add(eid)
            else:
                acc[p] += acc[v]
        full_order.extend(order)

    if scale_allowance is not None:
        incident = {}
        for e in graph.edges.values():
            if e.tail == e.head:
                continue
            for v in (e.tail, e.head):
                if v not in incident or e.length < incident[v]:
                    incident[v] = e.length
        # walk pieces top-down; each piece carries its max root distance
        # and the smallest incident length seen, and a vertex that would
        # break radius <= allowance * min starts a fresh piece instead
        piece = {}
        dist = {}
        state = {}
        for v in full_order:
            ent = tparent.get(v)
            sv = incident.get(v, math.inf)
            if ent is None or ent[0] in cuts:
                piece[v], dist[v] = v, 0.0
                state[v] = [0.0, sv]
                continue
            eid, p, _ = ent
            pid = piece[p]
            nd = dist[p] + graph.edges[eid].length
            rad, pmin = state[pid]
            if max(rad, nd) > scale_allowance * min(pmin, sv):
                cuts.add(eid)
                piece[v], dist[v] = v, 0.0
                state[v] = [0.0, sv]
            else:
                piece[v], dist[v] = pid, nd
                state[pid][0] = max(rad, nd)
                state[pid][1] = min(pmin, sv)

    forest = [eid for eid in tree if eid not in cuts]
    fparent = {v: ent for v, ent in tparent.items() if ent[0] not in cuts}
    piece_roots = list(roots)
    for v, ent in tparent.items():
        if ent[0] in cuts:
            piece_roots.append(v)
    return ForestRouting(graph, tree, forest, fparent, piece_roots)


def collection_averages(graph, forests):
    """Per-edge uniform average of frozen stretch bounds."""
    if not forests:
        raise LsdError("empty forest collection")
    out = {}
    for eid in graph.edges:
        out[eid] = sum(f.stretch_bound[eid] for f in forests) / len(forests)
    return out


def mwu_build_collection(graph, derived):
    """Forests whose per-edge average stretch meets the configured target.

    Reweights edges between builds proportionally to exp(bound / target);
    stops as soon as the uniform per-edge average is within target. Runs
    out of budget loudly.
    """
    target = derived.beta_avg
    budget = derived.t_budget
    piece_target = max(2, round(derived.params.c_w * derived.k / 4))
    # carving to the average target directly keeps every per-edge bound
    # inside both stretch budgets no matter the length spread; the slack
    # factor absorbs float rounding in the radius comparisons
    allowance = (min(derived.beta_avg, derived.str_cap) - 1.0) / 2.000001
    weights = {eid: 1.0 for eid in graph.edges}
    forests = []
    worst_eid = None
    worst = 0.0
    for _ in range(budget):
        forests.append(build_forest(graph, weights, piece_target, allowance))
        if not graph.edges:
            return forests
        cap_break = max(forests[-1].stretch_bound.values())
        if cap_break > derived.str_cap * (1.0 + 1e-9):
            raise LsdError(f"frozen bound {cap_break:.3f} exceeds the "
                           f"stretch cap {derived.str_cap:.3f}")
        avgs = collection_averages(graph, forests)
        worst_eid, worst = max(avgs.items(), key=lambda kv: (kv[1], kv[0]))
        if worst <= target:
            return forests
        latest = forests[-1]
        top = 0.0
        for eid in weights:
            weights[eid] *= math.exp(min(latest.stretch_bound[eid] / target, 30.0))
            top = max(top, weights[eid])
        if top > 0:
            for eid in weights:
                weights[eid] /= top
    raise LsdError(
        f"collection averages missed target {target:.3f} after {budget} "
        f"forests; worst edge {worst_eid} averages {worst:.3f}")
