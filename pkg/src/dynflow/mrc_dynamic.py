"""Minimum-ratio cycle queries that survive edge insertions and deletions.

The handle keeps a sparsification chain over the live graph and answers
two kinds of query:

* `query()` returns a cycle whose ratio is within the configured quality
  factor kappa of the optimum, by scanning every sparsifier-cycle quote
  and solving every leaf graph exactly, then lifting the best find;
* `query_below(tau)` answers the one-sided threshold question the outer
  optimization loop actually asks: either a witness with ratio below tau,
  or a certificate that nothing is below tau in quote space (which bounds
  the true optimum by tau / kappa).

Quotes use the frozen per-level values, so a negative quote always lifts
to a true cycle at least that good; a miss in quote space bounds the true
optimum through the chain's quality factor.

When the chain is fully collapsed (no spanner levels, no contraction
levels) the one leaf is a mirror of the graph itself, and a feasible
potential on the bidirected arc graph certifies threshold "no" answers in
constant time per insertion until an arc violates it.
"""

from __future__ import annotations

import heapq
from collections import defaultdict, deque

from dynflow.chain import Chain, ChainError
from dynflow.graph import Circulation
from dynflow.mrc_exact import (MrcError, RatioCycle, evaluate_cycle,
                               has_cycle_below, min_ratio_cycle_exact)


def cycle_circulation(edges):
    """Net circulation of a closed walk; repeated edge ids accumulate."""
    circ = Circulation()
    for eid, sign in edges:
        circ.add_scaled({eid: float(sign)})
    return circ


class NegCycleMonitor:
    """Potential certificate that no cycle has ratio below tau.

    Potentials phi with phi[u] + w >= phi[v] for every bidirected arc
    (weights sign * gradient - tau * length) prove every cycle weight is
    nonnegative, hence every ratio is at least tau. Deletions keep the
    certificate; insertions and value changes are checked in constant
    time and repaired by bounded label correcting when they miss.
    """

    def __init__(self, graph, tau):
        if tau >= 0:
            raise MrcError("monitor threshold must be negative")
        self.graph = graph
        self.tau = tau
        self.phi = {}
        self.valid = False
        self.repairs = 0
        self.certify()

    def _eps(self, *vals):
        scale = 1.0
        for v in vals:
            scale = max(scale, abs(v))
        return 1e-12 * scale

    def _arcs_of(self, e):
        wf = e.gradient - self.tau * e.length
        wb = -e.gradient - self.tau * e.length
        return ((e.tail, e.head, wf), (e.head, e.tail, wb))

    def certify(self):
        """Full Bellman-Ford from a virtual source; True when feasible."""
        g = self.graph
        phi = {v: 0.0 for v in g.vertices()}
        arcs = []
        for e in g.edges.values():
            arcs.extend(self._arcs_of(e))
        for _ in range(len(phi) + 1):
            changed = False
            for u, v, w in arcs:
                nv = phi[u] + w
                if nv < phi[v] - self._eps(phi[u], phi[v], w):
                    phi[v] = nv
                    changed = True
            if not changed:
                self.phi = phi
                self.valid = True
                return True
        self.valid = False
        return False

    def on_change(self, eid):
        """Re-check one edge's arcs after an insert or value change."""
        if not self.valid:
            return
        e = self.graph.edges.get(eid)
        if e is None:
            return
        phi = self.phi
        queue = deque()
        for u, v, w in self._arcs_of(e):
            if u not in phi:
                phi[u] = 0.0
            if v not in phi:
                phi[v] = 0.0
            nv = phi[u] + w
            if nv < phi[v] - self._eps(phi[u], phi[v], w):
                phi[v] = nv
                queue.append(v)
        if not queue:
            return
        self.repairs += 1
        pops = 0
        limit = 8 * len(phi) + 64
        counts = defaultdict(int)
        while queue:
            x = queue.popleft()
            pops += 1
            counts[x] += 1
            if pops > limit or counts[x] > len(phi):
                self.valid = False
                return
            for aid in self.graph.adj[x]:
                ae = self.graph.edges[aid]
                outs = []
                if ae.tail == x:
                    outs.append((ae.head, ae.gradient - self.tau * ae.length))
                if ae.head == x:
                    outs.append((ae.tail, -ae.gradient - self.tau * ae.length))
                for y, w in outs:
                    nv = phi[x] + w
                    if nv < phi[y] - self._eps(phi[x], phi[y], w):
                        phi[y] = nv
                        queue.append(y)


class MrcHandle:
    """Dynamic min-ratio cycle oracle over one live graph.

    Callers mutate the graph first and then notify the handle, exactly as
    with the chain underneath: insert(eid) after adding an edge,
    delete(eid) after removing one, refresh(eid) after changing a
    gradient or length in place.
    """

    def __init__(self, graph, derived, use_monitor=True, tau=None):
        self.graph = graph
        self.derived = derived
        self.chain = Chain(graph, derived)
        self.monitor = None
        if use_monitor and derived.d_s == 0 and derived.d_t == 0:
            mtau = derived.threshold_ratio if tau is None else tau
            self.monitor = NegCycleMonitor(graph, mtau)
        self._qc = None
        self.stats = {
            'inserts': 0, 'deletes': 0, 'refreshes': 0,
            'queries': 0, 'threshold_queries': 0,
            'certified_no': 0, 'exact_solves': 0, 'lift_retries': 0,
        }

    # -- updates -----------------------------------------------------------

    def insert(self, eid):
        self.stats['inserts'] += 1
        self.chain.insert(eid)
        if self.monitor is not None:
            self.monitor.on_change(eid)

    def delete(self, eid):
        # removing constraints cannot break the monitor certificate
        self.stats['deletes'] += 1
        self.chain.delete(eid)

    def refresh(self, eid):
        self.stats['refreshes'] += 1
        self.chain.delete(eid)
        self.chain.insert(eid)
        if self.monitor is not None:
            self.monitor.on_change(eid)

    def rebuild(self):
        """Resync everything after a bulk change of values in place.

        The monitor is only marked stale here; the next threshold query
        pays for one full scan anyway, and re-arms the certificate when
        that scan comes back clean.
        """
        self.chain.rebuild_all()
        if self.monitor is not None:
            self.monitor.valid = False

    # -- queries -----------------------------------------------------------

    def query(self, rel_tol=1e-3):
        """Best cycle found through the chain, or None if nothing is
        negative; when the true optimum is negative the result's ratio is
        at most kappa times it."""
        self.stats['queries'] += 1
        for attempt in range(2):
            try:
                return self._query_once(rel_tol)
            except ChainError:
                if attempt:
                    raise
                self.stats['lift_retries'] += 1
                self.chain.rebuild_all()
        raise AssertionError("unreachable")

    def _query_once(self, rel_tol):
        best_ratio = 0.0
        best = None
        for owner, off in self.chain.candidates():
            cyc = self.chain.cycle_at(owner, off)
            qg, ql = evaluate_cycle(self.chain.quote_graph(owner), cyc)
            if ql <= 0:
                continue
            r = qg / ql
            if r < best_ratio:
                best_ratio, best = r, ('candidate', owner, cyc)
        for leaf in self.chain.leaves():
            if not leaf.graph.edges:
                continue
            self.stats['exact_solves'] += 1
            rc = min_ratio_cycle_exact(leaf.graph, rel_tol=rel_tol)
            if rc is not None and rc.ratio < best_ratio:
                best_ratio, best = rc.ratio, ('leaf', leaf, rc.edges)
        if best is None:
            return None
        return self._lift_result(best, best_ratio)

    def query_below(self, tau=None):
        """Witness with true ratio below tau, else None; None means no
        cycle quotes below tau, so the optimum is above tau / kappa."""
        if tau is None:
            tau = self.derived.threshold_ratio
        if tau >= 0:
            raise MrcError("threshold queries need a negative tau")
        self.stats['threshold_queries'] += 1
        for attempt in range(2):
            try:
                return self._query_below_once(tau)
            except ChainError:
                if attempt:
                    raise
                self.stats['lift_retries'] += 1
                self.chain.rebuild_all()
        raise AssertionError("unreachable")

    # -- threshold query cache ----------------------------------------------
    #
    # Quotes only move when the chain reroutes an embedding, changes a leaf
    # graph, or rebuilds, and the chain reports each of those in its event
    # feed.  Caching every candidate's quote in a lazy heap and every
    # leaf's last clean threshold makes a stalling query cost the drained
    # events instead of a full rescan.

    def _qc_add(self, owner, off, qc):
        if owner[0] == 'level':
            key = ('level', owner[1], 0, off)
            sp = self.chain.level_spanners[owner[1]]
        else:
            _, node, j = owner
            if j >= len(node.spanners):
                return
            key = ('node', id(node), j, off)
            sp = node.spanners[j]
        if off not in sp.embedding:
            qc['quotes'].pop(key, None)
            return
        cyc = self.chain.cycle_at(owner, off)
        qg, ql = evaluate_cycle(self.chain.quote_graph(owner), cyc)
        if ql <= 0:
            qc['quotes'].pop(key, None)
            return
        r = qg / ql
        qc['quotes'][key] = r
        qc['seq'] += 1
        heapq.heappush(qc['heap'], (r, qc['seq'], key))
        if key[0] == 'node':
            qc['by_node'].setdefault(key[1], set()).add(key)

    def _qc_register_subtree(self, node, qc):
        for d in node.descendants():
            qc['nodes'][id(d)] = d
            for j, sp in enumerate(d.spanners):
                for off in sp.embedding:
                    self._qc_add(('node', d, j), off, qc)

    def _qc_reset(self):
        qc = {'epoch': self.chain.epoch, 'quotes': {}, 'heap': [],
              'seq': 0, 'nodes': {}, 'by_node': {}, 'leaf_clean': {}}
        self._qc = qc
        for i, sp in enumerate(self.chain.level_spanners):
            for off in sp.embedding:
                self._qc_add(('level', i), off, qc)
        self._qc_register_subtree(self.chain.root, qc)
        return qc

    def _qc_drain(self, qc):
        for ev in self.chain.events:
            if ev[0] == 'cand':
                if ev[1] == 'level':
                    self._qc_add(('level', ev[2]), ev[3], qc)
                else:
                    node = ev[2]
                    qc['nodes'][id(node)] = node
                    self._qc_add(('node', node, ev[3]), ev[4], qc)
            elif ev[0] == 'leaf':
                node = ev[1]
                qc['nodes'][id(node)] = node
                qc['leaf_clean'].pop(id(node), None)
            else:
                _, old_ids, node = ev
                for nid in old_ids:
                    for key in qc['by_node'].pop(nid, ()):
                        qc['quotes'].pop(key, None)
                    qc['leaf_clean'].pop(nid, None)
                    qc['nodes'].pop(nid, None)
                self._qc_register_subtree(node, qc)
        self.chain.events.clear()

    def _query_below_once(self, tau):
        qc = self._qc
        if qc is None or qc['epoch'] != self.chain.epoch:
            qc = self._qc_reset()
        else:
            self._qc_drain(qc)
        heap, quotes = qc['heap'], qc['quotes']
        while heap and quotes.get(heap[0][2]) != heap[0][0]:
            heapq.heappop(heap)
        if heap and heap[0][0] <= tau:
            r, _, key = heap[0]
            if key[0] == 'level':
                owner = ('level', key[1])
            else:
                owner = ('node', qc['nodes'][key[1]], key[2])
            cyc = self.chain.cycle_at(owner, key[3])
            return self._lift_result(('candidate', owner, cyc), r)
        root_leaf = self.chain.root if self.chain.root.is_leaf else None
        for leaf in self.chain.leaves():
            if leaf is root_leaf and self.monitor is not None \
                    and self.monitor.tau == tau:
                if self.monitor.valid:
                    self.stats['certified_no'] += 1
                    continue
                self.stats['exact_solves'] += 1
                rc = has_cycle_below(leaf.graph, tau)
                if rc is None:
                    # re-arm the constant-time certificate
                    self.monitor.certify()
                    continue
                return self._lift_result(('leaf', leaf, rc.edges), rc.ratio)
            if not leaf.graph.edges:
                continue
            clean_at = qc['leaf_clean'].get(id(leaf))
            if clean_at is not None and tau <= clean_at:
                # an earlier solve already cleared this graph at a
                # threshold at least as loose, and nothing touched it
                self.stats['certified_no'] += 1
                continue
            self.stats['exact_solves'] += 1
            rc = has_cycle_below(leaf.graph, tau)
            if rc is not None:
                return self._lift_result(('leaf', leaf, rc.edges), rc.ratio)
            if clean_at is None or tau > clean_at:
                qc['leaf_clean'][id(leaf)] = tau
        return None

    def _lift_result(self, best, quote_ratio):
        kind, where, cyc = best
        if kind == 'candidate':
            lifted = self.chain.lift(where, cyc)
            leaf = self.chain.leaf_for(where)
        else:
            lifted = self.chain.lift_from_node(where, cyc)
            leaf = where
        g, l = evaluate_cycle(self.graph, lifted)
        if l <= 0:
            raise MrcError("lifted cycle has nonpositive length")
        in_union = set(self.chain.leaf_forest_edges(leaf))
        off_union = sum(1 for eid, _ in lifted if eid not in in_union)
        return RatioCycle(edges=lifted, gradient=g, length=l, meta={
            'kind': kind,
            'quote_ratio': quote_ratio,
            'off_union': off_union,
        })
