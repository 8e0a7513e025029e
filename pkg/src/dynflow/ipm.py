"""Incremental cost-threshold decisions by potential reduction.

One `ThresholdRun` owns a private graph and maintains, after every edge
insertion, the answer to "does some circulation have cost at most the
budget". The potential couples a logarithmic term in the gap between the
current fractional circulation's cost and the budget with barrier terms
that keep every flow value strictly inside its capacity interval. Each
improvement step augments along a cycle whose gradient-to-length ratio
clears a fixed acceptance threshold; the cycles come from the dynamic
sparsification handle, so per-insertion work follows the potential rise
caused by the insertion rather than the graph size.

Answers certify themselves in both directions:

* "yes" rounds the fractional circulation to an integral one of cost at
  most the budget (cycle canceling over the fractional support, with an
  exact solve as a logged fallback) and keeps it as a witness; later
  insertions only add circulations, so yes is final;
* "no" is only concluded from a stalled query over fully refreshed
  values. A budget-feasible circulation would force some cycle below
  the acceptance threshold, so a certified miss rules one out.

Gradients carry a frozen copy of the cost gap that is refreshed whenever
the live gap drifts out of a relative band; between full refreshes only
the edges touched by a step are rewritten.
"""

from __future__ import annotations

import math
from collections import defaultdict

from dynflow.graph import DynGraph, divergence
from dynflow.mrc_dynamic import MrcHandle, cycle_circulation
from dynflow.oracle import mincost_circulation
from dynflow.params import Params


class IpmError(RuntimeError):
    pass


class _Kahan:
    """Compensated running sum; keeps the potential audit honest."""

    __slots__ = ("value", "_c")

    def __init__(self, value=0.0):
        self.value = value
        self._c = 0.0

    def add(self, x):
        y = x - self._c
        t = self.value + y
        self._c = (t - self.value) - y
        self.value = t


def _frac(v, tol):
    return abs(v - round(v)) > tol


def _cycle_in_support(graph, work):
    """Closed walk over the working edge set, or None on a dead end.

    Treats edges as undirected hops; the sign records whether a hop runs
    tail to head. Multi-edges and self-loops are fine, only an immediate
    reversal through the same edge id is forbidden.
    """
    adj = defaultdict(list)
    for eid in work:
        e = graph.edges[eid]
        adj[e.tail].append((eid, e.head, 1))
        adj[e.head].append((eid, e.tail, -1))
    start = next(iter(adj))
    on_path = {start: 0}
    hops = []
    cur = start
    came = None
    for _ in range(len(adj) + 1):
        options = [h for h in adj[cur] if h[0] != came]
        if not options:
            return None
        eid, nxt, sign = options[0]
        if nxt in on_path:
            return hops[on_path[nxt]:] + [(eid, sign)]
        hops.append((eid, sign))
        on_path[nxt] = len(hops) - 1
        cur, came = nxt, eid
    return None


def round_circulation(graph, flow, tol=1e-7):
    """Integral circulation obtained by canceling fractional cycles.

    Every vertex of the fractional support has even cost-free degree, so
    the support contains a cycle; moving along it until some edge hits an
    integer strictly shrinks the support. Directions that lower the cost
    are preferred, so for a circulation whose cost sits within one unit
    of an integral optimum the result costs no more. Returns eid -> int
    with zeros dropped, or None when numerics leave no usable cycle.
    """
    vals = dict(flow)
    for _ in range(len(vals) + 4):
        work = {eid for eid, v in vals.items() if _frac(v, tol)}
        if not work:
            break
        cycle = _cycle_in_support(graph, work)
        if cycle is None:
            return None
        chosen = None
        for flip in (1, -1):
            cdot = 0.0
            theta = math.inf
            for eid, sign in cycle:
                s = sign * flip
                e = graph.edges[eid]
                v = vals[eid]
                cdot += e.cost * s
                if s > 0:
                    room = min(math.floor(v) + 1, e.capacity) - v
                else:
                    room = v - max(math.ceil(v) - 1, 0)
                theta = min(theta, room)
            if theta <= tol:
                continue
            if chosen is None or cdot < chosen[0]:
                chosen = (cdot, flip, theta)
        if chosen is None:
            return None
        _, flip, theta = chosen
        for eid, sign in cycle:
            vals[eid] += sign * flip * theta
    else:
        return None
    out = {}
    for eid, v in vals.items():
        iv = int(round(v))
        e = graph.edges[eid]
        if not 0 <= iv <= e.capacity:
            return None
        if iv:
            out[eid] = iv
    return out


class ThresholdRun:
    """Maintains "is some circulation's cost at most the budget" under
    edge insertions.

    The run owns two graphs: `graph` records every inserted edge exactly
    as given, while `flow_graph` holds only the edges that can carry flow
    (positive capacity) together with their gradient and length fields.
    Zero-capacity edges can never change the answer, so they are recorded
    and otherwise ignored.
    """

    def __init__(self, n, m_cap, C, U, budget, params=None, trace=False):
        if budget != int(budget):
            raise IpmError("budget must be integral")
        self.budget = int(budget)
        self.params = params or Params()
        self.derived = self.params.resolve(n, m_cap, C, U)
        d = self.derived
        self.graph = DynGraph(n=n, m_cap=m_cap, C=C, U=U)
        self.history = []
        self.step_trace = [] if trace else None
        self.witness = None
        self.settled = False
        self.answer = 'no'
        mcu = d.m * d.C * d.U
        if self.budget >= 0:
            # the empty circulation costs 0, no insertion changes that
            self.answer, self.witness, self.settled = 'yes', {}, True
            return
        if self.budget < -mcu:
            # every circulation costs more than -mCU, no insertion helps
            self.settled = True
            return
        self.flow_graph = DynGraph(n=n, validate=False)
        self.excluded = set()
        self.f = {}
        self.phi_coef = 20.0 * d.m
        self.tau = d.threshold_ratio
        if d.d_s == 0 and d.d_t == 0:
            # a fully collapsed hierarchy answers queries exactly, so the
            # deepest threshold that keeps stalls sound is available; the
            # stronger cycles it admits cut the step count sharply
            self.tau = -d.alpha / 4.0
        # the stall certificate only answers queries at its own threshold,
        # so arming it when tau was deepened would just maintain dead weight
        self.handle = MrcHandle(self.flow_graph, d,
                                use_monitor=self.tau == d.threshold_ratio,
                                tau=self.tau)
        self.term_tol = float(mcu) ** -10.0
        self.cert_at = max(self.term_tol, self.params.cert_margin)
        self.S = _Kahan(-float(self.budget))
        self.S_frozen = self.S.value
        self.B = _Kahan()
        self.steps_accepted = 0
        # floor on the potential drop of any accepted step
        ka4 = d.kappa * d.alpha / 4.0
        self.step_bound = ka4 * ka4 / 500.0
        # integer-signed sum of recent accepted cycles; line-searched as a
        # composite direction so opposing barrier-pinned micro steps cancel
        self._accum = {}
        self._accum_steps = 0
        self.stats = {
            'insertions': 0, 'full_refreshes': 0, 'stalls': 0,
            'stale_cycles': 0, 'certs_rounded': 0, 'certs_exact': 0,
            'composite_steps': 0, 'length_clamps': 0, 'insert_dphi_max': 0.0,
            'phi_max': -math.inf, 'min_step_decrease': math.inf,
        }

    # -- potential ----------------------------------------------------------

    def _b(self, fe, cap):
        d = self.derived
        return (cap - fe) ** -d.alpha + (fe + d.delta) ** -d.alpha

    def potential(self):
        """Tracked potential; constant time."""
        return self.phi_coef * math.log(self.S.value) + self.B.value

    def potential_exact(self):
        """Potential recomputed from scratch for accounting checks."""
        g = self.graph
        cost = math.fsum(g.edges[eid].cost * fe for eid, fe in self.f.items())
        slack = cost - self.budget
        terms = [self._b(self.f.get(eid, 0.0), self.flow_graph.edges[eid].capacity)
                 for eid in self.flow_graph.edges]
        return self.phi_coef * math.log(slack) + math.fsum(terms)

    def _field_values(self, e, fe):
        d = self.derived
        hi = (e.capacity - fe) ** (-1.0 - d.alpha)
        lo = (fe + d.delta) ** (-1.0 - d.alpha)
        grad = self.phi_coef * e.cost / self.S_frozen + d.alpha * hi - d.alpha * lo
        length = hi + lo
        if length < d.length_lo or length > d.length_hi:
            self.stats['length_clamps'] += 1
            length = min(max(length, d.length_lo), d.length_hi)
        return grad, length

    def eta_floor(self, gdot):
        ka = self.derived.kappa * self.derived.alpha
        return ka * ka / (800.0 * abs(gdot))

    # -- updates ------------------------------------------------------------

    def insert(self, tail, head, capacity, cost):
        """Record one edge and return the maintained answer."""
        eid = self.graph.insert_edge(tail, head, capacity, cost)
        if self.settled:
            self.history.append({'edge': eid, 'answer': self.answer, 'steps': 0})
            return self.answer
        self.stats['insertions'] += 1
        before = self.steps_accepted
        if capacity <= 0:
            self.excluded.add(eid)
        else:
            dphi = self._b(0.0, capacity)
            self.B.add(dphi)
            self.stats['insert_dphi_max'] = max(self.stats['insert_dphi_max'], dphi)
            grad, length = self._field_values(self.graph.edges[eid], 0.0)
            self.flow_graph._insert_with_id(eid, tail, head, capacity, cost,
                                            gradient=grad, length=length)
            self.handle.insert(eid)
            self.answer = self._equilibrate()
        self.history.append({'edge': eid, 'answer': self.answer,
                             'steps': self.steps_accepted - before})
        return self.answer

    def _equilibrate(self):
        self._accum = {}
        self._accum_steps = 0
        while True:
            self.stats['phi_max'] = max(self.stats['phi_max'], self.potential())
            if self.S.value <= self.cert_at:
                self._certify()
                return 'yes'
            found = self.handle.query_below(self.tau)
            if found is None and self.S_frozen != self.S.value:
                self._full_refresh()
                found = self.handle.query_below(self.tau)
            if found is None:
                # fields were fully fresh, so no cycle clears the
                # acceptance ratio anywhere: a budget-feasible
                # circulation would have produced one
                self.stats['stalls'] += 1
                return 'no'
            delta = cycle_circulation(found.edges)
            if not delta:
                raise IpmError("cycle with no net circulation")
            prep = self._prep(delta)
            if prep is None:
                # gap drift inside the band turned this into a false
                # positive; resync and let the loop query again
                self.stats['stale_cycles'] += 1
                self._full_refresh()
                continue
            if self.steps_accepted >= self.params.step_cap:
                raise IpmError("step budget exhausted without resolution")
            self._step(prep)

    def _prep(self, delta):
        """Evaluate a circulation against the live fields.

        The stored gradients carry the frozen cost gap, so the cost part
        is re-based onto the live gap before the acceptance test.  Returns
        (delta, cost_dot, gdot) when the direction still clears half the
        acceptance ratio, else None.
        """
        g = self.flow_graph
        cost_dot = 0.0
        gdot = 0.0
        length = 0.0
        for eid, dv in delta.items():
            e = g.edges[eid]
            cost_dot += e.cost * dv
            gdot += e.gradient * dv
            length += e.length * abs(dv)
        gdot += self.phi_coef * cost_dot * (1.0 / self.S.value - 1.0 / self.S_frozen)
        if gdot / length > self.tau / 2.0:
            return None
        return delta, cost_dot, gdot

    def _step(self, prep):
        delta, cost_dot, gdot = prep
        floor = self.eta_floor(gdot)
        best_dphi, best_eta = self._line_search(delta, cost_dot, floor)
        if not best_dphi < -self.step_bound:
            if self.S_frozen != self.S.value:
                self.stats['stale_cycles'] += 1
                self._full_refresh()
                return
            raise IpmError("line search failed to decrease the potential")
        self._apply(delta, best_eta, cost_dot, best_dphi)
        opposed = False
        for eid, dv in delta.items():
            step = int(round(dv))
            old = self._accum.get(eid, 0)
            if old and (old > 0) != (step > 0):
                opposed = True
            iv = old + step
            if iv:
                self._accum[eid] = iv
            else:
                self._accum.pop(eid, None)
        self._accum_steps += 1
        # opposition marks the ping-pong pattern the composite exists to
        # cancel, so try it right away rather than on cadence
        if opposed or self._accum_steps >= self.params.accel_every:
            self._try_composite()

    def _boundary(self, delta, cost_dot):
        g = self.flow_graph
        eta_max = math.inf
        for eid, dv in delta.items():
            e = g.edges[eid]
            fe = self.f.get(eid, 0.0)
            if dv > 0:
                room = (e.capacity - fe) / dv
            else:
                room = (fe + self.derived.delta) / -dv
            if room < eta_max:
                eta_max = room
        if cost_dot < 0:
            eta_max = min(eta_max, self.S.value / -cost_dot)
        return eta_max

    def _phi_delta(self, delta, cost_dot, eta):
        s = self.S.value
        if s + eta * cost_dot <= 0:
            return math.inf
        acc = self.phi_coef * math.log1p(eta * cost_dot / s)
        g = self.flow_graph
        for eid, dv in delta.items():
            e = g.edges[eid]
            fe = self.f.get(eid, 0.0)
            acc += self._b(fe + eta * dv, e.capacity) - self._b(fe, e.capacity)
        return acc

    def _line_search(self, delta, cost_dot, floor):
        hi = 0.99 * self._boundary(delta, cost_dot)
        if not hi > 0:
            raise IpmError("no feasible step along returned cycle")
        if floor is None:
            # geometric sweep only; used for composite directions where no
            # gradient-derived floor applies
            lo = hi * 2.0 ** -48
            grid = {hi}
        else:
            floor = min(floor, hi)
            lo = floor / 64.0
            grid = {floor, floor / 8.0, lo, hi}
        v = hi
        while v > lo:
            grid.add(v)
            v *= 0.5
        return min((self._phi_delta(delta, cost_dot, x), x) for x in grid)

    def _apply(self, delta, eta, cost_dot, dphi):
        g = self.flow_graph
        for eid, dv in delta.items():
            e = g.edges[eid]
            fe_old = self.f.get(eid, 0.0)
            fe = fe_old + eta * dv
            self.f[eid] = fe
            self.B.add(self._b(fe, e.capacity) - self._b(fe_old, e.capacity))
            e.gradient, e.length = self._field_values(e, fe)
            self.handle.refresh(eid)
        self.S.add(eta * cost_dot)
        self.steps_accepted += 1
        self.stats['min_step_decrease'] = min(self.stats['min_step_decrease'],
                                              -dphi)
        if self.step_trace is not None:
            self.step_trace.append((self.potential(), self.S.value))
        if abs(self.S.value - self.S_frozen) > self.derived.r_band * self.S_frozen:
            self._full_refresh()

    def _try_composite(self):
        """Line-search the summed direction of the recent accepted cycles.

        Opposing micro steps pinned at a barrier cancel in the integer sum,
        leaving the wide circulation they were jointly approximating; one
        verified step along it replaces thousands of pinned ones.  The sum
        of circulations is itself a circulation, and acceptance is decided
        by direct potential evaluation, so this is purely an accelerator.
        """
        delta = {eid: float(v) for eid, v in self._accum.items() if v}
        self._accum = {}
        self._accum_steps = 0
        if len(delta) < 2:
            return
        cost_dot = 0.0
        for eid, dv in delta.items():
            cost_dot += self.flow_graph.edges[eid].cost * dv
        best_dphi, best_eta = self._line_search(delta, cost_dot, None)
        if best_dphi < -self.step_bound:
            self._apply(delta, best_eta, cost_dot, best_dphi)
            self.stats['composite_steps'] += 1

    def _full_refresh(self):
        self.S_frozen = self.S.value
        for eid, e in self.flow_graph.edges.items():
            e.gradient, e.length = self._field_values(e, self.f.get(eid, 0.0))
        self.handle.rebuild()
        self.stats['full_refreshes'] += 1

    # -- certification ------------------------------------------------------

    def _witness_cost(self, witness):
        return sum(self.graph.edges[eid].cost * v for eid, v in witness.items())

    def _verify_witness(self, witness):
        for eid, v in witness.items():
            e = self.graph.edges[eid]
            if not isinstance(v, int) or not 0 <= v <= e.capacity:
                raise IpmError(f"witness value {v} out of bounds on edge {eid}")
        div = divergence(self.graph, witness)
        if any(div.values()):
            raise IpmError("witness is not a circulation")
        if self._witness_cost(witness) > self.budget:
            raise IpmError("witness cost exceeds the budget")

    def _certify(self):
        witness = round_circulation(self.flow_graph, self.f)
        if witness is not None and self._witness_cost(witness) <= self.budget:
            self.stats['certs_rounded'] += 1
        else:
            self.stats['certs_exact'] += 1
            edges = {eid: (e.tail, e.head, e.capacity, e.cost)
                     for eid, e in self.graph.edges.items()}
            cost, flows = mincost_circulation(self.graph.n, edges)
            if cost > self.budget:
                raise IpmError("certification reached an infeasible state")
            witness = {eid: v for eid, v in flows.items() if v}
        self._verify_witness(witness)
        self.witness = witness
        self.settled = True
