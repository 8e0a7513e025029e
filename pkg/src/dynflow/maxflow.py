"""Approximate incremental maxflow on top of threshold circulation runs.

Maxflow reduces to thresholded mincost circulation: add one auxiliary
edge from the sink back to the source with capacity n*U and cost -1,
give every real edge cost 0, and ask whether some circulation costs at
most -v.  Such a circulation exists exactly when v units of flow fit
from source to sink, so a geometric grid of thresholds v pins the
optimum within a factor 1 + eps/2, which rounds inside (1 - eps).
"""

import math
from concurrent.futures import ThreadPoolExecutor

from .ipm import ThresholdRun
from .params import Params


class MaxflowError(ValueError):
    pass


def threshold_grid(n, U, eps):
    """Integer thresholds ceil((1+eps/2)^i) spanning [1, n*U], plus 0.

    n*U bounds any source-sink flow value, so the largest grid entry at
    or below the true optimum sits within a (1+eps/2) factor of it.
    """
    top = n * U
    vals = {0}
    x = 1.0
    ratio = 1.0 + eps / 2.0
    while True:
        v = math.ceil(x)
        if v > top:
            break
        vals.add(v)
        x *= ratio
    return sorted(vals)


class MaxflowRun:
    """Maintains a (1-eps)-approximate maxflow value under edge insertions.

    One ThresholdRun per grid value v asks for a circulation of cost at
    most -v in the reduced instance.  After each insertion the largest
    certified threshold's witness is harvested; reported values are the
    running best, which keeps them non-decreasing (an old witness stays
    feasible because edges only arrive).  `flow` maps stream record
    indices to flow units and omits the auxiliary edge.
    """

    def __init__(self, n, m_cap, U, eps, source, sink,
                 params=None, workers=0):
        if not 0.0 < eps < 1.0:
            raise MaxflowError("eps must lie strictly between 0 and 1")
        if source == sink:
            raise MaxflowError("source and sink must differ")
        for name, v in (("source", source), ("sink", sink)):
            if not 0 <= v < n:
                raise MaxflowError(f"{name}={v} outside [0, {n})")
        self.n = n
        self.m_cap = m_cap
        self.U = U
        self.eps = eps
        self.source = source
        self.sink = sink
        self.aux_cap = n * U
        self.thresholds = threshold_grid(n, U, eps)
        base = params or Params()
        self.runs = {}
        for v in self.thresholds:
            if v == 0:
                # the empty circulation already certifies value 0
                continue
            run = ThresholdRun(n, m_cap + 1, 1, self.aux_cap, -v, params=base)
            run.insert(sink, source, self.aux_cap, -1)
            self.runs[v] = run
        self.value = 0
        self.flow = {}
        self.history = []
        self._pool = ThreadPoolExecutor(workers) if workers else None

    def insert(self, tail, head, capacity):
        """Insert one zero-cost edge and return the maintained flow value."""
        if len(self.history) >= self.m_cap:
            raise MaxflowError(f"insertion budget m={self.m_cap} exhausted")
        jobs = list(self.runs.values())
        if self._pool is not None:
            # instances are independent; join before harvesting so the
            # report sees a consistent cut at the record boundary
            list(self._pool.map(
                lambda run: run.insert(tail, head, capacity, 0), jobs))
        else:
            for run in jobs:
                run.insert(tail, head, capacity, 0)
        self._harvest()
        self.history.append({"record": len(self.history), "value": self.value})
        return self.value

    def _harvest(self):
        for v, run in self.runs.items():
            if run.answer != "yes" or run.witness is None:
                continue
            # real edges cost 0 and the auxiliary edge costs -1, so the
            # witness cost -f_aux is at most -v: its flow value beats v
            val = run.witness.get(0, 0)
            if val > self.value:
                self.value = val
                self.flow = {eid - 1: fe for eid, fe in run.witness.items()
                             if eid != 0}

    def best_threshold(self):
        """Largest grid value whose run currently answers yes."""
        best = 0
        for v, run in self.runs.items():
            if run.answer == "yes" and v > best:
                best = v
        return best

    def describe(self):
        """Per-threshold answer and work summary, grid order."""
        rows = []
        for v in self.thresholds:
            if v == 0:
                rows.append({"threshold": 0, "answer": "yes", "steps": 0})
                continue
            run = self.runs[v]
            rows.append({"threshold": v, "answer": run.answer,
                         "steps": run.steps_accepted})
        return rows

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False
