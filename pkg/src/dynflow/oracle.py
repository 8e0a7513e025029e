"""Exact integer reference solvers used for cross-checking.

Everything here runs in pure integer arithmetic so the answers are
bit-for-bit reproducible: a successive-shortest-path mincost circulation
solver, a Dinic maxflow, and first-directed-cycle detection over insertion
prefixes. These are deliberately independent of the incremental solver --
no shared data structures beyond the plain edge tuples.
"""

from __future__ import annotations

import heapq


class OracleError(RuntimeError):
    pass


def mincost_circulation(n, edges):
    """Minimum-cost circulation value and flow assignment.

    `edges` is a mapping eid -> (tail, head, capacity, cost) with integer
    entries, 0 <= capacity, vertices in range(n). Returns (cost, flows)
    with flows a dict eid -> integer flow in [0, capacity].
    """
    arcs = []            # [to, residual, cost]
    adj = [[] for _ in range(n)]
    back_arc = {}        # eid -> index of the backward arc (residual == flow)
    excess = [0] * n

    def add(u, v, cap_fwd, cap_bwd, cost):
        arcs.append([v, cap_fwd, cost])
        arcs.append([u, cap_bwd, -cost])
        adj[u].append(len(arcs) - 2)
        adj[v].append(len(arcs) - 1)

    for eid, (tail, head, cap, cost) in edges.items():
        if cap < 0:
            raise OracleError(f"edge {eid} has negative capacity")
        if cost >= 0:
            add(tail, head, cap, 0, cost)
        else:
            # saturate: start at f = cap, leaving only the undo direction
            add(tail, head, 0, cap, cost)
            excess[head] += cap
            excess[tail] -= cap
        back_arc[eid] = len(arcs) - 1

    pi = [0] * n
    total_excess = sum(e for e in excess if e > 0)
    while total_excess > 0:
        dist = [None] * n
        pred = [None] * n
        settled = [False] * n
        heap = []
        for v in range(n):
            if excess[v] > 0:
                dist[v] = 0
                heapq.heappush(heap, (0, v))
        while heap:
            d, u = heapq.heappop(heap)
            if settled[u] or dist[u] != d:
                continue
            settled[u] = True
            for ai in adj[u]:
                to, residual, cost = arcs[ai]
                if residual <= 0:
                    continue
                nd = d + cost + pi[u] - pi[to]
                if dist[to] is None or nd < dist[to]:
                    dist[to] = nd
                    pred[to] = ai
                    heapq.heappush(heap, (nd, to))
        target = None
        for v in range(n):
            if excess[v] < 0 and settled[v]:
                if target is None or dist[v] < dist[target]:
                    target = v
        if target is None:
            raise OracleError("imbalance cannot be routed; residual graph broken")
        d_t = dist[target]
        # unsettled tentative labels are unsafe for the potential update
        for v in range(n):
            if not settled[v]:
                dist[v] = None
        for v in range(n):
            if dist[v] is not None:
                pi[v] += min(dist[v], d_t)
        # bottleneck along the predecessor path
        bottleneck = -excess[target]
        v = target
        while pred[v] is not None:
            ai = pred[v]
            bottleneck = min(bottleneck, arcs[ai][1])
            v = arcs[ai ^ 1][0]
        bottleneck = min(bottleneck, excess[v])
        v = target
        while pred[v] is not None:
            ai = pred[v]
            arcs[ai][1] -= bottleneck
            arcs[ai ^ 1][1] += bottleneck
            v = arcs[ai ^ 1][0]
        excess[v] -= bottleneck
        excess[target] += bottleneck
        total_excess -= bottleneck

    flows = {}
    value = 0
    for eid, (tail, head, cap, cost) in edges.items():
        f = arcs[back_arc[eid]][1]
        flows[eid] = f
        value += cost * f
    return value, flows


def decide_threshold(n, edges, budget):
    """True iff some circulation has cost <= budget."""
    value, _ = mincost_circulation(n, edges)
    return value <= budget


def threshold_decisions(n, inserts, budget):
    """Per-prefix threshold answers for an insertion sequence.

    `inserts` is a list of (tail, head, capacity, cost). Answers are
    monotone in the prefix (inserting can only lower the optimum), so a
    binary search over prefixes needs O(log m) full solves.
    """
    m = len(inserts)
    if budget >= 0:
        return [True] * m

    def prefix_value(k):
        edges = {i: inserts[i] for i in range(k)}
        value, _ = mincost_circulation(n, edges)
        return value

    if m == 0 or prefix_value(m) > budget:
        return [False] * m
    lo, hi = 1, m          # smallest prefix length that answers yes
    while lo < hi:
        mid = (lo + hi) // 2
        if prefix_value(mid) <= budget:
            hi = mid
        else:
            lo = mid + 1
    return [k + 1 >= lo for k in range(m)]


def max_flow(n, arcs_in, s, t):
    """Dinic maxflow value for integer-capacity arcs (tail, head, cap)."""
    if s == t:
        raise OracleError("maxflow endpoints coincide")
    arcs = []
    adj = [[] for _ in range(n)]
    for tail, head, cap in arcs_in:
        arcs.append([head, cap])
        arcs.append([tail, 0])
        adj[tail].append(len(arcs) - 2)
        adj[head].append(len(arcs) - 1)

    flow = 0
    while True:
        level = [-1] * n
        level[s] = 0
        queue = [s]
        for u in queue:
            for ai in adj[u]:
                to, residual = arcs[ai]
                if residual > 0 and level[to] < 0:
                    level[to] = level[u] + 1
                    queue.append(to)
        if level[t] < 0:
            return flow
        it = [0] * n

        def dfs(u, limit):
            if u == t:
                return limit
            while it[u] < len(adj[u]):
                ai = adj[u][it[u]]
                to, residual = arcs[ai]
                if residual > 0 and level[to] == level[u] + 1:
                    pushed = dfs(to, min(limit, residual))
                    if pushed:
                        arcs[ai][1] -= pushed
                        arcs[ai ^ 1][1] += pushed
                        return pushed
                it[u] += 1
            return 0

        while True:
            pushed = dfs(s, 10 ** 30)
            if not pushed:
                break
            flow += pushed


def has_directed_cycle(n, arc_list):
    """Whether the directed graph on range(n) contains a cycle."""
    out = [[] for _ in range(n)]
    for tail, head in arc_list:
        if tail == head:
            return True
        out[tail].append(head)
    color = [0] * n
    for start in range(n):
        if color[start]:
            continue
        stack = [(start, iter(out[start]))]
        color[start] = 1
        while stack:
            u, it = stack[-1]
            advanced = False
            for v in it:
                if color[v] == 1:
                    return True
                if color[v] == 0:
                    color[v] = 1
                    stack.append((v, iter(out[v])))
                    advanced = True
                    break
            if not advanced:
                color[u] = 2
                stack.pop()
    return False


def first_cycle_prefix(n, inserts):
    """1-based length of the shortest prefix containing a directed cycle.

    Returns None when even the full sequence is acyclic. Monotone, so
    binary search.
    """
    m = len(inserts)
    if m == 0 or not has_directed_cycle(n, [(t, h) for t, h, *_ in inserts]):
        return None
    lo, hi = 1, m
    while lo < hi:
        mid = (lo + hi) // 2
        if has_directed_cycle(n, [(t, h) for t, h, *_ in inserts[:mid]]):
            hi = mid
        else:
            lo = mid + 1
    return lo
