"""Sparsification chain: spanner levels, contraction cores, node tree.

The chain turns one weighted multigraph into a shrinking family of graphs
whose cycles can be lifted back up:

* spanner levels keep a sparse subgraph and embed every dropped edge as a
  short same-scale path, so each dropped edge defines a sparsifier cycle;
* contraction levels collapse the pieces of a rooted forest, freeze each
  surviving edge's values (length multiplied by its stretch bound,
  gradient shifted by root-path potentials so cycle sums are preserved),
  and recurse on a spanner of the contraction; one child per forest of the
  multiplicative-weight collection.

Frozen values stay valid because any value change is expressed as
delete + reinsert, and deleting an edge that sits in a node's forest
rebuilds that node's whole subtree. Lifting stitches consecutive cycle
edges through their shared piece with the forest path via the two root
paths (common root segments cancel), which telescopes gradients exactly
and keeps total length within the frozen stretch-scaled lengths.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from dynflow.graph import DynGraph
from dynflow.lsd import mwu_build_collection


class ChainError(RuntimeError):
    pass


class CoreGraph:
    """Contraction of a base graph along one rooted forest, values frozen."""

    def __init__(self, base, forest):
        self.base = base
        self.forest = forest
        # piece ids are dense at build time, so they form the vertex space
        n_pieces = 1 + max(forest.pieces(), default=-1)
        self.graph = DynGraph(n=n_pieces, validate=False)
        self.contracted = set()
        for eid in base.edges:
            self._insert(eid)

    def _insert(self, eid):
        e = self.base.edges[eid]
        f = self.forest
        pu = f.piece_of(e.tail)
        pv = f.piece_of(e.head)
        if eid in f.forest_edges:
            self.contracted.add(eid)
            grad = 0.0
        else:
            grad = e.gradient + f.psi(e.head) - f.psi(e.tail)
        length = f.stretch_bound[eid] * e.length
        self.graph._insert_with_id(eid, pu, pv, e.capacity, e.cost,
                                   gradient=grad, length=length)

    def insert_from_base(self, eid):
        self.forest.register_insert(eid)
        self._insert(eid)

    def delete_plain(self, eid):
        """Remove a non-forest edge. Forest edges rebuild the whole node."""
        if eid in self.forest.forest_edges:
            raise ChainError(f"edge {eid} is a forest edge; rebuild instead")
        self.forest.handle_delete(eid)
        self.contracted.discard(eid)
        self.graph.delete_edge(eid)

    def lift_cycle(self, cycle):
        """Map a cycle of this core onto the base graph.

        Consecutive edges are stitched inside their shared piece by the
        forest path through the piece root, with the shared root segment
        cancelled away. Raises when stale piece labels make a stitch
        impossible; callers treat that as a rebuild signal.
        """
        if not cycle:
            raise ChainError("cannot lift an empty cycle")
        hops = []
        for eid, sign in cycle:
            e = self.base.edges[eid]
            start, end = (e.tail, e.head) if sign == 1 else (e.head, e.tail)
            hops.append((eid, sign, start, end))
        out = []
        for i, (eid, sign, start, end) in enumerate(hops):
            out.append((eid, sign))
            nxt_start = hops[(i + 1) % len(hops)][2]
            if end == nxt_start:
                continue
            f = self.forest
            if f.piece_of(end) != f.piece_of(nxt_start):
                raise ChainError(
                    f"stitch endpoints {end} and {nxt_start} sit in "
                    f"different pieces")
            up = f.root_path(end)
            down = [(pe, -ps) for pe, ps in reversed(f.root_path(nxt_start))]
            while up and down and up[-1][0] == down[0][0]:
                up.pop()
                down.pop(0)
            out.extend(up)
            out.extend(down)
        return out


class SpannerWithEmbedding:
    """Sparse subgraph plus a short same-scale path for every dropped edge.

    Every kept (spanner) edge may carry dropped edges embedded through it;
    the reverse index makes deletions re-embed exactly the affected ones.
    A dropped edge that can no longer embed is promoted into the spanner.
    Self-loops are always dropped with an empty embedding: they are their
    own cycle.
    """

    def __init__(self, graph, gamma, exclude=frozenset()):
        self.graph = graph
        self.gamma = gamma
        self.exclude = set(exclude)
        self.in_spanner = set()
        self.embedding = {}
        self.through = defaultdict(set)
        self._adj = defaultdict(set)       # vertex -> spanner edge ids
        self._ends = {}                    # survives graph-side deletion
        order = sorted(
            (eid for eid in graph.edges if eid not in self.exclude),
            key=lambda eid: (graph.edges[eid].length, eid))
        for eid in order:
            self.insert_edge(eid)

    def _find_path(self, u, v, max_len):
        """Hop-bounded BFS over spanner edges of length <= max_len."""
        if u == v:
            return []
        prev = {u: None}
        frontier = [u]
        for _ in range(self.gamma):
            nxt = []
            for x in frontier:
                for eid in self._adj[x]:
                    e = self.graph.edges[eid]
                    if e.length > max_len:
                        continue
                    y = e.head if e.tail == x else e.tail
                    if y in prev:
                        continue
                    prev[y] = (x, eid)
                    if y == v:
                        path = []
                        cur = v
                        while prev[cur] is not None:
                            px, peid = prev[cur]
                            pe = self.graph.edges[peid]
                            sign = 1 if (pe.tail, pe.head) == (px, cur) else -1
                            path.append((peid, sign))
                            cur = px
                        path.reverse()
                        return path
                    nxt.append(y)
            frontier = nxt
            if not frontier:
                break
        return None

    def insert_edge(self, eid):
        """Returns 'embedded' or 'spanner'."""
        if eid in self.exclude:
            raise ChainError(f"edge {eid} is excluded from the spanner")
        e = self.graph.edges[eid]
        self._ends[eid] = (e.tail, e.head)
        if e.tail == e.head:
            self.embedding[eid] = []
            return 'embedded'
        path = self._find_path(e.tail, e.head, 2.0 * e.length)
        if path is not None:
            self.embedding[eid] = path
            for peid, _ in path:
                self.through[peid].add(eid)
            return 'embedded'
        self.in_spanner.add(eid)
        self._adj[e.tail].add(eid)
        self._adj[e.head].add(eid)
        return 'spanner'

    def _drop_embedding(self, eid):
        for peid, _ in self.embedding.pop(eid, ()):
            self.through[peid].discard(eid)

    def delete_edge(self, eid):
        """Untrack an edge (it may already be gone from the graph);
        returns the list of promoted edge ids."""
        if eid in self.exclude:
            self.exclude.discard(eid)
            return []
        if eid in self.embedding:
            self._drop_embedding(eid)
            self._ends.pop(eid, None)
            return []
        if eid not in self.in_spanner:
            raise ChainError(f"edge {eid} is not tracked by the spanner")
        tail, head = self._ends.pop(eid)
        self.in_spanner.discard(eid)
        self._adj[tail].discard(eid)
        self._adj[head].discard(eid)
        promoted = []
        for dep in sorted(self.through.pop(eid, ())):
            self._drop_embedding(dep)
            de = self.graph.edges[dep]
            path = self._find_path(de.tail, de.head, 2.0 * de.length)
            if path is not None:
                self.embedding[dep] = path
                for peid, _ in path:
                    self.through[peid].add(dep)
            else:
                self.in_spanner.add(dep)
                self._adj[de.tail].add(dep)
                self._adj[de.head].add(dep)
                promoted.append(dep)
        return promoted

    def cycle_for(self, off_eid):
        """Sparsifier cycle of a dropped edge, oriented so gradient <= 0."""
        if off_eid not in self.embedding:
            raise ChainError(f"edge {off_eid} has no embedding")
        cycle = [(off_eid, 1)]
        for peid, sign in reversed(self.embedding[off_eid]):
            cycle.append((peid, -sign))
        total = 0.0
        for eid, sign in cycle:
            total += sign * self.graph.edges[eid].gradient
        if total > 0:
            cycle = [(eid, -sign) for eid, sign in reversed(cycle)]
        return cycle

    def check_invariants(self):
        for eid in self.graph.edges:
            if eid in self.exclude:
                if eid in self.in_spanner or eid in self.embedding:
                    raise ChainError(f"excluded edge {eid} is tracked")
                continue
            kept = eid in self.in_spanner
            dropped = eid in self.embedding
            if kept == dropped:
                raise ChainError(
                    f"edge {eid} must be exactly one of kept/dropped")
        for eid, path in self.embedding.items():
            e = self.graph.edges[eid]
            if e.tail == e.head:
                if path:
                    raise ChainError(f"self-loop {eid} embeds a path")
                continue
            if len(path) > self.gamma:
                raise ChainError(f"embedding of {eid} exceeds {self.gamma} hops")
            cur = e.tail
            for peid, sign in path:
                if peid not in self.in_spanner:
                    raise ChainError(f"embedding of {eid} leaves the spanner")
                pe = self.graph.edges[peid]
                if pe.length > 2.0 * e.length + 1e-12 * e.length:
                    raise ChainError(f"embedding hop {peid} is out of scale")
                if eid not in self.through[peid]:
                    raise ChainError(f"reverse index misses {eid} via {peid}")
                hop_start = pe.tail if sign == 1 else pe.head
                if hop_start != cur:
                    raise ChainError(f"embedding of {eid} breaks at {peid}")
                cur = pe.head if sign == 1 else pe.tail
            if cur != e.head:
                raise ChainError(f"embedding of {eid} is not a tail-head path")


@dataclass
class ChainNode:
    graph: DynGraph
    depth: int
    parent: 'ChainNode | None' = None
    from_core: CoreGraph | None = None
    branch: int = 0
    forests: list = field(default_factory=list)
    cores: list = field(default_factory=list)
    spanners: list = field(default_factory=list)
    children: list = field(default_factory=list)
    updates: int = 0

    @property
    def is_leaf(self):
        return not self.children and not self.forests

    def canonical_leaf(self):
        node = self
        while node.children:
            node = node.children[0]
        return node

    def leaves(self):
        if not self.children:
            yield self
            return
        for child in self.children:
            yield from child.leaves()

    def descendants(self):
        yield self
        for child in self.children:
            yield from child.descendants()


def _mirror(graph):
    out = DynGraph(n=graph.n, validate=False)
    for eid, e in graph.edges.items():
        out._insert_with_id(eid, e.tail, e.head, e.capacity, e.cost,
                            gradient=e.gradient, length=e.length)
    return out


class Chain:
    """Spanner prefix plus contraction tree over a live graph.

    The chain never mutates the underlying graph. Mutate the graph first,
    then notify the chain: insert(eid) right after the edge appears,
    delete(eid) right after it is removed, and for a value change mutate
    the edge in place and then call delete(eid) followed by insert(eid).
    Rebuilds re-read the graph, so the order matters. `before_rebuild` is
    called with a node before its subtree is discarded so flow state
    parked on its leaves can be folded away.
    """

    def __init__(self, graph, derived, before_rebuild=None):
        self.graph = graph
        self.derived = derived
        self.before_rebuild = before_rebuild
        self.level_spanners = []       # i -> spanner over level graph i
        self.level_graphs = [graph]    # owned mirrors from index 1 on
        self.level_updates = [0] * (derived.d_s + 1)
        self.rebuild_count = 0
        # change feed for query caches: epoch flips mean rescan everything,
        # events name exactly the candidates and leaves whose quotes moved
        self.epoch = 0
        self.events = []
        for i in range(derived.d_s):
            sp = SpannerWithEmbedding(self.level_graphs[i], derived.gamma_length)
            nxt = DynGraph(n=self.level_graphs[i].n, validate=False)
            for eid in sorted(sp.in_spanner):
                e = self.level_graphs[i].edges[eid]
                nxt._insert_with_id(eid, e.tail, e.head, e.capacity, e.cost,
                                    gradient=e.gradient, length=e.length)
            self.level_spanners.append(sp)
            self.level_graphs.append(nxt)
        self.root = self._build_node(_mirror(self.level_graphs[-1]), 0)

    # -- construction --------------------------------------------------------

    def _build_node(self, graph, depth):
        node = ChainNode(graph=graph, depth=depth)
        if depth >= self.derived.d_t:
            return node
        node.forests = mwu_build_collection(graph, self.derived)
        for j, forest in enumerate(node.forests):
            core = CoreGraph(graph, forest)
            spanner = SpannerWithEmbedding(core.graph,
                                           self.derived.gamma_length,
                                           exclude=set(core.contracted))
            child_graph = DynGraph(n=core.graph.n, validate=False)
            for eid in sorted(spanner.in_spanner):
                ce = core.graph.edges[eid]
                child_graph._insert_with_id(eid, ce.tail, ce.head,
                                            ce.capacity, ce.cost,
                                            gradient=ce.gradient,
                                            length=ce.length)
            child = self._build_node(child_graph, depth + 1)
            child.parent = node
            child.from_core = core
            child.branch = j
            node.cores.append(core)
            node.spanners.append(spanner)
            node.children.append(child)
        return node

    def _rebuild_node(self, node):
        if self.before_rebuild is not None:
            self.before_rebuild(node)
        self.rebuild_count += 1
        old_ids = tuple(id(x) for x in node.descendants())
        fresh = self._build_node(node.graph, node.depth)
        node.forests = fresh.forests
        node.cores = fresh.cores
        node.spanners = fresh.spanners
        node.children = fresh.children
        for child in node.children:
            child.parent = node
        node.updates = 0
        self._emit(('subtree', old_ids, node))

    def _emit(self, ev):
        self.events.append(ev)
        if len(self.events) > 4 * len(self.level_graphs[0].edges) + 1024:
            # nothing is draining the feed; flip the epoch instead of
            # growing without bound, consumers rescan from scratch
            self.epoch += 1
            self.events.clear()

    def _node_budget(self, node):
        frac = self.derived.params.rebuild_fraction
        return max(4, int(len(node.graph) * frac / max(self.derived.k, 1)))

    # -- dynamic updates -----------------------------------------------------

    def insert(self, eid):
        self._insert_at_level(0, eid)

    def _insert_at_level(self, level, eid):
        if eid not in self.level_graphs[level].edges:
            # a rebuild triggered while handling an earlier promotion
            # re-read the graphs and re-placed this edge already
            return
        for i in range(level, self.derived.d_s):
            sp = self.level_spanners[i]
            if eid in sp.embedding or eid in sp.in_spanner:
                # a rebuild during the paired delete already re-read the
                # graph and tracked the edge with its current values
                return
            self.level_updates[i] += 1
            if self.level_updates[i] > self._level_budget(i):
                self._rebuild_from_level(i)
                return
            result = sp.insert_edge(eid)
            if result == 'embedded':
                self._emit(('cand', 'level', i, eid))
                return
            src = self.level_graphs[i].edges[eid]
            self.level_graphs[i + 1]._insert_with_id(
                eid, src.tail, src.head, src.capacity, src.cost,
                gradient=src.gradient, length=src.length)
        self._node_insert(self.root, eid)

    def _node_insert(self, node, eid):
        if eid in node.graph.edges:
            return
        src = self._tree_source(node).edges[eid]
        node.graph._insert_with_id(eid, src.tail, src.head,
                                   src.capacity, src.cost,
                                   gradient=src.gradient,
                                   length=src.length)
        node.updates += 1
        if not node.forests:
            self._emit(('leaf', node))
            return
        if node.updates > self._node_budget(node):
            self._rebuild_node(node)
            return
        # a fresh edge must not degrade the collection's stretch average
        live = [f._live_bound(eid) for f in node.forests]
        if sum(live) / len(live) > self.derived.beta_avg:
            self._rebuild_node(node)
            return
        for j, core in enumerate(node.cores):
            core.insert_from_base(eid)
            spanner = node.spanners[j]
            result = spanner.insert_edge(eid)
            if result == 'spanner':
                self._node_insert(node.children[j], eid)
            else:
                self._emit(('cand', 'node', node, j, eid))

    def delete(self, eid):
        self._delete_at_level(0, eid)

    def _delete_at_level(self, level, eid):
        # promotions wait until the deleted edge is untracked everywhere,
        # or their path searches would walk its remains at deeper levels
        pending = []
        embedded_at = None
        for i in range(level, self.derived.d_s):
            self.level_updates[i] += 1
            if self.level_updates[i] > self._level_budget(i):
                # shallower levels already untracked the edge and the
                # rebuild discards everything from here down
                self._rebuild_from_level(i)
                embedded_at = i
                break
            sp = self.level_spanners[i]
            was_embedded = eid in sp.embedding
            # rerouted dependents must be re-quoted; read them before the
            # delete pops the reverse index
            deps = tuple(sorted(sp.through.get(eid, ()))) \
                if eid in sp.in_spanner else ()
            promoted = sp.delete_edge(eid)
            if was_embedded:
                self._emit(('cand', 'level', i, eid))
                embedded_at = i
                break
            for dep in deps:
                self._emit(('cand', 'level', i, dep))
            self.level_graphs[i + 1].delete_edge(eid)
            for peid in promoted:
                src = self.level_graphs[i].edges[peid]
                self.level_graphs[i + 1]._insert_with_id(
                    peid, src.tail, src.head, src.capacity, src.cost,
                    gradient=src.gradient, length=src.length)
                pending.append((i + 1, peid))
        if embedded_at is None:
            self._node_delete(self.root, eid)
        for lvl, peid in pending:
            self._insert_at_level(lvl, peid)

    def _node_delete(self, node, eid):
        if eid not in node.graph.edges:
            return
        node.graph.delete_edge(eid)
        node.updates += 1
        if not node.forests:
            self._emit(('leaf', node))
            return
        if node.updates > self._node_budget(node):
            self._rebuild_node(node)
            return
        if any(eid in f.forest_edges for f in node.forests):
            self._rebuild_node(node)
            return
        for j, core in enumerate(node.cores):
            spanner = node.spanners[j]
            was_embedded = eid in spanner.embedding
            deps = tuple(sorted(spanner.through.get(eid, ()))) \
                if eid in spanner.in_spanner else ()
            promoted = spanner.delete_edge(eid)
            core.delete_plain(eid)
            if was_embedded:
                self._emit(('cand', 'node', node, j, eid))
            for dep in deps:
                self._emit(('cand', 'node', node, j, dep))
            if not was_embedded:
                self._node_delete(node.children[j], eid)
            for peid in promoted:
                self._node_insert(node.children[j], peid)

    def _tree_source(self, node):
        if node.parent is None:
            return self.level_graphs[-1]
        return node.parent.cores[node.branch].graph

    def _level_budget(self, i):
        frac = self.derived.params.rebuild_fraction
        return max(4, int(len(self.level_graphs[i]) * frac / max(self.derived.k, 1)))

    def _rebuild_from_level(self, level):
        if self.before_rebuild is not None:
            self.before_rebuild(self.root)
        self.rebuild_count += 1
        del self.level_spanners[level:]
        del self.level_graphs[level + 1:]
        for i in range(level, self.derived.d_s):
            sp = SpannerWithEmbedding(self.level_graphs[i], self.derived.gamma_length)
            nxt = DynGraph(n=self.level_graphs[i].n, validate=False)
            for eid in sorted(sp.in_spanner):
                e = self.level_graphs[i].edges[eid]
                nxt._insert_with_id(eid, e.tail, e.head, e.capacity, e.cost,
                                    gradient=e.gradient, length=e.length)
            self.level_spanners.append(sp)
            self.level_graphs.append(nxt)
        for i in range(level, len(self.level_updates)):
            self.level_updates[i] = 0
        self.epoch += 1
        self.events.clear()
        root = self._build_node(_mirror(self.level_graphs[-1]), 0)
        # keep the object identity of the root stable for callers
        self.root.graph = root.graph
        self.root.forests = root.forests
        self.root.cores = root.cores
        self.root.spanners = root.spanners
        self.root.children = root.children
        for child in self.root.children:
            child.parent = self.root
        self.root.updates = 0

    def rebuild_all(self):
        """Discard and rebuild every level and node from the live graph."""
        self._rebuild_from_level(0)

    # -- querying helpers ----------------------------------------------------

    def candidates(self):
        """Yield (owner, off_eid) for every sparsifier cycle in the chain.

        Owner is either ('level', index) or ('node', node, branch); the
        off edge id keys `cycle_at` and `lift`.
        """
        for i, sp in enumerate(self.level_spanners):
            for off in sp.embedding:
                yield ('level', i), off
        for node in self.root.descendants():
            for j, sp in enumerate(node.spanners):
                for off in sp.embedding:
                    yield ('node', node, j), off

    def cycle_at(self, owner, off_eid):
        if owner[0] == 'level':
            return self.level_spanners[owner[1]].cycle_for(off_eid)
        _, node, j = owner
        return node.spanners[j].cycle_for(off_eid)

    def quote_graph(self, owner):
        """Graph whose values price the candidate cycle."""
        if owner[0] == 'level':
            return self.level_graphs[owner[1]]
        _, node, j = owner
        return node.cores[j].graph

    def lift(self, owner, cycle):
        """Lift a cycle from a candidate's level down to the base graph."""
        if owner[0] == 'level':
            return list(cycle)
        _, node, j = owner
        cycle = node.cores[j].lift_cycle(cycle)
        return self.lift_from_node(node, cycle)

    def lift_from_node(self, node, cycle):
        """Lift a cycle living in `node.graph` all the way to the base."""
        while node.from_core is not None:
            cycle = node.from_core.lift_cycle(cycle)
            node = node.parent
        return list(cycle)

    def leaf_for(self, owner):
        """Leaf whose forest union contains every stitch the lift makes."""
        if owner[0] == 'level':
            return self.root.canonical_leaf()
        _, node, j = owner
        return node.children[j].canonical_leaf()

    def leaf_forest_edges(self, leaf):
        """Edge ids of the forest union along the leaf's root path."""
        out = []
        node = leaf
        while node.from_core is not None:
            out.extend(sorted(node.from_core.forest.forest_edges))
            node = node.parent
        return out

    def leaves(self):
        return list(self.root.leaves())

    # -- invariants ------------------------------------------------------

    def check_invariants(self):
        from dynflow.lsd import collection_averages
        for sp in self.level_spanners:
            sp.check_invariants()
        for node in self.root.descendants():
            for f in node.forests:
                f.check_invariants()
            if node.forests:
                avgs = collection_averages(node.graph, node.forests)
                worst = max(avgs.values())
                if worst > self.derived.beta_avg + 1e-9:
                    raise ChainError(
                        f"collection average {worst} exceeds "
                        f"{self.derived.beta_avg}")
            for j, core in enumerate(node.cores):
                forest = node.forests[j]
                for eid, ce in core.graph.edges.items():
                    be = node.graph.edges[eid]
                    want_l = forest.stretch_bound[eid] * be.length
                    if abs(ce.length - want_l) > 1e-9 * max(1.0, abs(want_l)):
                        raise ChainError(f"core length drifted on edge {eid}")
                    if eid in core.contracted and ce.gradient != 0.0:
                        raise ChainError(f"contracted edge {eid} has gradient")
                node.spanners[j].check_invariants()
                child = node.children[j]
                for eid in core.graph.edges:
                    kept = eid in node.spanners[j].in_spanner
                    dropped = eid in node.spanners[j].embedding
                    contracted = eid in core.contracted
                    if contracted + kept + dropped != 1:
                        raise ChainError(
                            f"edge {eid} is not exactly one of "
                            f"contracted/kept/dropped")
                    if kept != (eid in child.graph.edges):
                        raise ChainError(
                            f"child membership mismatch on edge {eid}")
