"""Splay-based link-cut forest over undirected trees of directed edges.

Edges are first-class nodes sitting between their endpoint vertices, which
keeps per-edge state (gradient, length, cost, accumulated flow) local. Path
aggregates are signed by traversal direction: walking an edge tail->head
contributes +gradient/+cost, head->tail contributes the negation, while
length aggregates are direction-free. Flow pushed along a path accumulates
per edge *in the edge's own orientation* and survives any number of later
re-rootings, which is what lets the solver keep circulation updates implicit.

Lazy bookkeeping: each node carries (rev, ladd) pending for its splay
subtree, normalized as "add ladd in current in-order direction, then
reverse if rev". Appending a reversal toggles rev; appending an addition
folds through the pending reversal with a sign flip.
"""

from __future__ import annotations


class LctError(RuntimeError):
    pass


class _Node:
    __slots__ = ("parent", "left", "right", "rev", "ladd",
                 "eid", "orient", "g", "l", "c", "flow",
                 "g_sum", "l_sum", "c_sum", "label")

    def __init__(self, label=None, eid=None, g=0.0, l=0.0, c=0.0):
        self.parent = None
        self.left = None
        self.right = None
        self.rev = False
        self.ladd = 0.0
        self.label = label
        self.eid = eid            # None for vertex nodes
        self.orient = 1           # +1: edge orientation matches in-order direction
        self.g = g                # gradient contribution in in-order direction
        self.l = l
        self.c = c
        self.flow = 0.0           # accumulated, always in edge orientation
        self.g_sum = g
        self.l_sum = l
        self.c_sum = c

    def _is_splay_root(self):
        p = self.parent
        return p is None or (p.left is not self and p.right is not self)


def _apply_rev(x):
    x.left, x.right = x.right, x.left
    x.g = -x.g
    x.c = -x.c
    x.g_sum = -x.g_sum
    x.c_sum = -x.c_sum
    x.orient = -x.orient
    x.rev = not x.rev


def _apply_add(x, eta):
    if x.eid is not None:
        x.flow += eta * x.orient
    x.ladd += -eta if x.rev else eta


def _push(x):
    if x.ladd:
        if x.left:
            _apply_add(x.left, x.ladd)
        if x.right:
            _apply_add(x.right, x.ladd)
        x.ladd = 0.0
    if x.rev:
        if x.left:
            _apply_rev(x.left)
        if x.right:
            _apply_rev(x.right)
        x.rev = False


def _pull(x):
    g = x.g
    l = x.l
    c = x.c
    if x.left:
        g += x.left.g_sum
        l += x.left.l_sum
        c += x.left.c_sum
    if x.right:
        g += x.right.g_sum
        l += x.right.l_sum
        c += x.right.c_sum
    x.g_sum = g
    x.l_sum = l
    x.c_sum = c


def _rotate(x):
    p = x.parent
    g = p.parent
    p_was_root = p._is_splay_root()
    if p.left is x:
        p.left = x.right
        if x.right:
            x.right.parent = p
        x.right = p
    else:
        p.right = x.left
        if x.left:
            x.left.parent = p
        x.left = p
    p.parent = x
    x.parent = g
    if not p_was_root:
        if g.left is p:
            g.left = x
        elif g.right is p:
            g.right = x
    _pull(p)
    _pull(x)


def _splay(x):
    # push pending state root-to-x first so rotations see clean nodes
    stack = [x]
    y = x
    while not y._is_splay_root():
        y = y.parent
        stack.append(y)
    while stack:
        _push(stack.pop())
    while not x._is_splay_root():
        p = x.parent
        if not p._is_splay_root():
            g = p.parent
            if (g.left is p) == (p.left is x):
                _rotate(p)
            else:
                _rotate(x)
        _rotate(x)


class LinkCutForest:

    def __init__(self):
        self._vnode = {}
        self._enode = {}
        self._ends = {}

    def _v(self, label):
        nd = self._vnode.get(label)
        if nd is None:
            nd = _Node(label=label)
            self._vnode[label] = nd
        return nd

    def _access(self, x):
        _splay(x)
        if x.right:
            x.right = None
            _pull(x)
        while x.parent is not None:
            p = x.parent
            _splay(p)
            p.right = x
            _pull(p)
            _splay(x)
        return x

    def _make_root(self, x):
        self._access(x)
        _apply_rev(x)

    def _find_root(self, x):
        self._access(x)
        while x.left:
            _push(x)
            x = x.left
        _splay(x)
        return x

    # -- public surface ----------------------------------------------------

    def connected(self, u, v):
        if u == v:
            return True
        if u not in self._vnode or v not in self._vnode:
            return False
        return self._find_root(self._vnode[u]) is self._find_root(self._vnode[v])

    def has_edge(self, eid):
        return eid in self._enode

    def edges(self):
        return list(self._enode)

    def link(self, tail, head, eid, gradient=0.0, length=0.0, cost=0.0):
        if eid in self._enode:
            raise LctError(f"edge {eid} already linked")
        if tail == head or self.connected(tail, head):
            raise LctError(f"link({tail}, {head}) would close a cycle")
        en = _Node(eid=eid, g=gradient, l=length, c=cost)
        self._enode[eid] = en
        self._ends[eid] = (tail, head)
        tn = self._v(tail)
        hn = self._v(head)
        # hang head below the edge node, edge node below tail: the edge
        # node's in-order direction then matches tail -> head
        self._make_root(hn)
        hn.parent = en
        self._make_root(tn)
        en.parent = tn

    def cut(self, eid):
        """Remove the edge and return its accumulated flow (edge orientation)."""
        en = self._enode.pop(eid, None)
        if en is None:
            raise LctError(f"edge {eid} not linked")
        tail, head = self._ends.pop(eid)
        self._make_root(self._vnode[tail])
        self._access(self._vnode[head])
        _splay(en)
        _push(en)
        if en.left:
            en.left.parent = None
            en.left = None
        if en.right:
            en.right.parent = None
            en.right = None
        return en.flow

    def point_flow(self, eid):
        en = self._enode[eid]
        _splay(en)
        return en.flow

    def add_point_flow(self, eid, delta):
        en = self._enode[eid]
        _splay(en)
        en.flow += delta

    def set_values(self, eid, gradient=None, length=None, cost=None):
        en = self._enode[eid]
        _splay(en)
        if gradient is not None:
            en.g = gradient * en.orient
        if length is not None:
            en.l = length
        if cost is not None:
            en.c = cost * en.orient
        _pull(en)

    def path_sums(self, u, v):
        """(signed gradient, unsigned length, signed cost) along u -> v."""
        root = self._expose(u, v)
        return root.g_sum, root.l_sum, root.c_sum

    def path_add(self, u, v, eta):
        """Push eta units of flow along the tree path u -> v."""
        root = self._expose(u, v)
        _apply_add(root, eta)

    def path_edges(self, u, v):
        """Edges along u -> v as [(eid, sign)] in path order."""
        root = self._expose(u, v)
        out = []

        def walk(x):
            stack = [(x, False)]
            while stack:
                nd, expanded = stack.pop()
                if nd is None:
                    continue
                if expanded:
                    if nd.eid is not None:
                        out.append((nd.eid, nd.orient))
                    continue
                _push(nd)
                stack.append((nd.right, False))
                stack.append((nd, True))
                stack.append((nd.left, False))

        walk(root)
        return out

    def sample_by_length(self, u, v, position):
        """Edge at length-prefix `position` along the u -> v path."""
        x = self._expose(u, v)
        if position < 0 or position >= x.l_sum:
            raise LctError("sample position outside path length")
        while True:
            _push(x)
            left_len = x.left.l_sum if x.left else 0.0
            if position < left_len:
                x = x.left
            elif x.eid is not None and position < left_len + x.l:
                _splay(x)
                return x.eid
            else:
                position -= left_len + x.l
                x = x.right

    def _expose(self, u, v):
        if u == v:
            raise LctError("path endpoints coincide")
        un = self._vnode.get(u)
        vn = self._vnode.get(v)
        if un is None or vn is None:
            raise LctError(f"no tree path {u}->{v}")
        self._make_root(un)
        if self._find_root(vn) is not un:
            raise LctError(f"no tree path {u}->{v}")
        self._access(vn)
        return vn
