"""Colored labeled trees and the operator calculus driving the order book.

Nodes carry one of three colors: white (order not yet placed), green (order
resting in the book) and red (order removed).  Each edge carries a real label;
a node's label is the root label plus the sum of edge labels along its root
path.  The set of non-white nodes is always connected and contains the root.

The one-step dynamic ``tree_step`` mirrors the book transition: the green
node with the largest label (ties broken by taking the last node in
lexicographic order) either promotes its first white child to green, or, if
it has none left, turns red.  Reading off the green labels as a point measure
then reproduces the book chain.

Trees are generated from a supercritical branching process whose offspring
law is geometric on {0, 1, 2, ...} with success parameter p:

    P(N = k) = (1 - p) * p**k,   mean p / (1 - p),

the convention forced by the step-by-step construction (each reveal succeeds
with probability p and stops with probability 1 - p) and under which the tree
is supercritical exactly when p > 1/2.  Trees can be realized eagerly with
depth/node caps, or lazily: offspring are revealed one at a time, on demand,
against a RandomStream, which is how infinite trees are driven.

Operators return modified copies; the ``*_inplace`` variants mutate and exist
for long simulations.  Both paths produce bit-identical trees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .book import Book
from .displacement import DisplacementDist
from .streams import RandomStream

__all__ = [
    "WHITE",
    "GREEN",
    "RED",
    "ColoredTree",
    "GwSpec",
    "NodeFinalizedError",
    "sample_tree",
    "reveal_next_child",
    "green_measure",
    "price_node",
    "white_child_count",
    "first_white_child",
    "tree_step",
    "tree_step_inplace",
    "iterate_steps",
    "depletion_time",
    "step_count",
    "strip_white",
    "promote_first_white",
    "append_green_child",
    "retire_price_node",
    "shift_labels",
    "prune_below",
    "prune_below_root",
    "subtree_at",
    "max_label_at_depth",
    "child_count",
    "dump_snapshot",
    "load_snapshot",
]

WHITE, GREEN, RED = 0, 1, 2
_COLOR_NAMES = {WHITE: "white", GREEN: "green", RED: "red"}
_COLOR_CODES = {v: k for k, v in _COLOR_NAMES.items()}


class NodeFinalizedError(ValueError):
    """Raised when revealing offspring of a node whose brood is complete."""


class ColoredTree:
    """Arena-backed rooted tree with edge labels and node colors.

    Node identity is the arena index; child order is birth order and is
    immutable, which fixes the lexicographic order used for tie-breaking.
    Cumulative labels are cached at creation (edges never change) and kept
    consistent by construction.
    """

    __slots__ = (
        "parent",
        "kidx",
        "depth",
        "edge",
        "label",
        "color",
        "children",
        "finalized",
        "root_label",
        "green_count",
        "red_count",
        "p",
        "dist",
        "capped",
    )

    def __init__(self, root_label=0, root_color: int = GREEN, p: Optional[float] = None,
                 dist: Optional[DisplacementDist] = None) -> None:
        lazy = p is not None
        self.parent = [-1]
        self.kidx = [0]
        self.depth = [0]
        self.edge = [0]
        self.label = [root_label]
        self.color = [root_color]
        self.children: list[list[int]] = [[]]
        self.finalized = [not lazy]
        self.root_label = root_label
        self.green_count = 1 if root_color == GREEN else 0
        self.red_count = 1 if root_color == RED else 0
        self.p = p
        self.dist = dist
        self.capped = False

    @classmethod
    def lazy_root(cls, p: float, dist: DisplacementDist, root_label=0) -> "ColoredTree":
        """Fresh lazily-revealed tree: green root, offspring undetermined."""
        if not 0 < p < 1:
            raise ValueError("p must lie in (0, 1)")
        return cls(root_label=root_label, root_color=GREEN, p=p, dist=dist)

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    def add_child(self, v: int, edge_label, color: int, finalized: bool = True) -> int:
        """Append a child to v, after all existing children."""
        idx = len(self.parent)
        self.parent.append(v)
        self.kidx.append(len(self.children[v]))
        self.depth.append(self.depth[v] + 1)
        self.edge.append(edge_label)
        self.label.append(self.label[v] + edge_label)
        self.color.append(color)
        self.children.append([])
        self.finalized.append(finalized)
        self.children[v].append(idx)
        if color == GREEN:
            self.green_count += 1
        elif color == RED:
            self.red_count += 1
        return idx

    def set_color(self, v: int, color: int) -> None:
        old = self.color[v]
        if old == color:
            return
        if old == GREEN:
            self.green_count -= 1
        elif old == RED:
            self.red_count -= 1
        if color == GREEN:
            self.green_count += 1
        elif color == RED:
            self.red_count += 1
        self.color[v] = color

    def lex_gt(self, a: int, b: int) -> bool:
        """True when node a comes strictly after node b in lexicographic order."""
        if a == b:
            return False
        parent, kidx, depth = self.parent, self.kidx, self.depth
        da, db = depth[a], depth[b]
        ia, ib = a, b
        wa, wb = da, db
        while wa > wb:
            ia = parent[ia]
            wa -= 1
        while wb > wa:
            ib = parent[ib]
            wb -= 1
        if ia == ib:
            # one path is a prefix of the other; the extension sorts after it
            return da > db
        pa, pb = parent[ia], parent[ib]
        while pa != pb:
            ia, ib = pa, pb
            pa, pb = parent[ia], parent[ib]
        return kidx[ia] > kidx[ib]

    def node_path(self, v: int) -> tuple[int, ...]:
        path: list[int] = []
        while v != 0:
            path.append(self.kidx[v])
            v = self.parent[v]
        path.reverse()
        return tuple(path)

    def clone(self) -> "ColoredTree":
        t = ColoredTree.__new__(ColoredTree)
        t.parent = list(self.parent)
        t.kidx = list(self.kidx)
        t.depth = list(self.depth)
        t.edge = list(self.edge)
        t.label = list(self.label)
        t.color = list(self.color)
        t.children = [list(c) for c in self.children]
        t.finalized = list(self.finalized)
        t.root_label = self.root_label
        t.green_count = self.green_count
        t.red_count = self.red_count
        t.p = self.p
        t.dist = self.dist
        t.capped = self.capped
        return t

    def canonical(self):
        """Structural key: root label plus (path, edge label, color) triples."""
        out = [self.root_label]
        stack = [(0, ())]
        items = []
        while stack:
            v, path = stack.pop()
            items.append((path, self.edge[v] if v != 0 else None, self.color[v]))
            for c in reversed(self.children[v]):
                stack.append((c, path + (self.kidx[c],)))
        items.sort()
        return (out[0], tuple(items))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ColoredTree):
            return NotImplemented
        return self.canonical() == other.canonical()

    def __hash__(self) -> int:
        return hash(self.canonical())

    def check_valid(self) -> None:
        """Assert the structural invariants; raises AssertionError on breach."""
        assert self.color[0] != WHITE, "root must be green or red"
        for v in range(1, self.n_nodes):
            if self.color[v] != WHITE:
                assert self.color[self.parent[v]] != WHITE, "non-white set must be connected"
            expect = self.label[self.parent[v]] + self.edge[v]
            assert self.label[v] == expect, "cached label out of sync"
        assert self.green_count == sum(1 for c in self.color if c == GREEN)
        assert self.red_count == sum(1 for c in self.color if c == RED)

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return (
            f"ColoredTree(nodes={self.n_nodes}, green={self.green_count}, "
            f"red={self.red_count}, root_label={self.root_label})"
        )


@dataclass(frozen=True)
class GwSpec:
    """Generation parameters for an eager, capped random tree."""

    p: float
    dist: DisplacementDist
    max_depth: int
    max_nodes: int

    def __post_init__(self) -> None:
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")
        if self.max_depth <= 0 or self.max_nodes <= 0:
            raise ValueError("caps must be positive")


def sample_tree(spec: GwSpec, stream: RandomStream) -> ColoredTree:
    """Eagerly generate a capped random tree: green root at 0, white elsewhere.

    Each node draws children one coin at a time (success probability p), so
    the genealogy is a function of the coin substream alone; two runs sharing
    a stream but differing only in the displacement law produce identical
    shapes with per-edge-comparable labels.
    """
    t = ColoredTree(root_label=0, root_color=GREEN)
    dist = spec.dist
    queue = [0]
    head = 0
    while head < len(queue):
        v = queue[head]
        head += 1
        if t.depth[v] == spec.max_depth:
            # one probing flip: records whether the cap actually cut offspring
            if stream.coin(spec.p):
                t.capped = True
            continue
        while stream.coin(spec.p):
            if t.n_nodes >= spec.max_nodes:
                t.capped = True
                break
            x = dist.quantile_internal(stream.value_uniform())
            queue.append(t.add_child(v, x, WHITE, finalized=True))
    return t


def reveal_next_child(t: ColoredTree, v: int, stream: RandomStream) -> Optional[int]:
    """Realize one more offspring draw of v in a lazy tree.

    With probability p appends a fresh white child and returns its id; with
    probability 1-p finalizes v's brood and returns None.  Successive calls
    realize exactly the geometric offspring law.
    """
    if t.p is None:
        raise ValueError("reveal_next_child requires a lazily-generated tree")
    if t.finalized[v]:
        raise NodeFinalizedError(f"offspring of node {v} already finalized")
    if stream.coin(t.p):
        x = t.dist.quantile_internal(stream.value_uniform())
        return t.add_child(v, x, WHITE, finalized=False)
    t.finalized[v] = True
    return None


def green_measure(t: ColoredTree) -> Book:
    """Point measure of the green node labels."""
    color, label = t.color, t.label
    orders: dict = {}
    for v in range(t.n_nodes):
        if color[v] == GREEN:
            pos = label[v]
            orders[pos] = orders.get(pos, 0) + 1
    return Book(orders)


def price_node(t: ColoredTree) -> int:
    """Green node with the largest label; ties take the lex-last node."""
    if t.green_count == 0:
        raise ValueError("tree has no green node")
    color, label = t.color, t.label
    best = -1
    best_label = None
    for v in range(t.n_nodes):
        if color[v] == GREEN:
            l = label[v]
            if best < 0 or l > best_label or (l == best_label and t.lex_gt(v, best)):
                best, best_label = v, l
    return best


def first_white_child(t: ColoredTree, v: int) -> Optional[int]:
    for c in t.children[v]:
        if t.color[c] == WHITE:
            return c
    return None


def white_child_count(t: ColoredTree, v: Optional[int] = None) -> int:
    """Number of materialized white children of v (default: the price node)."""
    if v is None:
        v = price_node(t)
    return sum(1 for c in t.children[v] if t.color[c] == WHITE)


def tree_step_inplace(t: ColoredTree, stream: Optional[RandomStream] = None):
    """One step of the color dynamic; returns the event.

    Events: ``("noop", None)`` when no green node exists; ``("promote", v)``
    when a white child of the price node turned green; ``("retire", v)`` when
    the price node turned red.  Lazy nodes resolve their next-white question
    by revealing against the stream.
    """
    if t.green_count == 0:
        return ("noop", None)
    g = price_node(t)
    w = first_white_child(t, g)
    if w is not None:
        t.set_color(w, GREEN)
        return ("promote", w)
    if not t.finalized[g]:
        if stream is None:
            raise ValueError("stepping a lazy tree requires a stream")
        w = reveal_next_child(t, g, stream)
        if w is not None:
            t.set_color(w, GREEN)
            return ("promote", w)
    t.set_color(g, RED)
    return ("retire", g)


def tree_step(t: ColoredTree, stream: Optional[RandomStream] = None) -> ColoredTree:
    """Copy-returning variant of the one-step dynamic."""
    out = t.clone()
    tree_step_inplace(out, stream)
    return out


def iterate_steps(t: ColoredTree, n: int, stream: Optional[RandomStream] = None) -> ColoredTree:
    """n-fold composition of the one-step dynamic."""
    out = t.clone()
    for _ in range(n):
        tree_step_inplace(out, stream)
    return out


def depletion_time(t: ColoredTree, cap: int, stream: Optional[RandomStream] = None) -> Optional[int]:
    """First iterate with no green node, or None if beyond ``cap`` steps."""
    work = t.clone()
    for n in range(cap + 1):
        if work.green_count == 0:
            return n
        tree_step_inplace(work, stream)
    return None


def step_count(t: ColoredTree) -> int:
    """Number of dynamic steps absorbed: greens + twice reds, minus one."""
    return t.green_count + 2 * t.red_count - 1


def _rebuild(t: ColoredTree, keep, root: int = 0, root_label=None) -> ColoredTree:
    """Copy the subtree under ``root`` restricted to nodes passing ``keep``."""
    out = ColoredTree.__new__(ColoredTree)
    rl = t.label[root] if root_label is None else root_label
    out.parent = [-1]
    out.kidx = [0]
    out.depth = [0]
    out.edge = [0]
    out.label = [rl]
    out.color = [t.color[root]]
    out.children = [[]]
    out.finalized = [t.finalized[root]]
    out.root_label = rl
    out.green_count = 1 if t.color[root] == GREEN else 0
    out.red_count = 1 if t.color[root] == RED else 0
    out.p = t.p
    out.dist = t.dist
    out.capped = t.capped
    stack = [(root, 0)]
    while stack:
        v, nv = stack.pop()
        for c in t.children[v]:
            if keep(c):
                nc = out.add_child(nv, t.edge[c], t.color[c], t.finalized[c])
                stack.append((c, nc))
    return out


def strip_white(t: ColoredTree) -> ColoredTree:
    """Delete every white node (connectivity keeps the rest a tree).

    Node identity is preserved whenever white children sit after all
    non-white children of each node, which holds on every tree evolved from
    an all-white-except-root start.
    """
    return _rebuild(t, lambda v: t.color[v] != WHITE)


def promote_first_white(t: ColoredTree) -> ColoredTree:
    """Turn the first white child of the price node green."""
    g = price_node(t)
    w = first_white_child(t, g)
    if w is None:
        raise ValueError("price node has no white child")
    out = t.clone()
    out.set_color(w, GREEN)
    return out


def append_green_child(t: ColoredTree, edge_label) -> ColoredTree:
    """Add a green child to the price node, after all existing children."""
    g = price_node(t)
    out = t.clone()
    out.add_child(g, edge_label, GREEN, finalized=True)
    return out


def retire_price_node(t: ColoredTree) -> ColoredTree:
    """Turn the price node red."""
    g = price_node(t)
    out = t.clone()
    out.set_color(g, RED)
    return out


def shift_labels(t: ColoredTree, delta) -> ColoredTree:
    """Add ``delta`` to the root label, and hence to every node label."""
    out = t.clone()
    out.root_label = out.root_label + delta
    out.label = [l + delta for l in out.label]
    return out


def prune_below(t: ColoredTree, level) -> ColoredTree:
    """Remove every node with label below ``level`` together with its subtree."""
    if t.root_label < level:
        raise ValueError("barrier above the root label would erase the tree")
    return _rebuild(t, lambda v: t.label[v] >= level)


def prune_below_root(t: ColoredTree) -> ColoredTree:
    """Barrier at the root's own label."""
    return prune_below(t, t.root_label)


def subtree_at(t: ColoredTree, v: int) -> ColoredTree:
    """Subtree rooted at v; v's label becomes the new root label."""
    if not 0 <= v < t.n_nodes:
        raise ValueError(f"node {v} not in tree")
    return _rebuild(t, lambda _: True, root=v)


def max_label_at_depth(t: ColoredTree, n: int) -> float:
    """Largest label among depth-n nodes; -inf when that level is empty."""
    if n < 0:
        raise ValueError("depth must be nonnegative")
    best = -math.inf
    depth, label = t.depth, t.label
    for v in range(t.n_nodes):
        if depth[v] == n and label[v] > best:
            best = label[v]
    return best


def child_count(t: ColoredTree, v: int) -> int:
    return len(t.children[v])


def dump_snapshot(t: ColoredTree) -> str:
    """Debug export: one line per node, ``nodeId parentId edgeLabel color``.

    Root first with parentId -1 and the root label in the edge column;
    children follow in lexicographic order.
    """
    lines = []
    stack = [0]
    while stack:
        v = stack.pop()
        lab = t.root_label if v == 0 else t.edge[v]
        lines.append(f"{v} {t.parent[v]} {lab} {_COLOR_NAMES[t.color[v]]}")
        for c in reversed(t.children[v]):
            stack.append(c)
    return "\n".join(lines) + "\n"


def load_snapshot(text: str) -> ColoredTree:
    """Inverse of ``dump_snapshot`` (labels parsed as int when possible)."""

    def parse_num(s: str):
        try:
            return int(s)
        except ValueError:
            return float(s)

    rows = [line.split() for line in text.strip().splitlines()]
    first = rows[0]
    t = ColoredTree(root_label=parse_num(first[2]), root_color=_COLOR_CODES[first[3]])
    remap = {int(first[0]): 0}
    for node_id, parent_id, lab, colname in rows[1:]:
        v = remap[int(parent_id)]
        remap[int(node_id)] = t.add_child(v, parse_num(lab), _COLOR_CODES[colname])
    return t
