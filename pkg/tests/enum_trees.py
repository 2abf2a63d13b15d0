"""Exhaustive enumeration of small colored labeled trees.

Shapes are nested tuples: () is a leaf, (s1, ..., sk) a node whose i-th child
subtree has shape si.  Nodes are indexed in preorder; edge labels are listed
in preorder over non-root nodes; colorings are tuples over preorder nodes.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import product

from bookwalk.tree import GREEN, RED, WHITE, ColoredTree


@lru_cache(maxsize=None)
def shapes(n: int) -> tuple:
    """All ordered rooted tree shapes with exactly n nodes."""
    if n == 1:
        return ((),)
    out = []
    for first in range(1, n):
        for head in shapes(first):
            for rest in shapes(n - first):
                # graft: rest's root becomes the parent; prepend head as child
                out.append((head,) + rest)
    # the recursion above builds each shape once: first child subtree + remainder
    return tuple(out)


def shape_size(shape) -> int:
    return 1 + sum(shape_size(s) for s in shape)


def preorder_children_counts(shape) -> list[int]:
    out = [len(shape)]
    for s in shape:
        out.extend(preorder_children_counts(s))
    return out


def build(shape, labels, colors, root_label=0) -> ColoredTree:
    """Materialize a (shape, edge labels, colors) triple as a ColoredTree."""
    t = ColoredTree(root_label=root_label, root_color=colors[0])
    pos = [0]  # next preorder index to consume (root already placed)

    def grow(v, sub):
        for child_shape in sub:
            pos[0] += 1
            idx = pos[0]
            c = t.add_child(v, labels[idx - 1], colors[idx])
            grow(c, child_shape)

    grow(0, shape)
    return t


def all_labelings(shape, atoms):
    n = shape_size(shape)
    return product(atoms, repeat=n - 1)


def t0_trees(max_nodes: int, atoms):
    """Every all-white-except-green-root tree with at most max_nodes nodes."""
    for n in range(1, max_nodes + 1):
        for shape in shapes(n):
            colors = (GREEN,) + (WHITE,) * (n - 1)
            for labels in all_labelings(shape, atoms):
                yield build(shape, labels, colors)


def _colorings_rec(shape, parent_white: bool, suffix_white: bool):
    """Color tuples for a subtree; whites may not carry non-white children."""
    if parent_white:
        my_options = (WHITE,)
    else:
        my_options = (WHITE, GREEN, RED)
    for mine in my_options:
        child_lists = [list(_colorings_rec(s, mine == WHITE, suffix_white)) for s in shape]
        for combo in product(*child_lists):
            if suffix_white:
                # non-white children must precede white children
                seen_white = False
                ok = True
                for child_colors in combo:
                    if child_colors[0] == WHITE:
                        seen_white = True
                    elif seen_white:
                        ok = False
                        break
                if not ok:
                    continue
            flat = [mine]
            for child_colors in combo:
                flat.extend(child_colors)
            yield tuple(flat)


def valid_colorings(shape, suffix_white: bool = False):
    """All colorings keeping the non-white set connected with a non-white root."""
    for colors in _colorings_rec(shape, parent_white=False, suffix_white=suffix_white):
        if colors[0] != WHITE:
            yield colors


def colored_trees(max_nodes: int, atoms, suffix_white: bool = False):
    """Every valid colored labeled tree with at most max_nodes nodes."""
    for n in range(1, max_nodes + 1):
        for shape in shapes(n):
            colorings = list(valid_colorings(shape, suffix_white=suffix_white))
            for labels in all_labelings(shape, atoms):
                for colors in colorings:
                    yield build(shape, labels, colors)
