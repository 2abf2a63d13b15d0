"""Shared test helpers: scripted streams, benchmark laws, tree builders."""

from __future__ import annotations

from fractions import Fraction

import pytest

from bookwalk import DiscreteDist, HeavyTailDist
from bookwalk.tree import GREEN, ColoredTree


class ScriptedStream:
    """Stream replaying a fixed script of coin outcomes and uniforms."""

    def __init__(self, coins=(), uniforms=()):
        self.coins = list(coins)
        self.uniforms = list(uniforms)

    def coin(self, p):
        return bool(self.coins.pop(0))

    def value_uniform(self):
        return float(self.uniforms.pop(0))


def u_for_value(dist: DiscreteDist, value) -> float:
    """A uniform that the inverse CDF maps to the given atom."""
    cum = 0.0
    for v, p in dist.atoms:
        if float(v) == float(value):
            return cum + float(p) / 2.0
        cum += float(p)
    raise KeyError(value)


def build_tree(root_label, root_color, children_spec) -> ColoredTree:
    """Hand-build a tree; children_spec is [(edge, color, sub_spec), ...]."""
    t = ColoredTree(root_label=root_label, root_color=root_color)

    def grow(v, spec):
        for edge, color, sub in spec:
            c = t.add_child(v, edge, color)
            grow(c, sub)

    grow(0, children_spec)
    return t


@pytest.fixture
def dist_third() -> DiscreteDist:
    """X = -1 w.p. 2/3, +1 w.p. 1/3."""
    return DiscreteDist(atoms=((-1, Fraction(2, 3)), (1, Fraction(1, 3))))


@pytest.fixture
def dist_quarter() -> DiscreteDist:
    """X = -2 w.p. 3/4, +1 w.p. 1/4."""
    return DiscreteDist(atoms=((-2, Fraction(3, 4)), (1, Fraction(1, 4))))


@pytest.fixture
def dist_half() -> DiscreteDist:
    """X = -1 or +1 with equal probability."""
    return DiscreteDist(atoms=((-1, Fraction(1, 2)), (1, Fraction(1, 2))))


@pytest.fixture
def heavy_neg_mean() -> HeavyTailDist:
    """Heavy right tail with negative mean: E[X] = -1.5, P(X>0) = 1/4."""
    return HeavyTailDist(neg_value=-3, neg_prob=Fraction(3, 4), alpha=1.5, scale=1.0)
