"""Pathwise and distributional coupling of the book chain with a random tree.

The coupled driver runs the order-book chain and a lazily-revealed random
tree against two copies of the same seeded stream.  Both consume one coin per
nonempty step and one displacement draw per add step, so the tree's green
measure reproduces the book multiset step for step, exactly.  When the tree
runs out of green nodes (equivalently, the book empties) a fresh tree is
drawn: the chain regenerates.

The skeleton chain is the sequence of white-stripped trees, a Markov chain in
its own right: from any state with a green node it either gains a green child
of the price node carrying a displacement x (probability p * P(X = x)) or
retires its price node (probability 1 - p).  Its transitions are tallied here
by diffing successive green measures, never by peeking at the driving coins,
so the tally is an honest check of the induced law.

Statistical equality in distribution is tested with a two-sample KS statistic
on prices and a two-sample chi-square on masses, with Bonferroni correction.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Optional

from scipy.stats import chi2 as _chi2

from .book import Book, BookTrajectory, final_state
from .displacement import DiscreteDist, DisplacementDist
from .streams import RandomStream
from .tree import (
    GREEN,
    RED,
    ColoredTree,
    append_green_child,
    retire_price_node,
    strip_white,
    tree_step_inplace,
)

__all__ = [
    "CoupledRun",
    "coupled_run",
    "skeleton_chain",
    "skeleton_transition_tally",
    "skeleton_from_measures",
    "KsResult",
    "ks_two_sample",
    "ChiSquareResult",
    "chi_square_two_sample",
    "TestResult",
    "DistributionalReport",
    "distributional_test",
]


class _RevLex:
    """Heap key ordering nodes by *reversed* lexicographic order."""

    __slots__ = ("t", "v")

    def __init__(self, t: ColoredTree, v: int) -> None:
        self.t = t
        self.v = v

    def __lt__(self, other: "_RevLex") -> bool:
        return self.t.lex_gt(self.v, other.v)


class _TreeChain:
    """Lazy tree driven by the color dynamic, regenerating at depletion.

    Greens sit in a max-heap keyed by (label, lex-last).  Only the heap top
    ever turns red and new greens are pushed as they appear, so the heap never
    holds stale entries and its top is always the price node.
    """

    __slots__ = ("p", "dist", "stream", "tree", "heap", "min_one_child")

    def __init__(self, p: float, dist: DisplacementDist, stream: RandomStream,
                 offspring: str = "standard") -> None:
        if offspring not in ("standard", "shifted"):
            raise ValueError("offspring must be 'standard' or 'shifted'")
        self.p = p
        self.dist = dist
        self.stream = stream
        self.min_one_child = offspring == "shifted"
        self._fresh()

    def _fresh(self) -> None:
        self.tree = ColoredTree.lazy_root(self.p, self.dist)
        self.heap = [(-self.tree.root_label, _RevLex(self.tree, 0))]

    @property
    def green_mass(self) -> int:
        return self.tree.green_count

    def price(self):
        """Largest green label; 0 when no green node exists."""
        if self.tree.green_count == 0:
            return 0
        return -self.heap[0][0]

    def step(self):
        """Advance one step; returns (kind, position, price_before)."""
        t = self.tree
        if t.green_count == 0:
            self._fresh()
            return ("restart", 0, 0)
        g = self.heap[0][1].v
        price = t.label[g]
        if self.min_one_child and not t.children[g]:
            reveal = True  # shifted offspring law: first child is certain
        else:
            reveal = self.stream.coin(self.p)
        if reveal:
            x = self.dist.quantile_internal(self.stream.value_uniform())
            c = t.add_child(g, x, GREEN, finalized=False)
            pos = t.label[c]
            heapq.heappush(self.heap, (-pos, _RevLex(t, c)))
            return ("add", pos, price)
        heapq.heappop(self.heap)
        t.finalized[g] = True
        t.set_color(g, RED)
        return ("remove", price, price)


@dataclass
class CoupledRun:
    """One shared-stream run of the book chain and the tree chain."""

    book_traj: BookTrajectory
    tree_prices: list
    tree_masses: list[int]
    tree_books: Optional[list[Book]]
    regeneration_steps: list[int]
    multisets_equal: bool
    first_mismatch: Optional[int]
    full_checks: int


def coupled_run(
    p: float,
    dist: DisplacementDist,
    horizon: int,
    seed: int,
    stream_id: int = 0,
    store_states: bool = False,
    check_every: int = 512,
) -> CoupledRun:
    """Drive book and tree from the same stream and compare step for step.

    Every step the two sides' events (add/remove/restart plus position) are
    compared exactly, and the full order multisets are compared at every
    ``check_every`` steps and at the horizon.  Equal initial states plus equal
    per-step deltas imply equal multisets at every step; the periodic full
    comparisons guard the state bookkeeping itself.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    book_stream = RandomStream(seed, stream_id)
    tree_stream = RandomStream(seed, stream_id)
    unscale = dist.unscale

    bheap: list = [0]
    bmass = 1
    bcounts: dict = {0: 1}
    chain = _TreeChain(p, dist, tree_stream)
    tcounts: dict = {0: 1}

    zero = unscale(0)
    bprices = [zero]
    bmasses = [1]
    tprices = [zero]
    tmasses = [1]
    bstates = [Book.dirac(zero)] if store_states else None
    tstates = [Book.dirac(zero)] if store_states else None
    regenerations: list[int] = []
    tau: Optional[int] = None
    first_mismatch: Optional[int] = None
    full_checks = 0

    for n in range(1, horizon + 1):
        # book side
        if bmass == 0:
            bheap = [0]
            bmass = 1
            bcounts = {0: 1}
            b_event = ("restart", 0)
        elif book_stream.coin(p):
            x = dist.quantile_internal(book_stream.value_uniform())
            pos = -bheap[0] + x
            heapq.heappush(bheap, -pos)
            bmass += 1
            bcounts[pos] = bcounts.get(pos, 0) + 1
            b_event = ("add", pos)
        else:
            pos = -heapq.heappop(bheap)
            bmass -= 1
            if bcounts[pos] == 1:
                del bcounts[pos]
            else:
                bcounts[pos] -= 1
            b_event = ("remove", pos)

        # tree side
        kind, pos, _ = chain.step()
        if kind == "restart":
            tcounts = {0: 1}
            regenerations.append(n)
            t_event = ("restart", 0)
        elif kind == "add":
            tcounts[pos] = tcounts.get(pos, 0) + 1
            t_event = ("add", pos)
        else:
            if tcounts[pos] == 1:
                del tcounts[pos]
            else:
                tcounts[pos] -= 1
            t_event = ("remove", pos)

        if first_mismatch is None and b_event != t_event:
            first_mismatch = n
        if first_mismatch is None and (n % check_every == 0 or n == horizon):
            full_checks += 1
            if bcounts != tcounts:
                first_mismatch = n

        bprices.append(unscale(-bheap[0]) if bmass > 0 else 0)
        bmasses.append(bmass)
        tmasses.append(chain.green_mass)
        tprices.append(unscale(chain.price()) if chain.green_mass > 0 else 0)
        if tau is None and bmass == 0:
            tau = n
        if store_states:
            bstates.append(Book.from_pairs((unscale(k), c) for k, c in bcounts.items()))
            tstates.append(Book.from_pairs((unscale(k), c) for k, c in tcounts.items()))

    traj = BookTrajectory(prices=bprices, masses=bmasses, tau=tau, states=bstates)
    return CoupledRun(
        book_traj=traj,
        tree_prices=tprices,
        tree_masses=tmasses,
        tree_books=tstates,
        regeneration_steps=regenerations,
        multisets_equal=first_mismatch is None,
        first_mismatch=first_mismatch,
        full_checks=full_checks,
    )


def skeleton_chain(p: float, dist: DisplacementDist, horizon: int, seed: int,
                   stream_id: int = 0) -> list[ColoredTree]:
    """White-stripped trees along one run, stopping at depletion or horizon.

    Starts from the deterministic root-only green tree.  Requires a discrete
    displacement law (the transition law is stated atom by atom).
    """
    if not isinstance(dist, DiscreteDist):
        raise ValueError("skeleton chain requires a discrete displacement law")
    stream = RandomStream(seed, stream_id)
    t = ColoredTree.lazy_root(p, dist)
    out = [strip_white(t)]
    for _ in range(horizon):
        if t.green_count == 0:
            break
        tree_step_inplace(t, stream)
        out.append(strip_white(t))
    return out


def skeleton_transition_tally(p: float, dist: DisplacementDist, transitions: int,
                              seed: int, stream_id: int = 0) -> dict:
    """Observed transition counts over ``transitions`` non-restart steps.

    Keys: ``("place", x)`` for a green child added at displacement x (as a
    real value), and ``"retire"``.  Each step is classified by diffing the
    green measure, i.e. from what the transition did, not from the coins that
    drove it.  Regenerations are not tallied.
    """
    if not isinstance(dist, DiscreteDist):
        raise ValueError("transition tally requires a discrete displacement law")
    chain = _TreeChain(p, dist, RandomStream(seed, stream_id))
    tally: dict = {"retire": 0}
    done = 0
    while done < transitions:
        kind, pos, price_before = chain.step()
        if kind == "restart":
            continue
        if kind == "add":
            x = dist.unscale(pos - price_before)
            key = ("place", x)
            tally[key] = tally.get(key, 0) + 1
        else:
            tally["retire"] += 1
        done += 1
    return tally


def skeleton_from_measures(measures: list[Book]) -> list[ColoredTree]:
    """Rebuild the skeleton chain from its green measures alone.

    The first measure must be a single unit atom (the root).  Each successive
    measure differs by one atom: a gained atom at w appends a green child of
    the price node with edge label w - price, a lost atom retires the price
    node, and an unchanged measure (possible only once all greens are gone)
    leaves the tree as is.
    """
    if not measures:
        raise ValueError("need at least one measure")
    first = measures[0].as_sorted_pairs()
    if len(first) != 1 or first[0][1] != 1:
        raise ValueError("first measure must be a single unit atom")
    y = ColoredTree(root_label=first[0][0], root_color=GREEN)
    out = [y]
    for prev, cur in zip(measures, measures[1:]):
        delta = dict(cur.as_dict())
        for pos, c in prev.as_dict().items():
            delta[pos] = delta.get(pos, 0) - c
        delta = {k: v for k, v in delta.items() if v != 0}
        if not delta:
            if prev.mass != 0:
                raise ValueError("unchanged nonempty measure is not a legal transition")
            y = y.clone()
        elif len(delta) == 1 and next(iter(delta.values())) == 1:
            w = next(iter(delta))
            y = append_green_child(y, w - prev.price())
        elif len(delta) == 1 and next(iter(delta.values())) == -1:
            w = next(iter(delta))
            if w != prev.price():
                raise ValueError("removal away from the price is not a legal transition")
            y = retire_price_node(y)
        else:
            raise ValueError("measures differ by more than one atom")
        out.append(y)
    return out


@dataclass(frozen=True)
class KsResult:
    statistic: float
    p_value: float


def ks_two_sample(a, b) -> KsResult:
    """Two-sample KS statistic with the asymptotic two-sided p-value."""
    m, n = len(a), len(b)
    if m == 0 or n == 0:
        raise ValueError("both samples must be nonempty")
    xs = sorted(float(v) for v in a)
    ys = sorted(float(v) for v in b)
    i = j = 0
    d = 0.0
    while i < m and j < n:
        v = xs[i] if xs[i] <= ys[j] else ys[j]
        while i < m and xs[i] == v:
            i += 1
        while j < n and ys[j] == v:
            j += 1
        gap = abs(i / m - j / n)
        if gap > d:
            d = gap
    en = math.sqrt(m * n / (m + n))
    return KsResult(statistic=d, p_value=_kolmogorov_sf(en * d))


def _kolmogorov_sf(lam: float) -> float:
    """Asymptotic survival function of the two-sided KS statistic."""
    if lam < 1e-8:
        return 1.0
    total = 0.0
    for k in range(1, 101):
        term = math.exp(-2.0 * k * k * lam * lam)
        total += -term if k % 2 == 0 else term
        if term < 1e-18:
            break
    return min(1.0, max(0.0, 2.0 * total))


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    df: int
    p_value: float


def chi_square_two_sample(sample_a, sample_b, min_pooled: int = 10) -> ChiSquareResult:
    """Two-sample homogeneity chi-square over discrete categories.

    Categories with pooled counts below ``min_pooled`` are merged into their
    neighbor (categories sorted by value) so expected cell counts stay sane.
    """
    if len(sample_a) == 0 or len(sample_b) == 0:
        raise ValueError("both samples must be nonempty")
    counts_a: dict = {}
    counts_b: dict = {}
    for v in sample_a:
        counts_a[v] = counts_a.get(v, 0) + 1
    for v in sample_b:
        counts_b[v] = counts_b.get(v, 0) + 1
    cats = sorted(set(counts_a) | set(counts_b))
    bins: list[tuple[int, int]] = []
    acc_a = acc_b = 0
    for c in cats:
        acc_a += counts_a.get(c, 0)
        acc_b += counts_b.get(c, 0)
        if acc_a + acc_b >= min_pooled:
            bins.append((acc_a, acc_b))
            acc_a = acc_b = 0
    if acc_a + acc_b > 0:
        if bins:
            last_a, last_b = bins[-1]
            bins[-1] = (last_a + acc_a, last_b + acc_b)
        else:
            bins.append((acc_a, acc_b))
    if len(bins) < 2:
        return ChiSquareResult(statistic=0.0, df=0, p_value=1.0)
    tot_a = sum(a for a, _ in bins)
    tot_b = sum(b for _, b in bins)
    total = tot_a + tot_b
    stat = 0.0
    for a, b in bins:
        col = a + b
        ea = tot_a * col / total
        eb = tot_b * col / total
        stat += (a - ea) ** 2 / ea + (b - eb) ** 2 / eb
    df = len(bins) - 1
    return ChiSquareResult(statistic=stat, df=df, p_value=float(_chi2.sf(stat, df)))


@dataclass(frozen=True)
class TestResult:
    test: str
    n: int
    m: int
    statistic: float
    threshold: float
    p_value: float
    passed: bool

    def to_json(self) -> dict:
        return {
            "test": self.test,
            "n": self.n,
            "m": self.m,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "p_value": self.p_value,
            "pass": self.passed,
        }


@dataclass(frozen=True)
class DistributionalReport:
    tests: tuple[TestResult, ...]
    passed: bool

    def to_json(self) -> dict:
        return {"pass": self.passed, "tests": [t.to_json() for t in self.tests]}


def _tree_final(p: float, dist: DisplacementDist, n: int, stream: RandomStream,
                offspring: str):
    """Price (internal units) and green mass of the tree chain after n steps."""
    chain = _TreeChain(p, dist, stream, offspring=offspring)
    for _ in range(n):
        chain.step()
    return (chain.price(), chain.green_mass)


def distributional_test(
    p: float,
    dist: DisplacementDist,
    n: int,
    m: int,
    seed_a: int,
    seed_b: int,
    alpha: float = 0.01,
    side_b: str = "tree",
    tree_offspring: str = "standard",
) -> DistributionalReport:
    """Compare the step-n marginals (price, mass) of two independent batteries.

    Side A is always m independent book runs.  Side B is m independent tree
    drives (or book runs, for the self-test).  Prices are compared with the
    KS test and masses with the two-sample chi-square, each at level
    alpha / 2 (Bonferroni across the two marginals).
    """
    if side_b not in ("tree", "book"):
        raise ValueError("side_b must be 'tree' or 'book'")
    prices_a = []
    masses_a = []
    for i in range(m):
        pos, mass = final_state(p, dist, n, RandomStream(seed_a, i))
        prices_a.append(float(dist.unscale(pos)))
        masses_a.append(mass)
    prices_b = []
    masses_b = []
    for i in range(m):
        stream = RandomStream(seed_b, i)
        if side_b == "tree":
            pos, mass = _tree_final(p, dist, n, stream, tree_offspring)
        else:
            pos, mass = final_state(p, dist, n, stream)
        prices_b.append(float(dist.unscale(pos)))
        masses_b.append(mass)

    level = alpha / 2.0
    ks = ks_two_sample(prices_a, prices_b)
    cs = chi_square_two_sample(masses_a, masses_b)
    tests = (
        TestResult("ks_price", n, m, ks.statistic, level, ks.p_value, ks.p_value >= level),
        TestResult("chi2_mass", n, m, cs.statistic, level, cs.p_value, cs.p_value >= level),
    )
    return DistributionalReport(tests=tests, passed=all(t.passed for t in tests))
