"""Price-drift phase classification and its Monte Carlo corroboration.

Analytics.  With p <= 1/2 the order count is a reflected walk with no upward
drift, the book empties infinitely often and the price is recurrent.  With
p > 1/2 the drift of the price is decided by a = inf_{theta>=0} E[e^{theta X}]:
the price diverges up when p > 1/(1+a) and down when p < 1/(1+a).  A positive
mean displacement always drives the price up, and a heavy right tail forces
a = 1, threshold 1/2, so the price diverges up for every p > 1/2 no matter
how negative the mean is.  The boundary cases (zero mean, p exactly at the
threshold) are reported as such and not classified further.

Monte Carlo.  ``drift_estimate`` reports the mean of price/horizon across
replicas with a normal 95% CI.  ``survival_curve`` estimates the probability
that the barrier-pruned tree (children below the root's level are discarded
with their descendants) reaches a given depth; survival to depth d decreases
to the probability of an infinite pruned tree, so a CI excluding 0 at a large
depth certifies positive survival.  Exploration uses per-node generators, so
sharing a master seed across truncation levels or across values of p yields
exact pathwise domination, not just stochastic ordering.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from .book import final_state
from .displacement import (
    DisplacementDist,
    MgfAnalysis,
    infimum_mgf,
    mean,
    prob_positive,
    truncate,
)
from .streams import RandomStream, node_generator

__all__ = [
    "RegimeReport",
    "classify",
    "DriftEstimate",
    "drift_estimate",
    "SurvivalEstimate",
    "SurvivalCurve",
    "survival_curve",
    "survival_estimate",
    "TruncationRow",
    "truncation_study",
]

_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class RegimeReport:
    """Analytic classification with the quantities that decided it."""

    regime: str  # Recurrent | DivergesUp | DivergesDown | Boundary
    p: float
    mean_x: float
    prob_positive: float
    a: float
    theta_star: float
    threshold: float
    mgf_finite_somewhere: bool
    reasons: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "regime": self.regime,
            "p": self.p,
            "meanX": self.mean_x,
            "probPositive": self.prob_positive,
            "a": self.a,
            "thetaStar": self.theta_star,
            "threshold": self.threshold,
            "mgfFiniteSomewhere": self.mgf_finite_somewhere,
            "reasons": list(self.reasons),
        }


def classify(p: float, dist: DisplacementDist) -> RegimeReport:
    """Decide the long-run behavior of the price for (p, X)."""
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    mx = float(mean(dist))
    pp = float(prob_positive(dist))
    analysis = infimum_mgf(dist)
    thr = analysis.threshold
    reasons: list[str] = []

    if p <= 0.5:
        regime = "Recurrent"
        reasons.append(
            "p <= 1/2: the order count is a reflected walk without upward drift, "
            "so the book empties infinitely often and the price returns to 0"
        )
    elif mx > 0:
        regime = "DivergesUp"
        reasons.append("p > 1/2 and E[X] > 0: every surviving line of orders drifts up")
    elif mx == 0:
        regime = "Boundary"
        reasons.append("E[X] = 0: excluded boundary case, no classification")
    elif pp == 0:
        regime = "DivergesDown"
        reasons.append(
            "P(X > 0) = 0 with E[X] < 0: the price can never increase "
            "(outside the drift dichotomy's hypotheses)"
        )
    else:
        if not analysis.mgf_finite_somewhere:
            reasons.append(
                "heavy right tail: exponential moments all infinite, so a = 1 "
                "and the threshold is 1/2, independent of p and E[X]"
            )
        if abs(p - thr) <= _BOUNDARY_TOL:
            regime = "Boundary"
            reasons.append("p = 1/(1+a): excluded boundary case, no classification")
        elif p > thr:
            regime = "DivergesUp"
            reasons.append(f"p = {p} exceeds the drift threshold 1/(1+a) = {thr}")
        else:
            regime = "DivergesDown"
            reasons.append(f"p = {p} is below the drift threshold 1/(1+a) = {thr}")

    return RegimeReport(
        regime=regime,
        p=p,
        mean_x=mx,
        prob_positive=pp,
        a=analysis.a,
        theta_star=analysis.theta_star,
        threshold=thr,
        mgf_finite_somewhere=analysis.mgf_finite_somewhere,
        reasons=tuple(reasons),
    )


@dataclass(frozen=True)
class DriftEstimate:
    """Mean of price/horizon across replicas, with a normal 95% CI."""

    slope: float
    ci95: float
    horizon: int
    replicas: int
    fraction_positive: float

    @property
    def ci_low(self) -> float:
        return self.slope - self.ci95

    @property
    def ci_high(self) -> float:
        return self.slope + self.ci95

    def to_json(self) -> dict:
        return {
            "slope": self.slope,
            "ci95": self.ci95,
            "horizon": self.horizon,
            "replicas": self.replicas,
            "fractionPositive": self.fraction_positive,
        }


def drift_estimate(
    p: float,
    dist: DisplacementDist,
    horizon: int,
    replicas: int,
    seed: int,
    threads: int = 1,
) -> DriftEstimate:
    """Finite-horizon drift proxy: mean and CI of price(horizon)/horizon."""
    if horizon <= 0 or replicas <= 0:
        raise ValueError("horizon and replicas must be positive")

    def one(i: int) -> float:
        pos, _ = final_state(p, dist, horizon, RandomStream(seed, i))
        return float(dist.unscale(pos)) / horizon

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            slopes = list(pool.map(one, range(replicas)))
    else:
        slopes = [one(i) for i in range(replicas)]

    m = sum(slopes) / replicas
    if replicas > 1:
        var = sum((s - m) ** 2 for s in slopes) / (replicas - 1)
        ci = 1.96 * math.sqrt(var / replicas)
    else:
        ci = 0.0
    frac = sum(1 for s in slopes if s > 0) / replicas
    return DriftEstimate(
        slope=m, ci95=ci, horizon=horizon, replicas=replicas, fraction_positive=frac
    )


@dataclass(frozen=True)
class SurvivalEstimate:
    depth: int
    probability: float
    ci_low: float
    ci_high: float
    budget_fraction: float
    replicas: int


@dataclass(frozen=True)
class SurvivalCurve:
    """Depth-survival estimates from one shared set of replicas.

    ``replica_depths[i]`` is the deepest level the i-th pruned tree reached,
    capped at max(depths); the per-depth estimates are read off this single
    array, so monotonicity in depth is exact by construction.
    """

    depths: tuple[int, ...]
    estimates: tuple[SurvivalEstimate, ...]
    replica_depths: tuple[int, ...]
    budget_hits: int

    def estimate_at(self, depth: int) -> SurvivalEstimate:
        for e in self.estimates:
            if e.depth == depth:
                return e
        raise KeyError(depth)


def _wilson_interval(hits: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    ph = hits / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (ph + z2 / (2 * n)) / denom
    half = z * math.sqrt(ph * (1 - ph) / n + z2 / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def _explore_pruned_depth(
    p: float,
    dist: DisplacementDist,
    depth_cap: int,
    seed: int,
    replica: int,
    node_budget: int,
) -> tuple[int, bool]:
    """Deepest level reached by the barrier-pruned tree, capped.

    Children with label below the root's level (0) are discarded with their
    descendants.  Each node's offspring coins and labels come from its own
    path-keyed generator, so the outcome is a pure function of (seed, replica,
    p, label law) and clipping labels or lowering p prunes pathwise.
    Replicas that exhaust the node budget count as having reached the cap and
    are flagged.
    """
    best = 0
    expanded = 0
    stack: list[tuple[tuple[int, ...], int, object]] = [((), 0, 0)]
    while stack:
        path, depth, label = stack.pop()
        if depth == depth_cap:
            return (depth_cap, False)
        expanded += 1
        if expanded > node_budget:
            return (depth_cap, True)
        gen = node_generator(seed, replica, path)
        idx = 0
        while gen.random() < p:
            x = dist.quantile_internal(gen.random())
            child_label = label + x
            if child_label >= 0:
                if depth + 1 > best:
                    best = depth + 1
                stack.append((path + (idx,), depth + 1, child_label))
            idx += 1
    return (best, False)


def survival_curve(
    p: float,
    dist: DisplacementDist,
    depths: Sequence[int],
    replicas: int,
    seed: int,
    node_budget: int = 10_000_000,
    threads: int = 1,
) -> SurvivalCurve:
    """Estimate P(pruned tree reaches depth d) for each requested depth."""
    if not depths or any(d < 0 for d in depths):
        raise ValueError("depths must be nonnegative")
    if replicas <= 0:
        raise ValueError("replicas must be positive")
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    cap = max(depths)

    def one(i: int) -> tuple[int, bool]:
        return _explore_pruned_depth(p, dist, cap, seed, i, node_budget)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(replicas)))
    else:
        results = [one(i) for i in range(replicas)]

    replica_depths = tuple(d for d, _ in results)
    budget_hits = sum(1 for _, hit in results if hit)
    estimates = []
    for d in depths:
        hits = sum(1 for rd in replica_depths if rd >= d)
        lo, hi = _wilson_interval(hits, replicas)
        estimates.append(
            SurvivalEstimate(
                depth=d,
                probability=hits / replicas,
                ci_low=lo,
                ci_high=hi,
                budget_fraction=budget_hits / replicas,
                replicas=replicas,
            )
        )
    return SurvivalCurve(
        depths=tuple(depths),
        estimates=tuple(estimates),
        replica_depths=replica_depths,
        budget_hits=budget_hits,
    )


def survival_estimate(
    p: float,
    dist: DisplacementDist,
    depth: int,
    replicas: int,
    seed: int,
    node_budget: int = 10_000_000,
    threads: int = 1,
) -> SurvivalEstimate:
    """Single-depth convenience wrapper around ``survival_curve``."""
    curve = survival_curve(p, dist, [depth], replicas, seed, node_budget, threads)
    return curve.estimates[0]


@dataclass(frozen=True)
class TruncationRow:
    clip: float
    a: float
    threshold: float
    depth: int
    probability: float
    ci_low: float
    ci_high: float
    budget_fraction: float


def truncation_study(
    p: float,
    dist: DisplacementDist,
    clip_levels: Sequence[float],
    depth: int,
    replicas: int,
    seed: int,
    node_budget: int = 10_000_000,
    threads: int = 1,
) -> list[TruncationRow]:
    """Per-truncation analysis: a_K, its threshold, and pruned-tree survival.

    All rows share the master seed, and labels of the K-truncated law are the
    pointwise clip of the untruncated labels, so survival under a smaller K
    implies survival under a larger one, replica by replica.
    """
    if list(clip_levels) != sorted(clip_levels):
        raise ValueError("clip levels must be increasing")
    rows = []
    for k in clip_levels:
        dk = truncate(dist, k)
        analysis = infimum_mgf(dk)
        est = survival_estimate(p, dk, depth, replicas, seed, node_budget, threads)
        rows.append(
            TruncationRow(
                clip=float(k),
                a=analysis.a,
                threshold=analysis.threshold,
                depth=depth,
                probability=est.probability,
                ci_low=est.ci_low,
                ci_high=est.ci_high,
                budget_fraction=est.budget_fraction,
            )
        )
    return rows
