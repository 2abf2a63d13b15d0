"""Displacement laws: the signed offset of a new order from the current price.

Two families are supported:

* ``DiscreteDist`` -- a finite set of atoms with exact rational probabilities.
  When every atom value is rational the law lives on a lattice and positions
  downstream can be tracked in exact integer arithmetic.
* ``HeavyTailDist`` -- a single negative atom plus a Pareto(alpha, scale)
  right tail.  The exponential moment E[e^{theta X}] is infinite for every
  theta > 0, which is the analytically relevant feature; it is declared, not
  probed numerically.  An optional ``clip`` bound (produced by ``truncate``)
  caps the tail at min(X, K) and restores finite exponential moments.

The quantity driving the drift classification is

    a = inf_{theta >= 0} E[e^{theta X}]

together with the probability threshold 1 / (1 + a).  The objective is convex
on its finiteness domain, so its derivative (available in closed form for
both families; never a numerical difference quotient) changes sign exactly
once: the minimizer is bracketed by doubling until the sign flips and then
resolved by bisection, which is what keeps theta* accurate to ~1e-12, well
past the resolution any value-comparison search can reach in doubles.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from scipy.integrate import quad

from .streams import RandomStream

__all__ = [
    "DiscreteDist",
    "HeavyTailDist",
    "DisplacementDist",
    "MgfAnalysis",
    "mean",
    "prob_positive",
    "mgf",
    "infimum_mgf",
    "threshold",
    "truncate",
    "sample",
    "dist_from_config",
]

# Largest exponent fed to math.exp; above this the MGF is reported as +inf.
_EXP_CAP = 709.0
# Upper end of the bracket search for the MGF minimizer (overflow guard).
_THETA_CAP = 700.0
_BISECT_TOL = 1e-12

Real = Union[int, float, Fraction]


def _as_float(x: Real) -> float:
    return float(x)


def _is_rational(x: Real) -> bool:
    return isinstance(x, (int, Fraction))


@dataclass(frozen=True)
class DiscreteDist:
    """Finite discrete law; atoms sorted by value, probabilities exact."""

    atoms: tuple[tuple[Real, Fraction], ...]

    def __post_init__(self) -> None:
        atoms = tuple(sorted(self.atoms, key=lambda a: _as_float(a[0])))
        object.__setattr__(self, "atoms", atoms)
        values = [v for v, _ in atoms]
        if len(set(map(_as_float, values))) != len(values):
            raise ValueError("atom values must be distinct")
        total = sum((p for _, p in atoms), Fraction(0))
        if any(p < 0 for _, p in atoms):
            raise ValueError("probabilities must be nonnegative")
        if abs(float(total) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {float(total)}, not 1")
        # cumulative thresholds for inverse-CDF sampling (ascending values,
        # so quantiles are monotone and truncation commutes with sampling)
        cum: list[float] = []
        acc = Fraction(0)
        for _, p in atoms:
            acc += p
            cum.append(float(acc))
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", tuple(cum))
        scale = _lattice_scale(values)
        object.__setattr__(self, "lattice_scale", scale)
        if scale is None:
            internal = tuple(float(v) for v in values)
        else:
            internal = tuple(int(v * scale) for v in values)
        object.__setattr__(self, "_internal_values", internal)

    @property
    def values(self) -> tuple[Real, ...]:
        return tuple(v for v, _ in self.atoms)

    @property
    def probs(self) -> tuple[Fraction, ...]:
        return tuple(p for _, p in self.atoms)

    def prob_of(self, value: Real) -> Fraction:
        target = _as_float(value)
        for v, p in self.atoms:
            if _as_float(v) == target:
                return p
        return Fraction(0)

    def quantile_internal(self, u: float):
        """Inverse CDF in internal units (scaled int on a lattice)."""
        return self._internal_values[bisect_right(self._cum, u)]

    def unscale(self, pos):
        """Map an internal position back to a real value."""
        d = self.lattice_scale
        if d is None or d == 1:
            return pos
        return Fraction(pos, d)


@dataclass(frozen=True)
class HeavyTailDist:
    """One negative atom plus a Pareto(alpha, scale) right tail.

    ``clip`` caps the law at min(X, clip); ``clip is None`` means the raw
    heavy tail, whose MGF is infinite for every theta > 0.
    """

    neg_value: Real
    neg_prob: Fraction
    alpha: float
    scale: float
    clip: float | None = None

    def __post_init__(self) -> None:
        if not _as_float(self.neg_value) < 0:
            raise ValueError("negative atom must have value < 0")
        if not 0 < self.neg_prob < 1:
            raise ValueError("negative atom probability must lie in (0, 1)")
        if not self.alpha > 1:
            raise ValueError("tail exponent alpha must exceed 1 (finite mean)")
        if not self.scale > 0:
            raise ValueError("tail scale must be positive")
        if self.clip is not None and self.clip <= self.scale:
            raise ValueError("clip at or below the tail scale collapses to a discrete law")

    lattice_scale = None

    def quantile_internal(self, u: float) -> float:
        q0 = float(self.neg_prob)
        if u < q0:
            return float(self.neg_value)
        t = 1.0 - (u - q0) / (1.0 - q0)
        if t <= 0.0:
            t = 5e-324
        x = self.scale * t ** (-1.0 / self.alpha)
        if self.clip is not None and x > self.clip:
            return self.clip
        return x

    def unscale(self, pos: float) -> float:
        return pos


DisplacementDist = Union[DiscreteDist, HeavyTailDist]


def _lattice_scale(values: list[Real]) -> int | None:
    """Common denominator turning rational atom values into integers."""
    if not all(_is_rational(v) for v in values):
        return None
    scale = 1
    for v in values:
        d = Fraction(v).denominator
        scale = scale * d // math.gcd(scale, d)
    return scale


@dataclass(frozen=True)
class MgfAnalysis:
    """Result of minimizing the exponential moment over theta >= 0."""

    a: float
    theta_star: float
    mgf_finite_somewhere: bool

    @property
    def threshold(self) -> float:
        return 1.0 / (1.0 + self.a)


def mean(dist: DisplacementDist) -> Real:
    """E[X]; exact Fraction for rational discrete laws, float otherwise."""
    if isinstance(dist, DiscreteDist):
        if dist.lattice_scale is not None:
            return sum((p * Fraction(v) for v, p in dist.atoms), Fraction(0))
        return sum(float(p) * float(v) for v, p in dist.atoms)
    q0 = float(dist.neg_prob)
    a, s = dist.alpha, dist.scale
    if dist.clip is None:
        tail_mean = a * s / (a - 1.0)
    else:
        k = dist.clip
        tail_mean = (a * s - s**a * k ** (1.0 - a)) / (a - 1.0)
    return q0 * float(dist.neg_value) + (1.0 - q0) * tail_mean


def prob_positive(dist: DisplacementDist) -> Real:
    """P(X > 0)."""
    if isinstance(dist, DiscreteDist):
        return sum((p for v, p in dist.atoms if _as_float(v) > 0), Fraction(0))
    return Fraction(1) - dist.neg_prob


def mgf(dist: DisplacementDist, theta: float) -> float:
    """E[e^{theta X}] for theta >= 0; +inf where the moment diverges."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if theta == 0:
        return 1.0
    if isinstance(dist, DiscreteDist):
        exps = [theta * _as_float(v) for v in dist.values]
        if max(exps) > _EXP_CAP:
            return math.inf
        return sum(float(p) * math.exp(e) for e, p in zip(exps, dist.probs))
    if dist.clip is None:
        return math.inf
    q0, a, s, k = float(dist.neg_prob), dist.alpha, dist.scale, dist.clip
    if theta * k > _EXP_CAP:
        return math.inf
    body, _ = quad(lambda x: math.exp(theta * x) * a * s**a * x ** (-a - 1.0), s, k)
    tail_mass = (s / k) ** a
    return q0 * math.exp(theta * float(dist.neg_value)) + (1.0 - q0) * (
        body + tail_mass * math.exp(theta * k)
    )


def mgf_derivative(dist: DisplacementDist, theta: float) -> float:
    """d/dtheta E[e^{theta X}], in closed form per family; +inf past overflow."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    if isinstance(dist, DiscreteDist):
        exps = [theta * _as_float(v) for v in dist.values]
        if max(exps) > _EXP_CAP:
            return math.inf
        return sum(float(p) * _as_float(v) * math.exp(e)
                   for e, (v, p) in zip(exps, dist.atoms))
    if dist.clip is None:
        return math.inf
    q0, a, s, k = float(dist.neg_prob), dist.alpha, dist.scale, dist.clip
    if theta * k > _EXP_CAP:
        return math.inf
    body, _ = quad(lambda x: x * math.exp(theta * x) * a * s**a * x ** (-a - 1.0), s, k)
    tail_mass = (s / k) ** a
    v0 = float(dist.neg_value)
    return q0 * v0 * math.exp(theta * v0) + (1.0 - q0) * (
        body + tail_mass * k * math.exp(theta * k)
    )


def infimum_mgf(dist: DisplacementDist) -> MgfAnalysis:
    """Minimize E[e^{theta X}] over theta >= 0.

    The dichotomy for heavy tails is analytic: if the MGF is infinite for
    every theta > 0 the infimum is 1 (attained in the limit theta -> 0) and
    theta* is reported as 0.  With E[X] >= 0 the objective is nondecreasing,
    so the infimum also sits at theta = 0 with value 1.  Otherwise the
    derivative starts negative, is strictly increasing by convexity, and its
    unique sign change is bracketed by doubling (capped for overflow) and
    pinned down by bisection.
    """
    finite_somewhere = not (isinstance(dist, HeavyTailDist) and dist.clip is None)
    if not finite_somewhere:
        return MgfAnalysis(a=1.0, theta_star=0.0, mgf_finite_somewhere=False)
    m = _as_float(mean(dist))
    if m >= 0:
        return MgfAnalysis(a=1.0, theta_star=0.0, mgf_finite_somewhere=True)
    if _as_float(prob_positive(dist)) == 0.0:
        # strictly decreasing MGF: infimum is the mass at zero, in the limit
        a = float(dist.prob_of(0)) if isinstance(dist, DiscreteDist) else 0.0
        return MgfAnalysis(a=a, theta_star=math.inf, mgf_finite_somewhere=True)

    hi = 1.0
    while hi < _THETA_CAP and mgf_derivative(dist, hi) < 0.0:
        hi = min(2.0 * hi, _THETA_CAP)
    if mgf_derivative(dist, hi) < 0.0:
        # still descending at the overflow guard; report the capped point
        return MgfAnalysis(a=mgf(dist, hi), theta_star=hi, mgf_finite_somewhere=True)
    lo = 0.0
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if mgf_derivative(dist, mid) < 0.0:
            lo = mid
        else:
            hi = mid
    theta_star = 0.5 * (lo + hi)
    return MgfAnalysis(a=mgf(dist, theta_star), theta_star=theta_star,
                       mgf_finite_somewhere=True)


def threshold(analysis: MgfAnalysis) -> float:
    """Drift threshold 1 / (1 + a) for the order-arrival probability."""
    return 1.0 / (1.0 + analysis.a)


def truncate(dist: DisplacementDist, cap: Real) -> DisplacementDist:
    """Law of min(X, cap); all mass above the cap collapses onto one atom.

    For a heavy tail with cap at or below the tail scale the whole tail
    collapses and the result is discrete; above the scale a continuous
    remnant [scale, cap) survives, represented as a clipped heavy tail.
    """
    if _as_float(cap) < 0:
        raise ValueError("truncation level must be nonnegative")
    if isinstance(dist, DiscreteDist):
        merged: dict[float, tuple[Real, Fraction]] = {}
        for v, p in dist.atoms:
            w = v if _as_float(v) <= _as_float(cap) else cap
            key = _as_float(w)
            if key in merged:
                merged[key] = (merged[key][0], merged[key][1] + p)
            else:
                merged[key] = (w, p)
        return DiscreteDist(atoms=tuple(merged.values()))
    k = _as_float(cap)
    if dist.clip is not None:
        k = min(k, dist.clip)
    if k <= dist.scale:
        return DiscreteDist(
            atoms=((dist.neg_value, dist.neg_prob), (cap, Fraction(1) - dist.neg_prob))
        )
    return HeavyTailDist(
        neg_value=dist.neg_value,
        neg_prob=dist.neg_prob,
        alpha=dist.alpha,
        scale=dist.scale,
        clip=k,
    )


def sample(dist: DisplacementDist, stream: RandomStream) -> Real:
    """One draw of X; a deterministic function of the stream state."""
    return dist.unscale(dist.quantile_internal(stream.value_uniform()))


def _parse_prob(raw) -> Fraction:
    if isinstance(raw, str):
        return Fraction(raw)
    if isinstance(raw, int):
        return Fraction(raw)
    if isinstance(raw, float):
        return Fraction(raw)
    raise ValueError(f"cannot parse probability {raw!r}")


def _parse_value(raw) -> Real:
    if isinstance(raw, str):
        return Fraction(raw)
    if isinstance(raw, (int, float)):
        return raw
    raise ValueError(f"cannot parse atom value {raw!r}")


def dist_from_config(spec: dict) -> DisplacementDist:
    """Build a displacement law from its run-config JSON form.

    ``{"type": "discrete", "atoms": [[-1, "2/3"], [1, "1/3"]]}`` or
    ``{"type": "heavy_tail", "neg": [-1, "2/3"], "alpha": 1.5, "scale": 1.0}``.
    Probabilities may be rational strings or decimals.
    """
    if not isinstance(spec, dict) or "type" not in spec:
        raise ValueError("dist: expected an object with a 'type' key")
    kind = spec["type"]
    if kind == "discrete":
        extra = set(spec) - {"type", "atoms"}
        if extra:
            raise ValueError(f"dist: unknown keys {sorted(extra)}")
        raw_atoms = spec.get("atoms")
        if not raw_atoms:
            raise ValueError("dist.atoms: at least one atom required")
        atoms = []
        for i, pair in enumerate(raw_atoms):
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ValueError(f"dist.atoms[{i}]: expected [value, prob]")
            atoms.append((_parse_value(pair[0]), _parse_prob(pair[1])))
        try:
            return DiscreteDist(atoms=tuple(atoms))
        except ValueError as exc:
            raise ValueError(f"dist.atoms: {exc}") from None
    if kind == "heavy_tail":
        extra = set(spec) - {"type", "neg", "alpha", "scale"}
        if extra:
            raise ValueError(f"dist: unknown keys {sorted(extra)}")
        neg = spec.get("neg")
        if not isinstance(neg, (list, tuple)) or len(neg) != 2:
            raise ValueError("dist.neg: expected [value, prob]")
        try:
            return HeavyTailDist(
                neg_value=_parse_value(neg[0]),
                neg_prob=_parse_prob(neg[1]),
                alpha=float(spec.get("alpha", 0.0)),
                scale=float(spec.get("scale", 0.0)),
            )
        except ValueError as exc:
            raise ValueError(f"dist: {exc}") from None
    raise ValueError(f"dist.type: unknown distribution type {kind!r}")
