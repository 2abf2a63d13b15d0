import math
import random
from fractions import Fraction

import numpy as np
import pytest

from bookwalk import (
    DiscreteDist,
    HeavyTailDist,
    RandomStream,
    dist_from_config,
    infimum_mgf,
    mean,
    mgf,
    prob_positive,
    sample,
    threshold,
    truncate,
)
from bookwalk.displacement import mgf_derivative

A_THIRD = 2 * math.sqrt(2) / 3       # infimum for X = -1 (2/3), +1 (1/3)
TH_THIRD = math.log(2) / 2
A_QUARTER = 0.375 * 6 ** (1 / 3)     # infimum for X = -2 (3/4), +1 (1/4)
TH_QUARTER = math.log(6) / 3


def test_mean_examples(dist_third, dist_quarter):
    assert mean(dist_third) == Fraction(-1, 3)
    assert mean(DiscreteDist(atoms=((1, Fraction(1)),))) == 1
    assert mean(dist_quarter) == Fraction(-5, 4)


def test_prob_positive_examples(dist_third, dist_quarter):
    assert prob_positive(dist_third) == Fraction(1, 3)
    assert prob_positive(DiscreteDist(atoms=((-1, Fraction(1)),))) == 0
    assert prob_positive(dist_quarter) == Fraction(1, 4)


def test_mgf_examples(dist_third, heavy_neg_mean):
    assert mgf(dist_third, 0.0) == 1.0
    assert abs(mgf(dist_third, math.log(2) / 2) - A_THIRD) < 1e-14
    assert mgf(heavy_neg_mean, 0.1) == math.inf
    with pytest.raises(ValueError):
        mgf(dist_third, -0.5)


def test_infimum_benchmarks(dist_third, dist_quarter):
    an = infimum_mgf(dist_third)
    assert abs(an.a - A_THIRD) < 1e-9
    assert abs(an.theta_star - TH_THIRD) < 1e-9
    an2 = infimum_mgf(dist_quarter)
    assert abs(an2.a - A_QUARTER) < 1e-9
    assert abs(an2.theta_star - TH_QUARTER) < 1e-9


def test_infimum_grid_oracle(dist_third, dist_quarter):
    # brute-force grid search as an independent check of the bisection
    thetas = np.arange(0.0, 5.0, 1e-5)
    for dist in (dist_third, dist_quarter):
        probs = np.array([float(p) for p in dist.probs])
        values = np.array([float(v) for v in dist.values])
        grid = np.exp(np.outer(thetas, values)) @ probs
        k = int(np.argmin(grid))
        an = infimum_mgf(dist)
        assert abs(an.theta_star - thetas[k]) < 1e-5
        assert abs(an.a - grid[k]) < 1e-9


def test_infimum_degenerate_cases():
    up = infimum_mgf(DiscreteDist(atoms=((1, Fraction(1)),)))
    assert up.a == 1.0 and up.theta_star == 0.0
    never_up = infimum_mgf(
        DiscreteDist(atoms=((-1, Fraction(1, 2)), (0, Fraction(1, 2))))
    )
    assert never_up.a == 0.5 and never_up.theta_star == math.inf


def test_heavy_tail_dichotomy(heavy_neg_mean):
    an = infimum_mgf(heavy_neg_mean)
    assert not an.mgf_finite_somewhere
    assert an.a == 1.0 and an.theta_star == 0.0
    assert threshold(an) == 0.5


def test_threshold_values():
    assert threshold(infimum_mgf(DiscreteDist(atoms=((1, Fraction(1)),)))) == 0.5
    d = DiscreteDist(atoms=((-1, Fraction(2, 3)), (1, Fraction(1, 3))))
    assert abs(threshold(infimum_mgf(d)) - 1 / (1 + A_THIRD)) < 1e-12
    d2 = DiscreteDist(atoms=((-2, Fraction(3, 4)), (1, Fraction(1, 4))))
    assert abs(threshold(infimum_mgf(d2)) - 1 / (1 + A_QUARTER)) < 1e-12


def test_truncate_discrete(dist_third):
    t0 = truncate(dist_third, 0)
    assert set((float(v), p) for v, p in t0.atoms) == {(-1.0, Fraction(2, 3)), (0.0, Fraction(1, 3))}
    t5 = truncate(dist_third, 5)
    assert t5 == dist_third
    with pytest.raises(ValueError):
        truncate(dist_third, -1)


def test_truncate_heavy_tail(heavy_neg_mean):
    # at the tail scale the whole tail collapses onto one atom
    at_scale = truncate(heavy_neg_mean, 1.0)
    assert isinstance(at_scale, DiscreteDist)
    assert at_scale.prob_of(-3) == Fraction(3, 4)
    assert at_scale.prob_of(1.0) == Fraction(1, 4)
    # above the scale a continuous remnant survives; total mass must be 1
    clipped = truncate(heavy_neg_mean, 4.0)
    assert isinstance(clipped, HeavyTailDist) and clipped.clip == 4.0
    assert mgf(clipped, 0.0) == 1.0
    # MGF at theta -> 0+ approaches total mass
    assert abs(mgf(clipped, 1e-9) - 1.0) < 1e-6
    # direct quantile mass check: quantiles all within [-3, 4]
    qs = [clipped.quantile_internal(u) for u in np.linspace(0.001, 0.999, 500)]
    assert min(qs) == -3 and max(qs) <= 4.0


def test_truncation_commutes_with_sampling(dist_third, heavy_neg_mean):
    # quantile of min(X, K) equals min(quantile of X, K) pointwise in u
    for dist, k in ((dist_third, 0), (heavy_neg_mean, 2.5), (heavy_neg_mean, 1.0)):
        dk = truncate(dist, k)
        for u in np.linspace(0.001, 0.999, 400):
            lhs = float(dk.unscale(dk.quantile_internal(u)))
            rhs = min(float(dist.unscale(dist.quantile_internal(u))), float(k))
            assert lhs == pytest.approx(rhs, abs=0.0)


def test_sample_determinism_and_point_mass(dist_third):
    c = DiscreteDist(atoms=((7, Fraction(1)),))
    s = RandomStream(3)
    assert all(sample(c, s) == 7 for _ in range(10))
    s1, s2 = RandomStream(11), RandomStream(11)
    assert [sample(dist_third, s1) for _ in range(200)] == [
        sample(dist_third, s2) for _ in range(200)
    ]


def test_sample_frequency(dist_third):
    m = 200_000
    s = RandomStream(17)
    hits = sum(1 for _ in range(m) if sample(dist_third, s) == 1)
    sigma = math.sqrt((1 / 3) * (2 / 3) / m)
    assert abs(hits / m - 1 / 3) <= 3 * sigma


def test_mgf_at_zero_is_one(dist_third, dist_quarter, heavy_neg_mean):
    for d in (dist_third, dist_quarter, heavy_neg_mean, truncate(heavy_neg_mean, 3.0)):
        assert mgf(d, 0.0) == 1.0


def test_mgf_convexity(dist_third, dist_quarter):
    rng = random.Random(5)
    for dist in (dist_third, dist_quarter):
        for _ in range(300):
            t1, t2 = rng.uniform(0, 8), rng.uniform(0, 8)
            lam = rng.random()
            lhs = mgf(dist, lam * t1 + (1 - lam) * t2)
            rhs = lam * mgf(dist, t1) + (1 - lam) * mgf(dist, t2)
            assert lhs <= rhs + 1e-12


def test_infimum_certificate(dist_third, dist_quarter, heavy_neg_mean):
    rng = random.Random(9)
    for dist in (dist_third, dist_quarter, truncate(heavy_neg_mean, 6.0)):
        a = infimum_mgf(dist).a
        for _ in range(1000):
            theta = rng.uniform(0, 12)
            assert a <= mgf(dist, theta) + 1e-9


def test_negative_mean_dichotomy(dist_third, heavy_neg_mean):
    # finite exponential moments somewhere => a < 1; nowhere => a = 1
    an = infimum_mgf(dist_third)
    assert an.mgf_finite_somewhere and an.a < 1
    ah = infimum_mgf(heavy_neg_mean)
    assert not ah.mgf_finite_somewhere and ah.a == 1.0


def test_truncation_monotonicity(dist_quarter, heavy_neg_mean):
    a_full = infimum_mgf(dist_quarter).a
    last = 0.0
    for k in (0, 0.25, 0.5, 1, 2):
        ak = infimum_mgf(truncate(dist_quarter, k)).a
        assert ak >= last - 1e-12
        assert ak <= a_full + 1e-9
        last = ak
    # beyond the support the truncation is the identity
    assert infimum_mgf(truncate(dist_quarter, 1)).a == pytest.approx(a_full, abs=1e-12)
    # heavy tail: a_K < 1 rising toward a = 1
    aks = [infimum_mgf(truncate(heavy_neg_mean, k)).a for k in (2.0, 8.0, 32.0, 128.0)]
    assert all(x < 1 for x in aks)
    assert aks == sorted(aks)
    assert aks[-1] > 0.95


def test_mgf_derivative_sign(dist_quarter):
    an = infimum_mgf(dist_quarter)
    assert mgf_derivative(dist_quarter, an.theta_star / 2) < 0
    assert mgf_derivative(dist_quarter, an.theta_star * 2) > 0


def test_overflow_guard():
    big = DiscreteDist(atoms=((-1, Fraction(1, 2)), (10_000, Fraction(1, 2))))
    assert mgf(big, 1.0) == math.inf
    an = infimum_mgf(big)  # must not raise; minimum sits near theta = 0
    assert an.a == 1.0 and an.theta_star == 0.0 or an.a < 1.0


def test_dist_from_config_roundtrip():
    d = dist_from_config({"type": "discrete", "atoms": [[-1, "2/3"], [1, "1/3"]]})
    assert d.prob_of(-1) == Fraction(2, 3)  # exact rational, not 0.6666...
    h = dist_from_config(
        {"type": "heavy_tail", "neg": [-1, "2/3"], "alpha": 1.5, "scale": 1.0}
    )
    assert isinstance(h, HeavyTailDist) and h.neg_prob == Fraction(2, 3)


def test_dist_from_config_errors():
    with pytest.raises(ValueError, match="dist"):
        dist_from_config({"type": "discrete", "atoms": [[-1, 0.5], [1, 0.49]]})
    with pytest.raises(ValueError, match="unknown"):
        dist_from_config({"type": "discrete", "atoms": [[1, "1"]], "junk": 1})
    with pytest.raises(ValueError):
        dist_from_config({"type": "discrete", "atoms": [[1, "1/2"], [1, "1/2"]]})
    with pytest.raises(ValueError):
        dist_from_config({"type": "heavy_tail", "neg": [1, "1/2"], "alpha": 1.5, "scale": 1.0})
    with pytest.raises(ValueError):
        dist_from_config({"type": "heavy_tail", "neg": [-1, "1/2"], "alpha": 0.9, "scale": 1.0})


def test_lattice_scaling():
    d = DiscreteDist(atoms=((Fraction(-1, 3), Fraction(1, 2)), (Fraction(1, 2), Fraction(1, 2))))
    assert d.lattice_scale == 6
    # internal values are scaled integers; unscale returns exact rationals
    u_lo = 0.25
    assert d.unscale(d.quantile_internal(u_lo)) == Fraction(-1, 3)
    f = DiscreteDist(atoms=((-1.5, Fraction(1, 2)), (0.5, Fraction(1, 2))))
    assert f.lattice_scale is None
