import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cobandit import theory
from cobandit.theory import TheoryInputs, TheoryPreconditionError


def mp_bound(k, d, T, b0):
    with mpmath.workdps(50):
        b = max(mpmath.mpf(1) / k, mpmath.mpf(b0))
        eta = mpmath.sqrt(b * mpmath.log(k) / (mpmath.e**2 * (d + 1) * T))
        bound = 2 * mpmath.e * mpmath.sqrt((d + 1) * mpmath.log(k) * T / b) + d
        return float(eta), float(bound)


@pytest.mark.parametrize("k,d,T,b0", [(5, 0, 100, 0.0), (5, 5, 1200, 0.05), (3, 2, 500, 0.6), (10, 1, 10_000, 0.3)])
def test_bound_matches_high_precision(k, d, T, b0):
    eta, bound = theory.regret_bound(TheoryInputs(k=k, d=d, T=T, b0=b0))
    ref_eta, ref_bound = mp_bound(k, d, T, b0)
    assert bound == pytest.approx(ref_bound, abs=1e-9)
    assert eta == pytest.approx(ref_eta, rel=1e-12)


def test_bound_value_near_154():
    _, bound = theory.regret_bound(TheoryInputs(k=5, d=0, T=100, b0=0.0))
    assert bound == pytest.approx(154.22, abs=0.01)


def test_bound_ratio_between_extremes():
    lo = theory.regret_bound(TheoryInputs(k=5, d=0, T=100, b0=theory.B0_MAX))[1]
    hi = theory.regret_bound(TheoryInputs(k=5, d=0, T=100, b0=0.0))[1]
    assert lo / hi == pytest.approx(math.sqrt((1 / 5) / theory.B0_MAX))


def test_bound_shape_in_b0():
    grid = np.linspace(0.0, theory.B0_MAX, 40)
    bounds = [theory.regret_bound(TheoryInputs(k=5, d=1, T=1000, b0=float(b)))[1] for b in grid]
    for b, x in zip(grid, bounds):
        if b <= 0.2:
            assert x == bounds[0]
    above = [x for b, x in zip(grid, bounds) if b > 0.2]
    assert all(y < x for x, y in zip(above, above[1:]))


@given(st.integers(2, 20), st.integers(1, 50_000), st.floats(0.0, theory.B0_MAX))
def test_more_delay_costs_more_than_d(k, T, b0):
    T = max(T, int(6 * k * math.log(k)) + 1)
    b0d = theory.regret_bound(TheoryInputs(k=k, d=5, T=T, b0=b0))[1]
    b00 = theory.regret_bound(TheoryInputs(k=k, d=0, T=T, b0=b0))[1]
    assert b0d - b00 > 5


def test_preconditions_reported():
    with pytest.raises(TheoryPreconditionError, match="T > "):
        theory.regret_bound(TheoryInputs(k=5, d=5, T=10, b0=0.1))
    with pytest.raises(TheoryPreconditionError, match="b0"):
        theory.regret_bound(TheoryInputs(k=5, d=0, T=100, b0=0.9))
    with pytest.raises(TheoryPreconditionError, match="k >= 2"):
        theory.regret_bound(TheoryInputs(k=1, d=0, T=100, b0=0.1))


def test_hear_probability_examples():
    assert theory.hear_probability(20, 0.05, 1) == pytest.approx(0.09275, abs=1e-12)
    assert theory.hear_probability(20, 0.05, 0) == pytest.approx(0.05)
    assert theory.hear_probability(7, 1.0, 0) == 1.0
    assert theory.hear_probability(7, 1.0, 4) == 1.0
    with pytest.raises(ValueError):
        theory.hear_probability(1, 0.1, 0)
    with pytest.raises(ValueError):
        theory.hear_probability(5, 0.1, -1)


def test_paths_factor_is_falling_product():
    assert theory.paths_factor(20, 0) == 1
    assert theory.paths_factor(20, 2) == 18 * 17
    assert theory.paths_factor(6, 10) == math.factorial(4)


@given(st.integers(2, 60), st.floats(0.0, 1.0), st.integers(0, 70))
def test_hear_probability_monotone_and_saturating(n, b0, t):
    b = theory.hear_probability(n, b0, t)
    assert 0.0 <= b <= 1.0
    assert theory.hear_probability(n, b0, t + 1) >= b
    assert theory.hear_probability(n, min(1.0, b0 + 0.05), t) >= b - 1e-15
    if t >= n - 2:
        assert theory.hear_probability(n, b0, t + 3) == b


def test_replicator_examples():
    xi = theory.replicator_field([0.5, 0.5], [0.2, 0.4], [1, 1])
    assert xi.tolist() == pytest.approx([0.05, -0.05])
    assert np.allclose(theory.replicator_field([0.2, 0.3, 0.5], [0.4] * 3, [1, 1, 1]), 0.0)
    with pytest.raises(ValueError):
        theory.replicator_field([0.5, 0.6], [0, 0], [1, 1])
    with pytest.raises(ValueError):
        theory.replicator_field([1.0], [0, 0], [1, 1])


@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_full_information_field_conserves_probability(seed, k):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(k))
    xi = theory.replicator_field(p, rng.random(k), np.ones(k))
    assert abs(xi.sum()) <= 1e-12


def test_report_contents():
    body = theory.report(TheoryInputs(k=5, d=2, T=1200, b0=0.05), max_delay=4)
    assert set(body["hear_probability"]) == {"0", "1", "2", "3", "4"}
    assert body["bound"] > 0 and "error" not in body
    bad = theory.report(TheoryInputs(k=5, d=2, T=5, b0=0.05))
    assert bad["bound"] is None and "error" in bad
