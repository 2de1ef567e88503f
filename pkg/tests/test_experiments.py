import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fellerhawkes.experiments import (
    LimitComparison,
    mean_count_prediction,
    monotone_gaps,
    simulate_functionals,
)
from fellerhawkes.grid_measures import Grid, GridFunction, GridMeasure
from fellerhawkes.kernels import Exponential, RowConstant
from fellerhawkes.simulator import HawkesParams


def exact_mean_count(a, t):
    # rho = (1-a) delta_0 + a Exp(1-a) for Exp(1) generations
    lam = 1 - a
    conv = (1 - a) * t + a * (t - (1 - math.exp(-lam * t)) / lam)
    return conv / (1 - a)


@pytest.mark.parametrize("a", [0.3, 0.8])
def test_mean_count_prediction(a):
    g = Grid(5.0, 1e-3)
    p = HawkesParams(a, RowConstant(Exponential(1.0)), GridMeasure.lebesgue(g))
    for t in (1.0, 5.0):
        assert mean_count_prediction(p, t) == pytest.approx(exact_mean_count(a, t), rel=2e-3)


def test_simulated_mean_count():
    g = Grid(5.0, 1e-3)
    p = HawkesParams(0.5, RowConstant(Exponential(1.0)), GridMeasure.lebesgue(g))
    ones = GridFunction.constant(g, 1.0)
    vals, counts = simulate_functionals(p, ones, [5.0], 2000, seed=8, scale=1.0)
    se = vals[:, 0].std(ddof=1) / math.sqrt(len(vals))
    assert abs(vals[:, 0].mean() - exact_mean_count(0.5, 5.0)) < 4 * se
    np.testing.assert_array_equal(vals[:, 0], counts)


def comparison(eps, gaps, se):
    return LimitComparison(eps, (1.0,) * len(gaps), (0.0,) * len(gaps), tuple(se),
                           (1.0,) * len(gaps), tuple(gaps))


@given(st.lists(st.floats(0, 1), min_size=2, max_size=5))
def test_monotone_gaps_accepts_decreasing(gaps):
    gaps = sorted(gaps, reverse=True)
    results = [comparison(1.0 / (i + 2), [g], [0.0]) for i, g in enumerate(gaps)]
    assert all(monotone_gaps(results))


def test_monotone_gaps_slack():
    a = comparison(0.2, [0.01], [0.001])
    b = comparison(0.1, [0.015], [0.001])
    c = comparison(0.1, [0.02], [0.001])
    assert monotone_gaps([a, b]) == [True]
    assert monotone_gaps([a, c]) == [False]


def test_passes_rule():
    r = comparison(0.1, [0.04, 0.06], [0.001, 0.001])
    assert r.passes(rel_tol=0.05) == [True, False]


@pytest.mark.slow
def test_simulation_matches_exact_prelimit_moments():
    from fellerhawkes.experiments import prelimit_count_moments

    g = Grid(5.0, 1e-3)
    p = HawkesParams.near_critical(0.05, Exponential(1.0), GridMeasure.lebesgue(g))
    mean, var = prelimit_count_moments(p)
    reps = 4000
    vals, _ = simulate_functionals(p, GridFunction.constant(g, 1.0), [1.0, 5.0], reps, seed=21,
                                   scale=1.0)
    for j, t in enumerate((1.0, 5.0)):
        k = g.index_of(t)
        x = vals[:, j]
        se_m = x.std(ddof=1) / math.sqrt(reps)
        se_v = ((x - x.mean()) ** 2).std(ddof=1) / math.sqrt(reps)
        assert abs(x.mean() - mean[k]) < 4 * se_m
        assert abs(x.var(ddof=1) - var[k]) < 4 * se_v
