import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fellerhawkes.mittag_leffler import (
    half_density_closed_form,
    mittag_leffler_cdf,
    mittag_leffler_density,
    mills_ratio,
)

# (alpha, t, density, cdf) from a 60-digit mpmath series of E_{a,b}
ORACLE = [
    (0.3, 0.05, 1.341172120498044, 0.31968757149164739),
    (0.3, 1.0, 0.077316799030089818, 0.54340559167030936),
    (0.3, 4.0, 0.017800094464016329, 0.64709609137114447),
    (0.3, 9.0, 0.0072312837537058062, 0.70245023803106633),
    (0.5, 0.05, 1.7327557583487951, 0.2096232363286351),
    (0.5, 1.0, 0.13660600739194928, 0.572416423844193),
    (0.5, 4.0, 0.0266991154633724, 0.74460432368949426),
    (0.5, 9.0, 0.0090620433345288119, 0.82099884881861005),
    (0.8, 0.05, 1.3898754273779566, 0.092182763807380237),
    (0.8, 1.0, 0.25574384475824178, 0.6130514213810231),
    (0.8, 4.0, 0.029548448457953059, 0.88862985540252596),
    (0.8, 9.0, 0.0053080275112592648, 0.95227796581773391),
]
# cdf far in the tail, from numerical Laplace inversion of 1/(s (1 + s**alpha))
TAIL_ORACLE = [(0.5, 50.0, 0.92098661179722799), (0.7, 200.0, 0.99164548353962318)]


@pytest.mark.parametrize("alpha,t,dens,cdf", ORACLE)
def test_against_high_precision_series(alpha, t, dens, cdf):
    assert mittag_leffler_density(alpha, t) == pytest.approx(dens, rel=1e-8)
    assert mittag_leffler_cdf(alpha, t) == pytest.approx(cdf, rel=1e-10)


@pytest.mark.parametrize("alpha,t,cdf", TAIL_ORACLE)
def test_tail_against_laplace_inversion(alpha, t, cdf):
    assert mittag_leffler_cdf(alpha, t) == pytest.approx(cdf, rel=1e-10)


def test_alpha_one_is_exponential():
    t = np.linspace(0.01, 10, 200)
    np.testing.assert_allclose(mittag_leffler_density(1.0, t), np.exp(-t), rtol=1e-10)


def test_half_density_closed_form():
    t = np.geomspace(0.01, 10, 300)
    np.testing.assert_allclose(half_density_closed_form(t), mittag_leffler_density(0.5, t),
                               rtol=1e-8)


def test_mills_ratio_at_zero():
    assert mills_ratio(0.0) == pytest.approx(np.sqrt(np.pi / 2))


@given(st.floats(0.2, 1.0), st.floats(0.01, 40.0), st.floats(0.01, 40.0))
def test_cdf_monotone(alpha, s, t):
    lo, hi = sorted((s, t))
    assert mittag_leffler_cdf(alpha, lo) <= mittag_leffler_cdf(alpha, hi) + 1e-12


@given(st.floats(0.2, 1.0))
def test_density_integrates_to_cdf(alpha):
    from scipy.integrate import quad

    val, _ = quad(lambda s: mittag_leffler_density(alpha, s), 0.0, 2.0, limit=200)
    assert val == pytest.approx(mittag_leffler_cdf(alpha, 2.0), abs=1e-7)
