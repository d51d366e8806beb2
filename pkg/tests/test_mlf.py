from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracspde.errors import NonConvergenceError, PoleError, ValidationError
from fracspde.mlf import (
    MLParams,
    gamma_fn,
    mainardi_moment,
    mainardi_moment_quadrature,
    mainardi_wright,
    ml_asymptotic,
    ml_laplace_residual,
    mittag_leffler,
)

ORACLES = json.loads((Path(__file__).parent / "oracles" / "reference_values.json").read_text())


# {{{ frozen high-precision values


@pytest.mark.parametrize("row", ORACLES["mittag_leffler"], ids=lambda r: f"a{r[0]}-b{r[1]}-z{r[2]}")
def test_ml_matches_oracle(row):
    alpha, beta, z, ref = row
    val = mittag_leffler(z, alpha, beta)
    assert abs(val - ref) <= 1e-12 * abs(ref) + 1e-300


def test_ml_vectorised_matches_oracle():
    rows = np.array(ORACLES["mittag_leffler"])
    for alpha, beta in {(r[0], r[1]) for r in rows}:
        sel = rows[(rows[:, 0] == alpha) & (rows[:, 1] == beta)]
        val = mittag_leffler(sel[:, 2], alpha, beta)
        assert np.all(np.abs(val - sel[:, 3]) <= 1e-12 * np.abs(sel[:, 3]))


@pytest.mark.parametrize("row", ORACLES["gamma"], ids=lambda r: f"x{r[0]}")
def test_gamma_matches_oracle(row):
    x, ref = row
    assert gamma_fn(x) == pytest.approx(ref, rel=1e-14)


@pytest.mark.parametrize("row", ORACLES["mainardi"], ids=lambda r: f"a{r[0]}-th{r[1]}")
def test_mainardi_matches_oracle(row):
    alpha, theta, ref = row
    assert abs(mainardi_wright(theta, alpha) - ref) <= 1e-10 * abs(ref) + 1e-14


def test_hand_values():
    assert mittag_leffler(1.0, 1.0) == pytest.approx(math.e, rel=1e-15)
    assert mittag_leffler(0.0, 0.8) == 1.0
    assert mittag_leffler(0.0, 0.8, 0.8) == pytest.approx(1.0 / math.gamma(0.8), rel=1e-15)
    # E_{1/2,1}(-x) = exp(x^2) erfc(x)
    from scipy.special import erfcx

    for x in (0.3, 2.0, 10.0, 40.0):
        assert mittag_leffler(-x, 0.5) == pytest.approx(erfcx(x), rel=1e-12)
    # M_{1/2}(theta) = exp(-theta^2 / 4) / sqrt(pi)
    for th in (0.0, 0.5, 1.0, 2.5, 4.0):
        assert mainardi_wright(th, 0.5) == pytest.approx(math.exp(-th * th / 4) / math.sqrt(math.pi),
                                                         rel=1e-11)


# }}}


# {{{ identities


def test_reduction_identities():
    z = np.linspace(-5.0, 5.0, 401)
    assert np.allclose(mittag_leffler(z, 1.0, 1.0), np.exp(z), rtol=1e-10, atol=0)
    assert np.max(np.abs(mittag_leffler(-z * z, 2.0, 1.0) - np.cos(z))) <= 1e-10
    nz = z[z != 0]
    assert np.allclose(mittag_leffler(nz, 1.0, 2.0), np.expm1(nz) / nz, rtol=1e-10, atol=0)


@pytest.mark.parametrize("alpha", [0.6, 0.76, 0.8, 0.9])
@pytest.mark.parametrize("mu", [-0.5, 0.0, 0.5, 1.0, 2.0])
def test_mainardi_moments(alpha, mu):
    assert mainardi_moment_quadrature(mu, alpha) == pytest.approx(mainardi_moment(mu, alpha), rel=1e-6)


@pytest.mark.parametrize("case", [(1.0, 1.0, -1.0, 1.0), (0.8, 0.8, -1.0, 2.0), (0.8, 1.0, -3.0, 1.5),
                                  (0.9, 0.9, -0.5, 1.0)])
def test_laplace_residual(case):
    assert ml_laplace_residual(*case) <= 1e-8


def test_asymptotic_agrees_far_out():
    z = np.array([-200.0, -500.0, -1e4])
    for alpha, beta in ((0.8, 1.0), (0.8, 0.8), (0.6, 1.5)):
        asym = ml_asymptotic(z, alpha, beta)
        assert np.allclose(asym, mittag_leffler(z, alpha, beta), rtol=1e-12, atol=0)


def test_tier_boundaries_continuous():
    # values straddling the switch between evaluation routes join smoothly
    for alpha, beta in ((0.8, 1.0), (0.8, 0.8), (0.76, 0.76), (0.9, 1.0)):
        z = -np.linspace(1.0, 120.0, 4000)
        e = mittag_leffler(z, alpha, beta)
        d3 = np.abs(np.diff(e, 3))
        assert np.all(d3 <= 1e-4 * np.abs(e[1:-2]))


# }}}


# {{{ properties


@settings(max_examples=60, deadline=None)
@given(alpha=st.floats(0.3, 1.0), x=st.floats(0.0, 200.0), y=st.floats(0.0, 200.0))
def test_ml_completely_monotone_proxy(alpha, x, y):
    lo, hi = sorted((x, y))
    a, b = mittag_leffler(-lo, alpha), mittag_leffler(-hi, alpha)
    assert 0.0 < b <= a * (1 + 1e-13) and a <= 1.0


@settings(max_examples=60, deadline=None)
@given(alpha=st.floats(0.3, 1.0), x=st.floats(0.0, 200.0))
def test_ml_alpha_alpha_positive(alpha, x):
    # alpha near 1 exercises the near-pole branch-cut route
    assert mittag_leffler(-x, alpha, alpha) > 0.0


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(0.5, 1.0), x=st.floats(0.0, 50.0))
def test_ml_recurrence(alpha, x):
    # E_{a,b}(z) = 1/Gamma(b) + z E_{a,a+b}(z)
    z, b = -x, 0.3
    tail = z * mittag_leffler(z, alpha, alpha + b)
    lhs = mittag_leffler(z, alpha, b)
    assert abs(lhs - (1.0 / math.gamma(b) + tail)) <= 1e-10 * max(1.0, abs(tail))


@settings(max_examples=40, deadline=None)
# Gamma(x) overflows binary64 for 0 < x < ~5.6e-309, hence the lower cut
@given(x=st.floats(-19.9, 50.0).filter(lambda v: abs(v - round(v)) > 1e-6 or v > 1e-300))
def test_gamma_recurrence(x):
    assert gamma_fn(x + 1) == pytest.approx(x * gamma_fn(x), rel=1e-13)


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(0.3, 0.95), theta=st.floats(0.0, 6.0))
def test_mainardi_nonnegative(alpha, theta):
    assert mainardi_wright(theta, alpha) >= 0.0


# }}}


# {{{ errors


def test_gamma_poles():
    for x in (0.0, -1.0, -7.0):
        with pytest.raises(PoleError):
            gamma_fn(x)


def test_parameter_validation():
    with pytest.raises(ValidationError):
        MLParams(0.0)
    with pytest.raises(ValidationError):
        MLParams(0.8, -1.0)
    with pytest.raises(ValidationError):
        mittag_leffler(float("nan"), 0.8)
    with pytest.raises(ValidationError):
        mainardi_wright(-1.0, 0.5)
    with pytest.raises(ValidationError):
        mainardi_wright(1.0, 1.0)


def test_no_route_raises():
    with pytest.raises(NonConvergenceError):
        mittag_leffler(-400.0, 2.0)
    with pytest.raises(NonConvergenceError):
        mittag_leffler(-20.0, 0.8, 2.5)


def test_alpha_one_general_beta():
    z = -np.array([0.5, 4.0, 30.0, 1e5])
    assert np.allclose(mittag_leffler(z, 1.0, 2.0), np.expm1(z) / z, rtol=1e-13, atol=0)
    # E_{1,3}(z) = (e^z - 1 - z) / z^2
    assert np.allclose(mittag_leffler(z, 1.0, 3.0), (np.expm1(z) - z) / z**2, rtol=1e-12, atol=0)


def test_shape_preserved():
    z = -np.arange(12.0).reshape(3, 4)
    assert mittag_leffler(z, 0.8).shape == (3, 4)
    assert isinstance(mittag_leffler(-1.0, 0.8), float)


# }}}
