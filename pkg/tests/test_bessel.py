import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jetstab import bessel
from jetstab.errors import DomainError

mpmath.mp.dps = 40
POINTS = [1e-8, 1e-3, 0.1, 0.5, 1.0, 2.5, 7.0, 14.9, 15.1, 30.0, 120.0, 650.0]


def mp_ratio(r):
    return float(mpmath.besseli(1, r) / mpmath.besseli(0, r))


@pytest.mark.parametrize("r", POINTS)
def test_i0_i1_against_mpmath(r):
    assert bessel.i0(r) == pytest.approx(float(mpmath.besseli(0, r)), rel=1e-14)
    assert bessel.i1(r) == pytest.approx(float(mpmath.besseli(1, r)), rel=1e-14)


@pytest.mark.parametrize("r", POINTS + [1e4, 1e8])
def test_scaled_against_mpmath(r):
    e = mpmath.exp(-r)
    assert bessel.i0e(r) == pytest.approx(float(mpmath.besseli(0, r) * e), rel=1e-14)
    assert bessel.i1e(r) == pytest.approx(float(mpmath.besseli(1, r) * e), rel=1e-14)


@pytest.mark.parametrize("r", POINTS + [1e4, 1e8])
def test_ratio_against_mpmath(r):
    assert bessel.ratio(r) == pytest.approx(mp_ratio(r), rel=1e-14)


def test_ratio_at_zero_and_negative_rejected():
    assert bessel.ratio(0.0) == 0.0
    with pytest.raises(DomainError):
        bessel.ratio(-2.0)


@pytest.mark.parametrize("r", [0.3, 2.0, 20.0, 500.0])
def test_ratio_prime_against_mpmath(r):
    d = float(mpmath.diff(lambda t: mpmath.besseli(1, t) / mpmath.besseli(0, t), r))
    assert bessel.ratio_prime(r) == pytest.approx(d, rel=1e-12)


def test_unscaled_overflow_guard():
    with pytest.raises(DomainError):
        bessel.i0(800.0)


def test_array_input_keeps_shape():
    r = np.linspace(0, 40, 9).reshape(3, 3)
    assert bessel.ratio(r).shape == (3, 3)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=1e-6, max_value=1e6))
def test_ratio_bounds_and_monotone(r):
    q = bessel.ratio(r)
    assert 0.0 < q < 1.0
    assert bessel.ratio(r * 1.01) >= q
    # Amos bounds for the order-zero ratio
    assert r / (0.5 + np.sqrt(2.25 + r * r)) <= q * (1 + 1e-14)
    assert q <= r / (0.5 + np.sqrt(0.25 + r * r)) * (1 + 1e-14)
