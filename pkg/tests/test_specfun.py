import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helmloc.specfun import bessel_j0, bessel_j0_y0, bessel_y0, hankel0_first, phi_free


def _oracle(x):
    return float(mpmath.besselj(0, x)), float(mpmath.bessely(0, x))


def test_against_mpmath_on_grid():
    xs = np.concatenate([np.geomspace(1e-6, 1, 200), np.linspace(1, 100, 800)])
    err = max(max(abs(a - b) for a, b in zip(bessel_j0_y0(x), _oracle(x))) for x in xs)
    assert err <= 1e-10


@pytest.mark.parametrize("x", [7.999, 8.0, 8.001, 24.999, 25.0, 25.001])
def test_regime_boundaries(x):
    j, y = bessel_j0_y0(x)
    jr, yr = _oracle(x)
    assert abs(j - jr) <= 1e-10 and abs(y - yr) <= 1e-10


def test_first_zero():
    assert abs(hankel0_first(2.404825557695773).real) <= 1e-10


def test_value_at_one():
    h = hankel0_first(1.0)
    assert abs(h.real - 0.7651976865579666) <= 1e-10
    assert abs(h.imag - 0.0882569642156770) <= 1e-10


@pytest.mark.parametrize("x", [0.0, -1.0, 1e-20, float("nan"), float("inf")])
def test_domain_guard(x):
    with pytest.raises(ValueError):
        hankel0_first(x)


def test_phi_free_3d():
    for k in (0.5, 1.0, 7.3):
        assert abs(abs(phi_free(3, k, 1.0)) - 1 / (4 * math.pi)) <= 1e-15
    ref = complex(math.cos(1), math.sin(1)) / (4 * math.pi)
    assert abs(phi_free(3, 1.0, 1.0) - ref) <= 1e-15


def test_phi_free_2d_at_kr_one():
    v = phi_free(2, 2.0, 0.5)
    assert abs(v.real + 0.0220642410539) <= 1e-10
    assert abs(v.imag - 0.1912994216394) <= 1e-10


@pytest.mark.parametrize("args", [(2, 1.0, 0.0), (2, 0.0, 1.0), (4, 1.0, 1.0)])
def test_phi_free_errors(args):
    with pytest.raises(ValueError):
        phi_free(*args)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 60.0))
def test_wronskian(x):
    h = 1e-6
    dj = (bessel_j0(x + h) - bessel_j0(x - h)) / (2 * h)
    dy = (bessel_y0(x + h) - bessel_y0(x - h)) / (2 * h)
    w = bessel_j0(x) * dy - dj * bessel_y0(x)
    assert abs(w - 2 / (math.pi * x)) <= 1e-8


@settings(max_examples=100, deadline=None)
@given(st.floats(0.5, 30.0), st.lists(st.floats(1e-3, 10.0), min_size=2, max_size=20, unique=True))
def test_kernel_decays(k, radii):
    r = sorted(radii)
    mags = [abs(phi_free(2, k, ri)) for ri in r]
    # |H0(t)|^2 = J0^2 + Y0^2 is strictly decreasing in t
    for (ra, a), (rb, b) in zip(zip(r, mags), zip(r[1:], mags[1:])):
        if rb - ra > 1e-8 * rb:
            assert b < a
