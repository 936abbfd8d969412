"""Bessel functions of order zero and the free-space Helmholtz kernel.

Three regimes keep the absolute error near machine precision:

* ``x <= 8``: the ascending power series,
* ``8 < x < 25``: Miller's backward recurrence normalised with
  ``J0 + 2 sum J_2k = 1`` together with the Neumann series for ``Y0``,
* ``x >= 25``: the Hankel asymptotic expansion.
"""
from __future__ import annotations

import math

EULER_GAMMA = 0.57721566490153286061
SERIES_MAX = 8.0
ASYMPTOTIC_MIN = 25.0
# below this the logarithmic singularity of Y0 dominates; no caller needs it
MIN_ARGUMENT = 1e-6


def _series(x: float) -> tuple[float, float]:
    q = 0.25 * x * x
    term = 1.0
    j0 = 1.0
    harmonic = 0.0
    ysum = 0.0
    k = 0
    while True:
        k += 1
        term *= -q / (k * k)
        harmonic += 1.0 / k
        j0 += term
        ysum -= harmonic * term
        if abs(term) * max(harmonic, 1.0) < 1e-18 * max(abs(j0), 1.0) and k > 2:
            break
    y0 = (2.0 / math.pi) * ((math.log(0.5 * x) + EULER_GAMMA) * j0 + ysum)
    return j0, y0


def _miller(x: float) -> tuple[float, float]:
    start = 2 * (int(x + 25 + math.sqrt(40 * x)) // 2)
    jp1, j = 0.0, 1e-300
    norm = 0.0
    ysum = 0.0
    # downward recurrence J_{n-1} = (2n/x) J_n - J_{n+1}
    for n in range(start, 0, -1):
        jm1 = (2.0 * n / x) * j - jp1
        jp1, j = j, jm1
        order = n - 1
        if order > 0 and order % 2 == 0:
            norm += 2.0 * j
            k = order // 2
            ysum += (-1.0) ** k * j / k
        if abs(j) > 1e250:
            j *= 1e-250
            jp1 *= 1e-250
            norm *= 1e-250
            ysum *= 1e-250
    norm += j
    j0 = j / norm
    ysum /= norm
    y0 = (2.0 / math.pi) * ((math.log(0.5 * x) + EULER_GAMMA) * j0 - 2.0 * ysum)
    return j0, y0


def _asymptotic(x: float) -> tuple[float, float]:
    # P, Q of the Hankel expansion with mu = 4 nu^2 = 0
    p = 0.0
    q = 0.0
    term = 1.0
    k = 0
    while True:
        if k % 2 == 0:
            p += term if (k // 2) % 2 == 0 else -term
        else:
            q += -term if (k // 2) % 2 == 0 else term
        k += 1
        nxt = term * (2 * k - 1) ** 2 / (k * 8.0 * x)
        if nxt < 1e-17 or nxt > term:
            break
        term = nxt
    chi = x - 0.25 * math.pi
    amp = math.sqrt(2.0 / (math.pi * x))
    j0 = amp * (p * math.cos(chi) - q * math.sin(chi))
    y0 = amp * (p * math.sin(chi) + q * math.cos(chi))
    return j0, y0


def bessel_j0_y0(x: float) -> tuple[float, float]:
    """Return ``(J0(x), Y0(x))`` for finite ``x >= MIN_ARGUMENT``."""
    x = float(x)
    if not x >= MIN_ARGUMENT or not math.isfinite(x):
        raise ValueError(f"argument must be finite and at least {MIN_ARGUMENT}, got {x}")
    if x <= SERIES_MAX:
        return _series(x)
    if x < ASYMPTOTIC_MIN:
        return _miller(x)
    return _asymptotic(x)


def bessel_j0(x: float) -> float:
    return bessel_j0_y0(x)[0]


def bessel_y0(x: float) -> float:
    return bessel_j0_y0(x)[1]


def hankel0_first(x: float) -> complex:
    """Hankel function of the first kind and order zero, ``J0 + i Y0``."""
    j0, y0 = bessel_j0_y0(x)
    return complex(j0, y0)


def phi_free(dim: int, k: float, r: float) -> complex:
    """Outgoing fundamental solution of ``-Laplace - k^2`` at distance ``r``.

    ``dim == 2`` gives ``(i/4) H0(kr)``, ``dim == 3`` gives
    ``exp(ikr) / (4 pi r)``.
    """
    if not r > 0.0:
        raise ValueError("the fundamental solution is singular at r = 0")
    if not k > 0.0:
        raise ValueError(f"wavenumber must be positive, got {k}")
    if dim == 2:
        return 0.25j * hankel0_first(k * r)
    if dim == 3:
        return complex(math.cos(k * r), math.sin(k * r)) / (4.0 * math.pi * r)
    raise ValueError(f"dimension must be 2 or 3, got {dim}")
