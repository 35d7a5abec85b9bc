"""Weierstrass elliptic functions for the lattice Z + Z*tau.

Evaluation uses the exponentially convergent Fourier (q-series) form after
reducing the argument to the fundamental cell; the classical direct lattice
sum is kept as an independent cross-check (`wp_lattice_sum`), and the two
are compared in the test suite.
"""

from __future__ import annotations

import numpy as np

from .errors import PoleError
from .lattice import Lattice

TWO_PI_I = 2j * np.pi


def _reduce(z: np.ndarray, lat: Lattice) -> np.ndarray:
    """Translate z by lattice vectors so |xi|, |eta| <= 1/2."""
    z = np.asarray(z, dtype=complex)
    eta = z.imag / lat.tau2
    xi = z.real - z.imag * lat.tau1 / lat.tau2
    m = np.round(xi)
    n = np.round(eta)
    return z - m - n * lat.tau


def _qseries_terms(lat: Lattice) -> int:
    # |q| = exp(-2 pi tau2); stop when |q|^n drops below 1e-17.
    return int(np.ceil(40.0 / (2 * np.pi * lat.tau2) * np.log(10))) + 2


def wp(z, lat: Lattice, pole_cutoff: float = 1e-6):
    """(wp(z), wp'(z)) by the q-series; vectorized over z.

    Raises PoleError when a reduced argument is within `pole_cutoff` of a
    lattice point.
    """
    zr = _reduce(z, lat)
    if np.any(np.abs(zr) < pole_cutoff):
        raise PoleError("argument too close to a lattice point")
    q = np.exp(TWO_PI_I * lat.tau)
    u = np.exp(TWO_PI_I * zr)
    nmax = _qseries_terms(lat)

    p = 1.0 / 12.0 + u / (1.0 - u) ** 2
    pp = u * (1.0 + u) / (1.0 - u) ** 3
    qn = 1.0 + 0j
    for _ in range(1, nmax + 1):
        qn *= q
        a = qn * u
        b = qn / u
        p = p + a / (1.0 - a) ** 2 + b / (1.0 - b) ** 2 \
            - 2.0 * qn / (1.0 - qn) ** 2
        pp = pp + a * (1.0 + a) / (1.0 - a) ** 3 \
            - b * (1.0 + b) / (1.0 - b) ** 3
    return (TWO_PI_I ** 2) * p, (TWO_PI_I ** 3) * pp


def wp_lattice_sum(z, lat: Lattice, radius: float = 60.0,
                   pole_cutoff: float = 1e-6):
    """(wp, wp') by direct summation over |omega| <= radius.

    Convergence is slow (tail O(1/radius) before cancellation); intended as
    an independent oracle, not for production evaluation.
    """
    zr = _reduce(z, lat)
    if np.any(np.abs(zr) < pole_cutoff):
        raise PoleError("argument too close to a lattice point")
    zflat = np.atleast_1d(zr).ravel()
    M = int(np.ceil(radius / min(1.0, lat.tau2))) + 2
    m, n = np.meshgrid(np.arange(-M, M + 1), np.arange(-M, M + 1), indexing="ij")
    omega = (m + n * lat.tau).ravel()
    keep = (np.abs(omega) <= radius) & (np.abs(omega) > 0)
    omega = omega[keep]
    p = np.empty_like(zflat)
    pp = np.empty_like(zflat)
    for i, zz in enumerate(zflat):
        p[i] = 1.0 / zz ** 2 + np.sum(1.0 / (zz - omega) ** 2 - 1.0 / omega ** 2)
        pp[i] = -2.0 / zz ** 3 - 2.0 * np.sum(1.0 / (zz - omega) ** 3)
    shape = np.shape(z)
    if shape:
        return p.reshape(shape), pp.reshape(shape)
    return p[0], pp[0]


def eisenstein_invariants(lat: Lattice) -> tuple[complex, complex]:
    """(g2, g3) from the normalized Eisenstein series E4, E6."""
    q = np.exp(TWO_PI_I * lat.tau)
    nmax = _qseries_terms(lat)
    ns = np.arange(1, nmax + 1)
    qn = q ** ns

    def sigma(k):
        # sum_{n} sigma_k(n) q^n = sum_d d^k q^d / (1 - q^d)
        return np.sum(ns ** k * qn / (1.0 - qn))

    E4 = 1.0 + 240.0 * sigma(3)
    E6 = 1.0 - 504.0 * sigma(5)
    g2 = (4.0 * np.pi ** 4 / 3.0) * E4
    g3 = (8.0 * np.pi ** 6 / 27.0) * E6
    return complex(g2), complex(g3)


def wp_second(z, lat: Lattice):
    """wp''(z) = 6 wp^2 - g2/2, via the differential equation."""
    g2, _ = eisenstein_invariants(lat)
    p, _ = wp(z, lat)
    return 6.0 * p ** 2 - g2 / 2.0


def half_period_values(lat: Lattice) -> np.ndarray:
    """wp at the three half periods, sorted by real part."""
    pts = np.array([0.5, lat.tau / 2.0, (1.0 + lat.tau) / 2.0])
    vals, _ = wp(pts, lat)
    return vals[np.argsort(vals.real)]
