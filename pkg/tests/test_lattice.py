"""Lattice normalization, coordinates, covers, flat systoles."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stabletori.errors import InvalidCoverError, InvalidLatticeError
from stabletori.lattice import (CoverSpec, Lattice, cover_lattice, flat_systole,
                                from_oblique, normalize_lattice, oblique_coords,
                                wirtinger_factors)

from conftest import brute_force_reduced_tau


TAUS = [
    0.3 + 1.1j,
    -0.7 + 0.4j,
    0.1 + 0.1j,      # far outside the fundamental domain
    2.5 + 0.05j,
    -1.4 + 2.2j,
    0.5 + 0.9j,      # boundary Re = 1/2
    0.0 + 1.0j,
]


@pytest.mark.parametrize("tau", TAUS)
def test_normalize_matches_exhaustive_search(tau):
    lat, U = normalize_lattice(tau)
    best_im = brute_force_reduced_tau(tau)
    assert lat.tau2 == pytest.approx(best_im, rel=1e-12)
    assert lat.is_reduced()


@pytest.mark.parametrize("tau", TAUS)
def test_normalize_unimodular_bookkeeping(tau):
    """U must be unimodular and reproduce tau' as a Mobius image of tau."""
    lat, U = normalize_lattice(tau)
    U = np.asarray(U)
    assert U.shape == (2, 2)
    assert U.dtype.kind in "iu" or np.allclose(U, np.round(U))
    det = U[0, 0] * U[1, 1] - U[0, 1] * U[1, 0]
    assert det == 1
    # rows of U are the new generators in the old (1, tau) basis
    g1 = U[0, 0] + U[0, 1] * tau
    g2 = U[1, 0] + U[1, 1] * tau
    assert g2 / g1 == pytest.approx(lat.tau, abs=1e-12)


@given(st.floats(-3, 3), st.floats(0.05, 4))
@settings(max_examples=60, deadline=None)
def test_normalize_is_reduced_and_im_does_not_drop(t1, t2):
    lat, _ = normalize_lattice(complex(t1, t2))
    assert lat.is_reduced()
    assert lat.tau2 >= t2 - 1e-12


def test_degenerate_lattice_rejected():
    with pytest.raises(InvalidLatticeError):
        normalize_lattice(0.5 + 0.0j)
    with pytest.raises(InvalidLatticeError):
        Lattice(0.0, -1.0)


@given(st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=50, deadline=None)
def test_oblique_round_trip(x, y):
    lat = Lattice(0.4, 1.3)
    z = complex(x, y)
    c = oblique_coords(z, lat)
    assert from_oblique(c, lat) == pytest.approx(z, abs=1e-12)


def test_wirtinger_factors_annihilate_z_and_fix_zbar():
    # dbar applied to z = xi + eta*tau must vanish; applied to conj(z) it is 1
    for tau in (1.0j, 0.3 + 1.1j, -0.5 + 0.87j):
        lat, _ = normalize_lattice(tau)
        fxi, feta = wirtinger_factors(lat)
        assert abs(fxi + feta * lat.tau) < 1e-14
        assert abs(fxi + feta * np.conj(lat.tau) - 1.0) < 1e-14


def test_cover_spec_degree_and_validation():
    assert CoverSpec.scaling(3).degree == 9
    assert CoverSpec.vertical_double().degree == 2
    assert CoverSpec.double_double().degree == 4
    with pytest.raises(InvalidCoverError):
        CoverSpec(((1, 0), (2, 0)))   # rank deficient


def test_cover_lattice_scaling_tower():
    lat = Lattice(0.0, 1.0)
    for k in (1, 2, 5):
        lat_k, scale_k, deg = cover_lattice(lat, CoverSpec.scaling(k))
        assert deg == k * k
        assert lat_k.tau == pytest.approx(lat.tau)
        assert scale_k == pytest.approx(k)


def test_cover_lattice_vertical_double():
    lat = Lattice(0.0, 1.0)
    lat2, scale2, deg = cover_lattice(lat, CoverSpec.vertical_double())
    assert deg == 2
    # (1, 2i) is already reduced; the chart keeps unit horizontal scale
    assert lat2.tau == pytest.approx(2.0j)
    assert scale2 == pytest.approx(1.0)


@pytest.mark.parametrize("tau,expected", [
    (1.0j, 1.0),
    (2.0j, 1.0),
    (0.5 + np.sqrt(3) / 2 * 1j, 1.0),   # hexagonal: all short vectors length 1
    (0.3 + 1.1j, None),
])
def test_flat_systole_closed_forms(tau, expected):
    lat, _ = normalize_lattice(tau)
    got = flat_systole(lat)
    if expected is None:
        # reduced basis vector 1 is shortest for a reduced lattice
        expected = 1.0
    assert got == pytest.approx(expected, rel=1e-12)


def test_flat_systole_scales_linearly():
    lat = Lattice(0.2, 0.9)
    base = flat_systole(lat)
    assert flat_systole(lat, scale=3.5) == pytest.approx(3.5 * base, rel=1e-12)


def test_sublattice_systole_growth_is_exact():
    lat, _ = normalize_lattice(0.5 + 0.9j)
    base = flat_systole(lat)
    for k in range(1, 11):
        lat_k, scale_k, _ = cover_lattice(lat, CoverSpec.scaling(k))
        assert flat_systole(lat_k, scale_k) == pytest.approx(k * base, rel=1e-12)
