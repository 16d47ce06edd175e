import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from qmbe.fermi_bands import (
    EMPTY_BAND,
    BandStructure,
    FermiClosure,
    KLattice,
    carrier_density,
    chemical_potential,
    fermi_frequency,
    fermi_occupation,
    inversion_factor,
    omega_k,
    spontaneous_product,
)

BAND = BandStructure(m_e=4.0, m_h=22.5)


def test_omega_k():
    assert omega_k(BAND, 0.0) == 0.0
    sym = BandStructure(2.0, 2.0)
    assert omega_k(sym, 3.0) == pytest.approx(9.0 / 2.0)
    assert omega_k(BAND, 2.4) == pytest.approx(4 * omega_k(BAND, 1.2), rel=1e-15)
    with pytest.raises(ValueError):
        omega_k(BAND, -1.0)


def test_zero_temperature_mu_sum_is_fermi_frequency():
    for N in (0.1, 1.0, 7.5):
        mu_e = chemical_potential(N, 0.0, BAND.m_e)
        mu_h = chemical_potential(N, 0.0, BAND.m_h)
        assert mu_e + mu_h == pytest.approx(fermi_frequency(N, BAND.M), rel=1e-14)


def test_mu_vanishes_at_ln2():
    m, T = 3.0, 0.7
    N = math.log(2) * m * T / math.pi
    assert abs(chemical_potential(N, T, m)) < 1e-14


def _density_by_quadrature(mu, T, m):
    """(1/pi) int k dk f(k) = (m/pi) int de f(e), written out independently."""

    def f(e):
        x = (e - mu) / T
        return 1.0 / (math.exp(x) + 1) if x < 700 else 0.0

    top = max(mu, 0.0) + 60 * T
    lo = max(mu - 60 * T, 0.0)
    head = lo * (m / math.pi) if lo > 0 else 0.0  # f = 1 to within exp(-60)
    core = quad(f, lo, top, points=[mu] if lo < mu < top else None,
                epsabs=0, epsrel=1e-13, limit=200)[0]
    return head + core * m / math.pi


@pytest.mark.parametrize("N", [1e-3, 0.3, 2.0, 40.0])
@pytest.mark.parametrize("T", [0.05, 1.0, 20.0])
@pytest.mark.parametrize("m", [0.5, 22.5])
def test_finite_temperature_density_round_trip(N, T, m):
    mu = chemical_potential(N, T, m)
    assert _density_by_quadrature(mu, T, m) == pytest.approx(N, rel=1e-8)


def test_carrier_density_helper_matches():
    cl = FermiClosure.from_density(2.0, 0.5, BAND)
    assert carrier_density(cl, "e") == pytest.approx(2.0, rel=1e-8)
    assert carrier_density(cl, "h") == pytest.approx(2.0, rel=1e-8)
    cl0 = FermiClosure.from_density(2.0, 0.0, BAND)
    assert carrier_density(cl0, "h") == pytest.approx(2.0, rel=1e-10)


def test_empty_band():
    assert chemical_potential(0.0, 0.0, 1.0) == EMPTY_BAND
    assert chemical_potential(0.0, 2.0, 1.0) == EMPTY_BAND
    for T in (0.0, 1.0):
        cl = FermiClosure.from_density(0.0, T, BAND)
        k = np.linspace(0, 5, 11)
        np.testing.assert_array_equal(fermi_occupation("e", k, cl), 0.0)
        np.testing.assert_array_equal(inversion_factor(k, cl), -1.0)
        np.testing.assert_array_equal(spontaneous_product(k, cl), 0.0)


def test_zero_temperature_steps():
    cl = FermiClosure.from_density(1.5, 0.0, BAND)
    kF = float(cl.k_fermi)
    k = np.array([0.2 * kF, 0.99 * kF, 1.01 * kF, 3 * kF])
    for s in "eh":
        np.testing.assert_array_equal(fermi_occupation(s, k, cl), [1, 1, 0, 0])
    np.testing.assert_array_equal(inversion_factor(k, cl), [1, 1, -1, -1])
    np.testing.assert_array_equal(spontaneous_product(k, cl), [1, 1, 0, 0])


def test_half_occupation_at_mu():
    cl = FermiClosure.from_density(5.0, 0.3, BAND)
    k_mu = math.sqrt(2 * BAND.m_h * cl.mu_h)
    assert fermi_occupation("h", k_mu, cl) == pytest.approx(0.5, abs=1e-15)


def test_fermi_frequency():
    assert fermi_frequency(0.0, BAND.M) == 0.0
    assert fermi_frequency(2.6, BAND.M) == pytest.approx(2 * fermi_frequency(1.3, BAND.M))


@pytest.mark.parametrize("N", [0.01, 1.0, 123.0])
def test_fermi_frequency_matches_band_edge(N):
    kF = FermiClosure.from_density(N, 0.0, BAND).k_fermi
    assert BAND.omega(kF) == pytest.approx(fermi_frequency(N, BAND.M), rel=1e-12)
    # same edge from each species' chemical potential
    for m in (BAND.m_e, BAND.m_h):
        assert math.sqrt(2 * m * chemical_potential(N, 0.0, m)) == pytest.approx(kF, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 50), st.floats(0, 30), st.floats(0, 10))
def test_occupation_bounds(k, N, T):
    cl = FermiClosure.from_density(N, T, BAND)
    inv = inversion_factor(k, cl)
    prod = spontaneous_product(k, cl)
    fe, fh = fermi_occupation("e", k, cl), fermi_occupation("h", k, cl)
    assert 0 <= fe <= 1 and 0 <= fh <= 1
    assert -1 <= inv <= 1
    assert 0 <= prod <= min(fe, fh) + 1e-15


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 30), st.floats(0, 10))
def test_occupation_monotone_in_k(N, T):
    cl = FermiClosure.from_density(N, T, BAND)
    k = np.linspace(0, 20, 400)
    for s in "eh":
        assert np.all(np.diff(fermi_occupation(s, k, cl)) <= 1e-15)


def test_low_temperature_limit():
    N = 2.0
    cold = FermiClosure.from_density(N, 0.0, BAND)
    kF = float(cold.k_fermi)
    k = np.array([0.5, 0.9, 1.1, 1.5]) * kF
    errs = []
    for T in (1e-2, 1e-3, 1e-4):
        warm = FermiClosure.from_density(N, T, BAND)
        errs.append(np.abs(inversion_factor(k, warm) - inversion_factor(k, cold)).max())
    assert errs[0] > errs[1] > errs[2] or errs[2] == 0
    assert errs[2] < 1e-12
    # quadrature of N is continuous in T
    dens = [_density_by_quadrature(chemical_potential(N, T, 4.0), T, 4.0) for T in (1e-3, 1e-2)]
    assert dens == pytest.approx([N, N], rel=1e-8)


def test_lattice_weights():
    lat = KLattice.uniform_in_omega(3.0, 10)
    assert lat.integrate(np.ones(10)) == pytest.approx(9.0 / (4 * math.pi), rel=1e-14)
    # midpoint in k^2 is exact for integrands linear in k^2
    assert lat.integrate(lat.k**2) == pytest.approx(81.0 / (8 * math.pi), rel=1e-14)
    assert np.all(np.diff(BAND.omega(lat.k)) == pytest.approx(BAND.omega(lat.k)[0] * 2))
