"""Parabolic bands, quasi-equilibrium Fermi occupations and the k lattice.

All functions broadcast over numpy arrays. Distributions depend on |k| only,
so two-dimensional k integrals reduce to (1/2pi) * int k dk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .params import HBAR, K_B, DeviceParams

# chemical potential of an empty band; every occupation evaluates to zero
EMPTY_BAND = -math.inf


@dataclass(frozen=True)
class BandStructure:
    m_e: float
    m_h: float

    @classmethod
    def from_params(cls, p: DeviceParams) -> "BandStructure":
        return cls(p.m_e, p.m_h)

    @property
    def a_omega(self) -> float:
        """Dispersion coefficient hbar/(2 m_e) + hbar/(2 m_h)."""
        return HBAR / (2 * self.m_e) + HBAR / (2 * self.m_h)

    @property
    def M(self) -> float:
        return 1.0 / self.m_e + 1.0 / self.m_h

    def mass(self, species: str) -> float:
        if species == "e":
            return self.m_e
        if species == "h":
            return self.m_h
        raise ValueError(f"species must be 'e' or 'h', got {species!r}")

    def omega(self, k):
        return omega_k(self, k)

    def k_of_omega(self, omega):
        return np.sqrt(np.asarray(omega, dtype=float) / self.a_omega)


def omega_k(b: BandStructure, k):
    """Transition detuning above the gap, Omega(k) = a_omega k^2."""
    k = np.asarray(k, dtype=float)
    if np.any(k < 0):
        raise ValueError("k must be nonnegative")
    return b.a_omega * k**2


def chemical_potential(N, T: float, m: float):
    """Chemical potential of a 2D parabolic band holding sheet density N.

    Spin degeneracy 2. At T > 0 this is the exact inversion
    mu = k_B T ln(exp(pi hbar^2 N / (m k_B T)) - 1); at T = 0 it is the
    Fermi energy pi hbar^2 N / m. N = 0 maps to :data:`EMPTY_BAND`.
    """
    N = np.asarray(N, dtype=float)
    if np.any(N < 0) or T < 0:
        raise ValueError("N and T must be nonnegative")
    eF = math.pi * HBAR**2 * N / m
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if T == 0:
            mu = np.where(N > 0, eF, EMPTY_BAND)
        else:
            kT = K_B * T
            x = eF / kT
            # log(expm1(x)) loses nothing for small x; large x needs the shifted form
            mu = np.where(
                x > 1.0,
                kT * (x + np.log1p(-np.exp(-x))),
                kT * np.log(np.expm1(x)),
            )
            mu = np.where(N > 0, mu, EMPTY_BAND)
    return mu[()] if mu.ndim == 0 else mu


def fermi_dirac(omega, mu, T: float):
    """Occupation of a level at frequency ``omega`` (half-filled at mu)."""
    omega = np.asarray(omega, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if T == 0:
        return np.heaviside(mu - omega, 0.5)
    # 0.5*(1 - tanh(arg/2)) equals 1/(exp(arg)+1) without overflow
    with np.errstate(invalid="ignore", over="ignore"):
        arg = (omega - mu) / (K_B * T)
        f = 0.5 * (1.0 - np.tanh(0.5 * arg))
    return np.where(np.isneginf(mu), 0.0, f)


@dataclass(frozen=True)
class FermiClosure:
    """Quasi-equilibrium electron and hole distributions at density N.

    ``N`` may be an array (one closure per lateral grid point); the
    chemical potentials then have the same shape.
    """

    N: np.ndarray | float
    T: float
    mu_e: np.ndarray | float
    mu_h: np.ndarray | float
    band: BandStructure

    @classmethod
    def from_density(cls, N, T: float, band: BandStructure) -> "FermiClosure":
        return cls(
            N=N,
            T=T,
            mu_e=chemical_potential(N, T, band.m_e),
            mu_h=chemical_potential(N, T, band.m_h),
            band=band,
        )

    @property
    def k_fermi(self):
        """Common Fermi wavenumber sqrt(2 pi N) (meaningful at T = 0)."""
        return np.sqrt(2 * math.pi * np.asarray(self.N, dtype=float))


def fermi_occupation(species: str, k, closure: FermiClosure):
    m = closure.band.mass(species)
    mu = closure.mu_e if species == "e" else closure.mu_h
    omega_s = HBAR * np.asarray(k, dtype=float) ** 2 / (2 * m)
    return fermi_dirac(omega_s, np.asarray(mu) / HBAR, closure.T)


def fermi_frequency(N, M: float):
    """Omega_f(N) = pi hbar M N, the transition frequency at the Fermi edge."""
    return math.pi * HBAR * M * np.asarray(N, dtype=float)


def inversion_factor(k, closure: FermiClosure):
    """f_e + f_h - 1: positive where the transition at k amplifies."""
    return fermi_occupation("e", k, closure) + fermi_occupation("h", k, closure) - 1.0


def spontaneous_product(k, closure: FermiClosure):
    return fermi_occupation("e", k, closure) * fermi_occupation("h", k, closure)


def carrier_density(closure: FermiClosure, species: str = "e") -> float:
    """Sheet density recovered from the occupation by adaptive quadrature.

    Used to verify :func:`chemical_potential`; scalar closures only.
    """
    from scipy.integrate import quad

    m = closure.band.mass(species)
    mu = float(closure.mu_e if species == "e" else closure.mu_h)
    if np.isneginf(mu):
        return 0.0

    def integrand(k):
        return k * float(fermi_occupation(species, k, closure)) / math.pi

    if closure.T == 0:
        k_edge = math.sqrt(2 * m * mu / HBAR)
        return quad(integrand, 0, k_edge, epsabs=0, epsrel=1e-12)[0]
    # split at the Fermi edge (or the thermal scale) and integrate the tail to infinity
    k_split = math.sqrt(2 * m * max(mu, K_B * closure.T) / HBAR)
    head = quad(integrand, 0, k_split, epsabs=0, epsrel=1e-12, limit=200)[0]
    tail = quad(integrand, k_split, np.inf, epsabs=0, epsrel=1e-12, limit=200)[0]
    return head + tail


@dataclass(frozen=True)
class KLattice:
    """Midpoint radial lattice, uniform in k^2 (hence uniform in Omega).

    ``weights`` include the 1/(2 pi) k dk measure, so
    ``(weights * F(k)).sum()`` approximates (1/2pi) int_0^k_max k dk F(k).
    """

    k: np.ndarray
    weights: np.ndarray
    k_max: float

    @classmethod
    def uniform_in_omega(cls, k_max: float, n_k: int) -> "KLattice":
        du = k_max**2 / n_k
        u = (np.arange(n_k) + 0.5) * du
        weights = np.full(n_k, du / (4 * math.pi))
        return cls(k=np.sqrt(u), weights=weights, k_max=float(k_max))

    @classmethod
    def for_cutoff_frequency(cls, band: BandStructure, omega_max: float, n_k: int) -> "KLattice":
        return cls.uniform_in_omega(float(band.k_of_omega(omega_max)), n_k)

    def integrate(self, values, axis: int = -1):
        values = np.moveaxis(np.asarray(values), axis, -1)
        return values @ self.weights
