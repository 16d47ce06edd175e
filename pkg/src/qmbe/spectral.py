"""Spontaneous emission factor, modal gain and source spectra, far field.

The gain and source spectra follow from adiabatic elimination of the
field-dipole correlation: every lateral Fourier mode q of the field sees a
Lorentzian of width Gamma + kappa centred on its paraxial frequency
omega_q = omega0 q^2 / (2 k0^2), weighted by the inversion (gain) or by the
electron-hole product (spontaneous source). Below threshold each mode then
settles at the photon number F = S / (2 (kappa - G)).

k integrals are evaluated three ways:

* closed form at T = 0 (steps in Omega, arctan primitives), the default;
* adaptive quadrature in k (``method="quad"``), any T;
* a fixed :class:`~qmbe.fermi_bands.KLattice`, matching the dynamics exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import integrate, optimize

from .fermi_bands import (
    BandStructure,
    FermiClosure,
    KLattice,
    fermi_frequency,
    inversion_factor,
    spontaneous_product,
)
from .params import HBAR, DeviceParams, effective_mass_M, mode_density

PARAXIAL_LIMIT_DEG = 30.0


class QuadratureError(RuntimeError):
    pass


class AboveThresholdError(ValueError):
    """A requested mode has gain at or above the cavity loss."""


class CannotLaseError(ValueError):
    pass


def params_hash(p: DeviceParams) -> str:
    blob = json.dumps(p.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# spontaneous emission factor
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BetaResult:
    omega: Any
    Omega_f: Any
    beta: Any
    beta0: float

    @property
    def normalized(self):
        return np.asarray(self.beta) / self.beta0


def beta_prefactor(p: DeviceParams) -> float:
    """3 sigma / (2 pi rho_L W L)."""
    return 3 * p.sigma / (2 * math.pi * mode_density(p) * p.W * p.L)


def beta_analytic(omega, Omega_f, p: DeviceParams) -> BetaResult:
    """Spontaneous emission factor of a mode detuned ``omega`` above the gap.

    At Omega_f = 0 the continuous extension
    pref * lw / (lw^2 + omega^2) is returned.
    """
    omega = np.asarray(omega, dtype=float)
    Omega_f = np.asarray(Omega_f, dtype=float)
    if np.any(omega < 0) or np.any(Omega_f < 0):
        raise ValueError("omega and Omega_f must be nonnegative")
    lw = p.linewidth
    pref = beta_prefactor(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        bracket = np.arctan((Omega_f - omega) / lw) + np.arctan(omega / lw)
        beta = np.where(
            Omega_f > 0,
            pref * bracket / Omega_f,
            pref * lw / (lw**2 + omega**2),
        )
    beta = beta[()] if beta.ndim == 0 else beta
    return BetaResult(omega=omega[()] if omega.ndim == 0 else omega,
                      Omega_f=Omega_f[()] if Omega_f.ndim == 0 else Omega_f,
                      beta=beta, beta0=pref / lw)


def beta_numeric_oracle(omega: float, Omega_f: float, p: DeviceParams) -> float:
    """beta from adaptive quadrature of the mode Lorentzian over the filled band.

    Zero-temperature only: the electron-hole product is a step at Omega_f.
    """
    if p.T != 0:
        raise ValueError("the quadrature oracle is defined at T = 0")
    if omega < 0 or Omega_f < 0:
        raise ValueError("omega and Omega_f must be nonnegative")
    lw = p.linewidth
    pref = beta_prefactor(p)

    def lorentz(w):
        return lw / (lw**2 + (w - omega) ** 2)

    if Omega_f == 0:
        return pref * lorentz(0.0)
    points = [omega] if 0 < omega < Omega_f else None
    res = integrate.quad(lorentz, 0.0, Omega_f, points=points, epsabs=0.0,
                         epsrel=1e-12, limit=200, full_output=1)
    val, err = res[0], res[1]
    # a fourth element is quadpack's warning message
    if len(res) > 3 or err > 1e-10 * abs(val):
        raise QuadratureError(f"beta quadrature did not converge (err={err:g})")
    return pref * val / Omega_f


# ---------------------------------------------------------------------------
# gain and spontaneous spectra
# ---------------------------------------------------------------------------

def _gain_scale(p: DeviceParams) -> float:
    """g0^2 nu0 / (2 pi hbar M): converts a frequency integral into a rate."""
    return p.coupling**2 / (2 * math.pi * HBAR * effective_mass_M(p))


def _omega_cutoff(p: DeviceParams, k_max: float | None) -> float:
    if k_max is None:
        return math.inf
    return BandStructure.from_params(p).a_omega * k_max**2


def _lorentz(detuning, lw):
    return lw / (lw**2 + detuning**2)


def _closed_form_parts(omega_q, N, p, k_max):
    """Filled (gain) and empty (absorbing) arctan integrals at T = 0."""
    lw = p.linewidth
    w = np.asarray(omega_q, dtype=float)
    Om = _omega_cutoff(p, k_max)
    Of = float(fermi_frequency(N, effective_mass_M(p)))
    Oe = min(Of, Om)
    filled = np.arctan((Oe - w) / lw) + np.arctan(w / lw)
    empty = np.arctan((Om - w) / lw) - np.arctan((Oe - w) / lw)
    return filled, empty


def _quad_k(fn, omega_q, N, T, p, k_max):
    """(1/2pi) int k dk fn(k) with the Lorentzian peak and Fermi edge as breakpoints."""
    band = BandStructure.from_params(p)
    k_res = float(band.k_of_omega(max(omega_q, 0.0)))
    k_f = math.sqrt(2 * math.pi * N) if N > 0 else 0.0
    # past k_split the integrand is a smooth monotone tail
    o_split = max(omega_q, float(fermi_frequency(N, band.M))) + 20 * (p.linewidth + T)
    k_split = float(band.k_of_omega(o_split))
    upper = math.inf if k_max is None else k_max
    brk = sorted({x for x in (k_res, k_f) if 0 < x < min(k_split, upper)})

    def integrand(k):
        return k * fn(k) / (2 * math.pi)

    opts = dict(epsabs=1e-15, epsrel=1e-12, limit=400)
    if upper <= k_split:
        return integrate.quad(integrand, 0, upper, points=brk or None, **opts)[0]
    head = integrate.quad(integrand, 0, k_split, points=brk or None, **opts)[0]
    tail = integrate.quad(integrand, k_split, upper, **opts)[0]
    return head + tail


def _resolve_method(method, T, lattice):
    if method == "auto":
        if lattice is not None:
            return "lattice"
        return "closed" if T == 0 else "quad"
    if method not in ("closed", "quad", "lattice"):
        raise ValueError(f"unknown method {method!r}")
    if method == "closed" and T != 0:
        raise ValueError("closed form is available at T = 0 only")
    if method == "lattice" and lattice is None:
        raise ValueError("method='lattice' needs a KLattice")
    return method


def _spectrum(kind, omega_q, N, T, p, k_max, lattice, method):
    if N < 0:
        raise ValueError("N must be nonnegative")
    method = _resolve_method(method, T, lattice)
    lw = p.linewidth
    band = BandStructure.from_params(p)
    closure = FermiClosure.from_density(N, T, band)
    weight = inversion_factor if kind == "gain" else spontaneous_product
    mult = 1.0 if kind == "gain" else 2.0
    omega_q = np.asarray(omega_q, dtype=float)

    if method == "closed":
        filled, empty = _closed_form_parts(omega_q, N, p, k_max)
        bracket = filled - empty if kind == "gain" else filled
        out = mult * _gain_scale(p) * bracket
    elif method == "lattice":
        k = lattice.k
        om = band.omega(k)
        wk = weight(k, closure)
        lor = _lorentz(om[None, :] - omega_q.reshape(-1, 1), lw)
        out = mult * p.coupling**2 * (lor * wk) @ lattice.weights
        out = out.reshape(omega_q.shape)
    else:
        flat = [
            mult * p.coupling**2 * _quad_k(
                lambda k, w=w: float(weight(k, closure)) * _lorentz(float(band.omega(k)) - w, lw),
                float(w), N, T, p, k_max)
            for w in omega_q.ravel()
        ]
        out = np.array(flat).reshape(omega_q.shape)
    return out[()] if out.ndim == 0 else out


def modal_gain(omega_q, N: float, T: float, p: DeviceParams, *,
               k_max: float | None = None, lattice: KLattice | None = None,
               method: str = "auto"):
    """Net modal gain rate G(omega_q) at carrier density N.

    The absorbing tail runs up to ``k_max`` (infinity when None); see
    :func:`gain_cutoff_tail` for what a finite cutoff leaves out.
    """
    return _spectrum("gain", omega_q, N, T, p, k_max, lattice, method)


def gain_cutoff_tail(omega_q, p: DeviceParams, k_max: float):
    """Absorption beyond the cutoff, G(k_max) - G(inf), assuming empty states there."""
    lw = p.linewidth
    Om = _omega_cutoff(p, k_max)
    w = np.asarray(omega_q, dtype=float)
    return _gain_scale(p) * (0.5 * math.pi - np.arctan((Om - w) / lw))


def spontaneous_spectrum(omega_q, N: float, T: float, p: DeviceParams, *,
                         k_max: float | None = None, lattice: KLattice | None = None,
                         method: str = "auto"):
    """Spontaneous emission rate S(omega_q) into mode omega_q."""
    return _spectrum("source", omega_q, N, T, p, k_max, lattice, method)


# ---------------------------------------------------------------------------
# far field and threshold
# ---------------------------------------------------------------------------

def mode_frequency(theta_deg, p: DeviceParams):
    """Paraxial frequency of the lateral mode leaving at angle theta."""
    # |theta| keeps the profile exactly even on grids that are only symmetric to rounding
    q = p.k0 * np.sin(np.deg2rad(np.abs(theta_deg)))
    return p.paraxial * q**2


def angle_of_mode(q, p: DeviceParams):
    return np.rad2deg(np.arcsin(np.asarray(q, dtype=float) / p.k0))


@dataclass(frozen=True)
class SpectralResult:
    abscissa: np.ndarray
    values: np.ndarray
    kind: str
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["abscissa", "value"])
            for a, v in zip(self.abscissa, self.values):
                w.writerow([repr(float(a)), repr(float(v))])
        sidecar = path.with_name(path.name + ".json")
        sidecar.write_text(json.dumps({"kind": self.kind, "metadata": self.metadata},
                                      indent=2, sort_keys=True) + "\n")
        return path


def farfield_profile(N: float, T: float, p: DeviceParams, angles: Sequence[float], *,
                     k_max: float | None = None, lattice: KLattice | None = None,
                     method: str = "auto") -> SpectralResult:
    """Below-threshold far-field intensity F(theta) = S / (2 (kappa - G)).

    ``angles`` are in degrees and must lie within the paraxial range.
    """
    theta = np.asarray(angles, dtype=float)
    if np.any(np.abs(theta) > PARAXIAL_LIMIT_DEG):
        raise ValueError(f"angles must satisfy |theta| <= {PARAXIAL_LIMIT_DEG} deg")
    w = mode_frequency(theta, p)
    G = np.atleast_1d(modal_gain(w, N, T, p, k_max=k_max, lattice=lattice, method=method))
    S = np.atleast_1d(spontaneous_spectrum(w, N, T, p, k_max=k_max, lattice=lattice,
                                           method=method))
    margin = p.kappa - G
    bad = np.flatnonzero(margin <= 0)
    if bad.size:
        raise AboveThresholdError(
            f"mode at theta = {theta.ravel()[bad[0]]:.6g} deg is at or above threshold "
            f"(G = {G[bad[0]]:.6g} >= kappa = {p.kappa:.6g})")
    F = S / (2 * margin)
    meta = {"N": float(N), "T": float(T), "params_hash": params_hash(p),
            "abscissa": "theta_deg", "value": "photon_number"}
    return SpectralResult(abscissa=theta, values=F.reshape(theta.shape),
                          kind="farfield", metadata=meta)


def gain_maximum(N: float, T: float, p: DeviceParams, *, k_max: float | None = None,
                 lattice: KLattice | None = None, method: str = "auto",
                 n_grid: int = 401) -> tuple[float, float]:
    """(omega*, G(omega*)) maximizing the modal gain over omega >= 0."""
    Of = float(fermi_frequency(N, effective_mass_M(p)))
    hi = Of + 10 * p.linewidth + 20 * T
    if k_max is not None:
        hi = min(hi, _omega_cutoff(p, k_max))
    if lattice is not None:
        hi = min(hi, _omega_cutoff(p, lattice.k_max))
    grid = np.linspace(0.0, hi, n_grid)

    def G(w):
        return modal_gain(w, N, T, p, k_max=k_max, lattice=lattice, method=method)

    vals = np.asarray(G(grid))
    i = int(np.argmax(vals))
    if i == 0 and vals[1] <= vals[0]:
        # concave start: the maximum may still sit just above zero
        lo, up = 0.0, grid[1]
    else:
        lo, up = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]
    res = optimize.minimize_scalar(lambda w: -float(G(w)), bounds=(lo, up),
                                   method="bounded",
                                   options={"xatol": 1e-12 * max(1.0, up)})
    best_w, best_g = float(res.x), -float(res.fun)
    g0 = float(vals[0])
    if g0 >= best_g:
        return 0.0, g0
    return best_w, best_g


def transparency_density(p: DeviceParams) -> float:
    """Density at which Omega_f equals Gamma + kappa (zero gain at omega = 0, T = 0)."""
    return p.linewidth / (math.pi * HBAR * effective_mass_M(p))


def pinning_density(p: DeviceParams, T: float | None = None, *,
                    k_max: float | None = None, lattice: KLattice | None = None,
                    method: str = "auto", rtol: float = 1e-10) -> float:
    """Smallest N whose peak modal gain equals the cavity loss kappa."""
    T = p.T if T is None else T

    def excess(N):
        return gain_maximum(N, T, p, k_max=k_max, lattice=lattice, method=method)[1] - p.kappa

    lo, hi = 0.0, transparency_density(p)
    if excess(lo) >= 0:
        raise CannotLaseError("peak gain already reaches kappa at N = 0")
    n_max = 1e6 * hi
    while excess(hi) < 0:
        lo, hi = hi, 2 * hi
        if hi > n_max:
            raise CannotLaseError(
                f"device cannot lase: peak gain stays below kappa = {p.kappa:g} "
                f"up to N = {n_max:g}")
    return optimize.brentq(excess, lo, hi, xtol=1e-300, rtol=rtol)


def peak_metrics(theta, values) -> tuple[float, float]:
    """Peak angle (taken on the theta >= 0 side) and FWHM of the peak around it.

    The FWHM is the width of the contiguous region above half maximum,
    located by linear interpolation; NaN if it reaches the grid edge.
    """
    theta = np.asarray(theta, dtype=float)
    F = np.asarray(values, dtype=float)
    pos = np.flatnonzero(theta >= 0)
    i = int(pos[np.argmax(F[pos])])
    half = 0.5 * F[i]

    j = i
    while j < len(F) - 1 and F[j] >= half:
        j += 1
    if F[j] >= half:
        return float(theta[i]), math.nan
    right = np.interp(half, [F[j], F[j - 1]], [theta[j], theta[j - 1]])

    j = i
    while j > 0 and F[j] >= half:
        j -= 1
    if F[j] >= half:
        return float(theta[i]), math.nan
    left = np.interp(half, [F[j], F[j + 1]], [theta[j], theta[j + 1]])
    return float(theta[i]), float(right - left)
