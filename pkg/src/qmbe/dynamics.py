"""Time integration of the quantum Maxwell-Bloch equations on a lateral grid.

State variables (all in the frame rotating at the band-gap frequency):

``N[i]``          carrier sheet density at x_i
``C[i, j, m]``    field-dipole correlation, field at x_i, dipole at x_j, k_m
``I[i, j]``       field-field correlation (single-photon density matrix)

The quantum well fills the lateral line, so the delta(z) factors of the
three-dimensional equations are folded into the coupling g = g0 sqrt(nu0),
and a lateral delta function becomes 1/dx on the grid. Cavity loss enters as
-kappa C and -2 kappa I, which gives every Lorentzian the width Gamma + kappa.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .fermi_bands import (
    BandStructure,
    FermiClosure,
    KLattice,
    fermi_frequency,
    inversion_factor,
    spontaneous_product,
)
from .params import ConfigError, DeviceParams, NumericsConfig

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Non-finite values appeared; ``state`` holds the last good state."""

    def __init__(self, message: str, state: "SimState"):
        super().__init__(message)
        self.state = state


@dataclass
class SimState:
    t: float
    N: np.ndarray
    C: np.ndarray
    I: np.ndarray

    @classmethod
    def vacuum(cls, N0, n_x: int, n_k: int) -> "SimState":
        """Carriers N0 (scalar or grid array) with no light and no correlations."""
        N = np.broadcast_to(np.asarray(N0, dtype=float), (n_x,)).copy()
        return cls(
            t=0.0,
            N=N,
            C=np.zeros((n_x, n_x, n_k), dtype=complex),
            I=np.zeros((n_x, n_x), dtype=complex),
        )

    def copy(self) -> "SimState":
        return SimState(self.t, self.N.copy(), self.C.copy(), self.I.copy())


def laplacian_1d(f, dx: float, axis: int = 0, bc: str = "periodic"):
    """Second derivative along ``axis``.

    Periodic boundaries use the spectral derivative; ``dirichlet`` uses the
    three-point stencil with zero values just outside the grid.
    """
    f = np.asarray(f)
    n = f.shape[axis]
    if bc == "periodic":
        q = 2 * np.pi * np.fft.fftfreq(n, d=dx)
        shape = [1] * f.ndim
        shape[axis] = n
        out = np.fft.ifft(np.fft.fft(f, axis=axis) * (-(q**2)).reshape(shape), axis=axis)
        return out.real if np.isrealobj(f) else out
    if bc == "dirichlet":
        g = np.moveaxis(f, axis, 0)
        pad = np.zeros((n + 2,) + g.shape[1:], dtype=g.dtype)
        pad[1:-1] = g
        out = (pad[2:] - 2 * pad[1:-1] + pad[:-2]) / dx**2
        return np.moveaxis(out, 0, axis)
    raise ValueError(f"unknown boundary condition {bc!r}")


class QMBEModel:
    """Grid, lattice and precomputed operators for one parameter set."""

    def __init__(self, p: DeviceParams, numerics: NumericsConfig):
        self.p = p
        self.num = numerics
        self.band = BandStructure.from_params(p)
        self.lattice = KLattice.uniform_in_omega(numerics.k_max, numerics.n_k)
        self.omega_k = self.band.omega(self.lattice.k)
        self.x = numerics.x
        self.dx = numerics.dx
        self.pump = p.j_profile(self.x)
        self.g = p.coupling
        self.a = p.paraxial
        # -(Gamma + kappa + i Omega(k)), the diagonal linear part of dC/dt
        self.dephasing = -(p.linewidth + 1j * self.omega_k)
        self._frozen = None

    def lap(self, f, axis: int = 0):
        return laplacian_1d(f, self.dx, axis=axis, bc=self.num.boundary)

    def occupations(self, N):
        """Inversion f_e+f_h-1 and product f_e f_h on (grid, k), shape (n_x, n_k)."""
        if self.num.freeze_carriers and self._frozen is not None:
            return self._frozen
        Nc = np.maximum(N, 0.0)
        closure = FermiClosure.from_density(Nc[:, None], self.p.T, self.band)
        k = self.lattice.k[None, :]
        out = inversion_factor(k, closure), spontaneous_product(k, closure)
        if self.num.freeze_carriers:
            self._frozen = out
        return out

    def mode_wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.num.n_x, d=self.dx)


def _k_sum(C, model: QMBEModel):
    """(1/2pi) int k dk C(x; x', k) on the lattice, shape (n_x, n_x)."""
    return C @ model.lattice.weights


def rhs_N(state: SimState, model: QMBEModel, K=None):
    p = model.p
    if model.num.freeze_carriers:
        return np.zeros_like(state.N)
    if K is None:
        K = _k_sum(state.C, model)
    # i g (C - C*) on the diagonal = -2 g Im C
    coupling = -2 * model.g * np.diagonal(K).imag
    return -p.gamma * state.N + p.D_amb * model.lap(state.N) + model.pump + coupling


def rhs_C(state: SimState, model: QMBEModel, include_dephasing: bool = True):
    g = model.g
    inv, prod = model.occupations(state.N)
    # paraxial transport acts on the field coordinate (axis 0)
    out = -1j * model.a * model.lap(state.C, axis=0)
    if include_dephasing:
        out += model.dephasing * state.C
    # stimulated term: inversion taken at the dipole position x'
    out += 1j * g * state.I[:, :, None] * inv[None, :, :]
    idx = np.arange(state.N.size)
    out[idx, idx, :] += 1j * g * prod / model.dx
    return out


def rhs_I(state: SimState, model: QMBEModel, K=None):
    p = model.p
    if K is None:
        K = _k_sum(state.C, model)
    I = state.I
    out = -1j * model.a * (model.lap(I, axis=0) - model.lap(I, axis=1))
    out -= 2 * p.kappa * I
    out -= 1j * model.g * (K - K.conj().T)
    return out


def rhs(state: SimState, model: QMBEModel, include_dephasing: bool = True):
    K = _k_sum(state.C, model)
    return (
        rhs_N(state, model, K),
        rhs_C(state, model, include_dephasing),
        rhs_I(state, model, K),
    )


def stability_limit(p: DeviceParams, n: NumericsConfig) -> float:
    """Largest stable RK4 step: 0.5 * min(1/(Gamma+kappa+Omega(k_max)), dx^2 k0^2/omega0).

    With the integrating-factor scheme the detuning is integrated exactly and
    only Gamma + kappa remains in the first term.
    """
    band = BandStructure.from_params(p)
    detuning = float(band.omega(n.k_max)) if n.integrator == "rk4" else 0.0
    return 0.5 * min(1.0 / (p.linewidth + detuning), n.dx**2 * p.k0**2 / p.omega0)


def check_k_cutoff(p: DeviceParams, n: NumericsConfig, N_max: float) -> None:
    """Require Omega(k_max) >= 4 (Omega_f(N_max) + Gamma)."""
    band = BandStructure.from_params(p)
    need = 4 * (float(fermi_frequency(N_max, band.M)) + p.Gamma)
    have = float(band.omega(n.k_max))
    if have < need:
        raise ConfigError(
            f"k_max too small: Omega(k_max) = {have:.6g} < 4 (Omega_f + Gamma) = {need:.6g}")


def _axpy(state: SimState, dt: float, d) -> SimState:
    dN, dC, dI = d
    return SimState(state.t + dt, state.N + dt * dN, state.C + dt * dC, state.I + dt * dI)


def _rk4(state: SimState, dt: float, model: QMBEModel) -> SimState:
    k1 = rhs(state, model)
    k2 = rhs(_axpy(state, dt / 2, k1), model)
    k3 = rhs(_axpy(state, dt / 2, k2), model)
    k4 = rhs(_axpy(state, dt, k3), model)
    new = [
        y + dt / 6 * (a + 2 * b + 2 * c + d)
        for y, a, b, c, d in zip((state.N, state.C, state.I), k1, k2, k3, k4)
    ]
    return SimState(state.t + dt, *new)


def _ifrk4(state: SimState, dt: float, model: QMBEModel) -> SimState:
    """Lawson RK4 with exp(-(Gamma+kappa+i Omega) t) taken out of C."""
    E = np.exp(model.dephasing * dt / 2)
    E2 = E * E

    def f(s):
        return rhs(s, model, include_dephasing=False)

    N, C, I = state.N, state.C, state.I
    k1 = f(state)
    s2 = SimState(state.t + dt / 2, N + dt / 2 * k1[0], E * (C + dt / 2 * k1[1]), I + dt / 2 * k1[2])
    k2 = f(s2)
    s3 = SimState(state.t + dt / 2, N + dt / 2 * k2[0], E * C + dt / 2 * k2[1], I + dt / 2 * k2[2])
    k3 = f(s3)
    s4 = SimState(state.t + dt, N + dt * k3[0], E2 * C + dt * E * k3[1], I + dt * k3[2])
    k4 = f(s4)
    return SimState(
        state.t + dt,
        N + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
        E2 * C + dt / 6 * (E2 * k1[1] + 2 * E * (k2[1] + k3[1]) + k4[1]),
        I + dt / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
    )


def hermitize(I: np.ndarray) -> np.ndarray:
    """(I + I^H)/2; the result is Hermitian bit for bit."""
    return 0.5 * (I + I.conj().T)


def step(state: SimState, dt: float, model: QMBEModel) -> SimState:
    """Advance one step; I is re-symmetrized and negative N clamped afterwards."""
    advance = _ifrk4 if model.num.integrator == "ifrk4" else _rk4
    new = advance(state, dt, model)
    new.I = hermitize(new.I)
    if not (np.isfinite(new.N).all() and np.isfinite(new.C).all() and np.isfinite(new.I).all()):
        raise NumericalError(f"non-finite values after step to t = {new.t:.6g}", state)
    if new.N.min() < 0:
        log.warning("clamping negative carrier density %.3g at t = %.6g", new.N.min(), new.t)
        new.N = np.maximum(new.N, 0.0)
    return new


def total_excitation(state: SimState, dx: float) -> float:
    """Carriers plus photons, int N dx + sum_i I(x_i, x_i) dx."""
    return float(state.N.sum() * dx + np.trace(state.I).real * dx)


def diagnostics(state: SimState, dx: float) -> dict[str, float]:
    d = np.diagonal(state.I).real
    carriers = float(state.N.sum() * dx)
    photons = float(d.sum() * dx)
    return {
        "t": state.t,
        "total_carriers": carriers,
        "trace_I": photons,
        "total_excitation": carriers + photons,
        "hermiticity_residual": float(np.abs(state.I - state.I.conj().T).max()),
    }


DIAGNOSTIC_COLUMNS = ["t", "total_carriers", "trace_I", "total_excitation", "hermiticity_residual"]


def integrate(state: SimState, model: QMBEModel, t_end: float | None = None, *,
              dt: float | None = None,
              callback: Callable[[int, SimState], None] | None = None) -> SimState:
    """Step from ``state.t`` over a span ``t_end`` with a uniform step <= dt.

    ``callback(n, state)`` runs after every step.
    """
    t_end = model.num.t_end if t_end is None else t_end
    dt = model.num.dt if dt is None else dt
    n_steps = max(1, math.ceil(t_end / dt - 1e-9))
    h = t_end / n_steps
    t0 = state.t
    for n in range(1, n_steps + 1):
        state = step(state, h, model)
        state.t = t0 + n * h
        if callback is not None:
            callback(n, state)
    return state


def mode_occupation(I: np.ndarray, dx: float) -> tuple[np.ndarray, np.ndarray]:
    """Photon number per lateral Fourier mode of a periodic-grid I.

    Returns (q, n_q) with I(x, x') = sum_q n_q exp(iq(x - x')) / (n_x dx).
    """
    n = I.shape[0]
    A = np.fft.ifft(np.fft.fft(I, axis=0), axis=1)
    q = 2 * np.pi * np.fft.fftfreq(n, d=dx)
    return q, np.diagonal(A).real * dx


def snapshot_name(t: float) -> str:
    return f"snap_{t:.6f}.csv"


def write_snapshot(state: SimState, x: np.ndarray, outdir: str | Path, *,
                   full_I: bool = False, tag: str = "") -> Path:
    """Write x, N, diag I as CSV; the full I optionally as ``.npy``."""
    outdir = Path(outdir)
    name = snapshot_name(state.t)
    if tag:
        name = name[:-4] + f"_{tag}.csv"
    path = outdir / name
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "N", "I_diag"])
        for xi, n, i in zip(x, state.N, np.diagonal(state.I).real):
            w.writerow([repr(float(xi)), repr(float(n)), repr(float(i))])
    if full_I:
        np.save(path.with_name(path.stem + "_I.npy"), state.I)
    return path

