"""Device and numerical parameters, unit normalization, derived constants.

Unit convention
---------------
hbar = k_B = 1 throughout, so energies (temperature, chemical potentials)
are frequencies and an effective mass ``m`` carries units of
time/length**2 (``hbar/m`` is a diffusion-like constant).

The lateral problem is one-dimensional, but the quantum well is a sheet:
densities ``N`` are sheet densities (1/length**2) and the field-matter
coupling ``g0*sqrt(nu0)`` carries units of frequency*length.
"""

from __future__ import annotations

import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

HBAR = 1.0
K_B = 1.0


class ConfigError(ValueError):
    """Invalid parameter set or configuration file."""


# (time exponent, length exponent) of each dimensional field.
_DIMENSIONS: dict[str, tuple[int, int]] = {
    "g0": (-1, 1),
    "nu0": (0, 0),
    "gamma": (-1, 0),
    "Gamma": (-1, 0),
    "kappa": (-1, 0),
    "D_amb": (-1, 2),
    "m_e": (1, -2),
    "m_h": (1, -2),
    "omega0": (-1, 0),
    "k0": (0, -1),
    "W": (0, 1),
    "L": (0, 1),
    "sigma": (0, -1),
    "eps_r": (0, 0),
    "T": (-1, 0),
    "c": (-1, 1),
}
DENSITY_DIM = (0, -2)
CURRENT_DIM = (-1, -2)


@dataclass(frozen=True)
class UnitScale:
    """Size of the internal time and length units, in raw units."""

    time: float = 1.0
    length: float = 1.0

    def to_internal(self, value, dim: tuple[int, int]):
        a, b = dim
        return value / (self.time**a * self.length**b)

    def to_raw(self, value, dim: tuple[int, int]):
        a, b = dim
        return value * (self.time**a * self.length**b)


@dataclass(frozen=True)
class PumpProfile:
    """Lateral profile, used for the injection current density j(x).

    ``kind`` is one of ``uniform``, ``gaussian`` or ``tophat``; ``width`` is
    the Gaussian standard deviation or the full stripe width. Initial carrier
    densities reuse the same shapes with ``amplitude_dim=DENSITY_DIM``.
    """

    kind: str = "uniform"
    amplitude: float = 0.0
    center: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian", "tophat"):
            raise ConfigError(f"unknown pump profile kind {self.kind!r}")
        if not self.amplitude >= 0:
            raise ConfigError("pump amplitude must be nonnegative")
        if not self.width > 0:
            raise ConfigError("pump width must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            return np.full_like(x, self.amplitude)
        if self.kind == "gaussian":
            return self.amplitude * np.exp(-0.5 * ((x - self.center) / self.width) ** 2)
        return np.where(np.abs(x - self.center) <= 0.5 * self.width, self.amplitude, 0.0)

    def rescaled(self, scale: UnitScale, inverse: bool = False,
                 amplitude_dim: tuple[int, int] = CURRENT_DIM) -> "PumpProfile":
        conv = scale.to_raw if inverse else scale.to_internal
        return dataclasses.replace(
            self,
            amplitude=conv(self.amplitude, amplitude_dim),
            center=conv(self.center, (0, 1)),
            width=conv(self.width, (0, 1)),
        )

    @classmethod
    def from_config(cls, value) -> "PumpProfile":
        if isinstance(value, PumpProfile):
            return value
        if isinstance(value, (int, float)):
            return cls(amplitude=float(value))
        if isinstance(value, Mapping):
            unknown = set(value) - {f.name for f in dataclasses.fields(cls)}
            if unknown:
                raise ConfigError(f"unknown j_profile keys: {sorted(unknown)}")
            return cls(**value)
        raise ConfigError(f"cannot interpret j_profile={value!r}")


@dataclass(frozen=True)
class DeviceParams:
    """Physical constants and device geometry.

    Rates are angular frequencies. ``c`` is the vacuum speed of light in the
    chosen unit system and only enters the light-mode density. ``scale``
    records the internal units relative to the raw inputs; it is the
    identity for raw parameters.
    """

    g0: float
    nu0: float
    gamma: float
    Gamma: float
    kappa: float
    D_amb: float
    m_e: float
    m_h: float
    omega0: float
    k0: float
    W: float
    L: float
    sigma: float
    eps_r: float
    T: float = 0.0
    j_profile: PumpProfile = field(default_factory=PumpProfile)
    c: float = 1.0
    scale: UnitScale = field(default_factory=UnitScale)

    def __post_init__(self):
        if not isinstance(self.j_profile, PumpProfile):
            object.__setattr__(self, "j_profile", PumpProfile.from_config(self.j_profile))
        for name in ("g0", "nu0", "Gamma", "m_e", "m_h", "omega0", "k0",
                     "W", "L", "sigma", "eps_r", "c"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive and finite, got {v!r}")
        # zero allowed: closed-system runs switch these channels off
        for name in ("gamma", "kappa", "D_amb"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be nonnegative and finite, got {v!r}")
        if not (math.isfinite(self.T) and self.T >= 0):
            raise ConfigError(f"T must be nonnegative, got {self.T!r}")

    @property
    def linewidth(self) -> float:
        """Gamma + kappa, the width of every mode Lorentzian."""
        return self.Gamma + self.kappa

    @property
    def coupling(self) -> float:
        return self.g0 * math.sqrt(self.nu0)

    @property
    def paraxial(self) -> float:
        """omega0 / (2 k0^2), the diffraction coefficient."""
        return self.omega0 / (2.0 * self.k0**2)

    def replace(self, **changes) -> "DeviceParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = {name: getattr(self, name) for name in _DIMENSIONS}
        d["j_profile"] = dataclasses.asdict(self.j_profile)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "DeviceParams":
        allowed = set(_DIMENSIONS) | {"j_profile"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown device parameter(s): {sorted(unknown)}")
        missing = {f.name for f in dataclasses.fields(cls)
                   if f.default is dataclasses.MISSING
                   and f.default_factory is dataclasses.MISSING} - set(d)
        if missing:
            raise ConfigError(f"missing device parameter(s): {sorted(missing)}")
        kwargs = {k: float(v) for k, v in d.items() if k != "j_profile"}
        if "j_profile" in d:
            kwargs["j_profile"] = PumpProfile.from_config(d["j_profile"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _convert(p: DeviceParams, scale: UnitScale, inverse: bool) -> dict[str, Any]:
    conv = scale.to_raw if inverse else scale.to_internal
    values = {name: conv(getattr(p, name), dim) for name, dim in _DIMENSIONS.items()}
    values["j_profile"] = p.j_profile.rescaled(scale, inverse=inverse)
    return values


def normalize(p: DeviceParams) -> DeviceParams:
    """Rescale to units where Gamma + kappa = 1 and omega0/(2 k0^2) = 1.

    The returned parameters carry the cumulative unit scale relative to the
    raw inputs, so :func:`denormalize` recovers them.
    """
    if p.linewidth <= 0:
        raise ConfigError("Gamma + kappa must be positive")
    t_unit = 1.0 / p.linewidth
    l_unit = math.sqrt(p.omega0 * t_unit) / (p.k0 * math.sqrt(2.0))
    step = UnitScale(time=t_unit, length=l_unit)
    values = _convert(p, step, inverse=False)
    total = UnitScale(time=p.scale.time * t_unit, length=p.scale.length * l_unit)
    return DeviceParams(**values, scale=total)


def denormalize(p: DeviceParams) -> DeviceParams:
    values = _convert(p, p.scale, inverse=True)
    return DeviceParams(**values)


def effective_mass_M(p: DeviceParams) -> float:
    """Inverse reduced mass M = (m_e + m_h) / (m_e m_h)."""
    return 1.0 / p.m_e + 1.0 / p.m_h


def mode_density(p: DeviceParams) -> float:
    """Density of light-field modes at the band edge, omega0^2 eps_r^1.5 / (pi^2 c^3)."""
    return p.omega0**2 * p.eps_r**1.5 / (math.pi**2 * p.c**3)


@dataclass(frozen=True)
class NumericsConfig:
    """Grid, lattice and time-stepping controls for the dynamics.

    ``k_max`` is the radial cutoff of the k lattice. ``integrator`` is
    ``rk4`` or ``ifrk4`` (integrating factor on the dipole dephasing).
    ``freeze_carriers`` holds N(x) fixed, which turns the correlation
    dynamics into a linear system used for spectral cross-checks.
    """

    n_x: int = 32
    n_k: int = 24
    dx: float = 1.0
    k_max: float = 4.0
    dt: float = 0.01
    t_end: float = 10.0
    rtol: float = 1e-10
    boundary: str = "periodic"
    integrator: str = "rk4"
    freeze_carriers: bool = False

    def __post_init__(self):
        n = self.n_x
        if not (isinstance(n, int) and n >= 2 and n & (n - 1) == 0):
            raise ConfigError(f"n_x must be a power of two, got {n!r}")
        if not (isinstance(self.n_k, int) and self.n_k >= 1):
            raise ConfigError(f"n_k must be a positive integer, got {self.n_k!r}")
        for name in ("dx", "k_max", "dt", "t_end", "rtol"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be positive, got {v!r}")
        if self.boundary not in ("periodic", "dirichlet"):
            raise ConfigError(f"boundary must be periodic or dirichlet, got {self.boundary!r}")
        if self.integrator not in ("rk4", "ifrk4"):
            raise ConfigError(f"integrator must be rk4 or ifrk4, got {self.integrator!r}")

    @property
    def x(self) -> np.ndarray:
        return self.dx * np.arange(self.n_x)

    @property
    def length(self) -> float:
        return self.n_x * self.dx

    def replace(self, **changes) -> "NumericsConfig":
        return dataclasses.replace(self, **changes)

    def rescaled(self, scale: UnitScale, inverse: bool = False) -> "NumericsConfig":
        conv = scale.to_raw if inverse else scale.to_internal
        return self.replace(
            dx=conv(self.dx, (0, 1)),
            k_max=conv(self.k_max, (0, -1)),
            dt=conv(self.dt, (1, 0)),
            t_end=conv(self.t_end, (1, 0)),
        )

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "NumericsConfig":
        names = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(d) - set(names)
        if unknown:
            raise ConfigError(f"unknown numerics key(s): {sorted(unknown)}")
        kwargs = {}
        for k, v in d.items():
            if k in ("n_x", "n_k"):
                if float(v) != int(v):
                    raise ConfigError(f"{k} must be an integer")
                v = int(v)
            elif k in ("boundary", "integrator"):
                v = str(v)
            elif k == "freeze_carriers":
                v = bool(v)
            else:
                v = float(v)
            kwargs[k] = v
        return cls(**kwargs)


# Demo device in internal units (Gamma + kappa = 1, omega0/(2 k0^2) = 1).
# At T = 0 its far-field maxima sit between 11 and 17 degrees from 0.5 N_p up
# to threshold; the profile is single-peaked on axis at 0.05 N_p. These
# qualitative features only hold for g0^2 nu0 / (2 pi M kappa) near 0.5.
DEMO_PARAMS = DeviceParams(
    g0=0.52,
    nu0=1.0,
    gamma=0.05,
    Gamma=0.7,
    kappa=0.3,
    D_amb=0.5,
    m_e=4.0,
    m_h=22.5,
    omega0=50.0,
    k0=5.0,
    W=10.0,
    L=100.0,
    sigma=1.0,
    eps_r=12.25,
    T=0.0,
)


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Parse a TOML or JSON file into a plain dict.

    JSON sidecars written next to outputs are accepted too: their
    ``config`` entry is returned.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a table")
    if "provenance" in data and "config" in data:
        data = data["config"]
    return data
