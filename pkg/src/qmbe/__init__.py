"""Quantum Maxwell-Bloch equations for broad-area quantum-well lasers."""

__version__ = "0.1.0"

from .params import (  # noqa: E402
    DEMO_PARAMS,
    ConfigError,
    DeviceParams,
    NumericsConfig,
    PumpProfile,
    denormalize,
    effective_mass_M,
    mode_density,
    normalize,
)
from .spectral import (  # noqa: E402
    beta_analytic,
    beta_numeric_oracle,
    farfield_profile,
    modal_gain,
    pinning_density,
    spontaneous_spectrum,
)

__all__ = [
    "DEMO_PARAMS",
    "ConfigError",
    "DeviceParams",
    "NumericsConfig",
    "PumpProfile",
    "beta_analytic",
    "beta_numeric_oracle",
    "denormalize",
    "effective_mass_M",
    "farfield_profile",
    "modal_gain",
    "mode_density",
    "normalize",
    "pinning_density",
    "spontaneous_spectrum",
]
