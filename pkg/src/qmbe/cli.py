"""Command-line front end: ``qmbe beta-scan|farfield|evolve --config FILE``.

Every scenario normalizes the device to internal units, computes, and writes
CSV files in the config's raw units, each with a JSON sidecar holding the
fully resolved configuration. Feeding a sidecar back through ``--config``
reproduces the run byte for byte.
"""

from __future__ import annotations

import argparse
import copy
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from . import dynamics as dyn
from . import spectral
from .params import (
    DEMO_PARAMS,
    DENSITY_DIM,
    ConfigError,
    DeviceParams,
    NumericsConfig,
    PumpProfile,
    normalize,
    read_config_file,
    tomllib,
)

log = logging.getLogger("qmbe")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

DEFAULT_FRACTIONS = [0.05, 0.1, 0.15, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99]

SCENARIO_DEFAULTS: dict[str, dict[str, Any]] = {
    "beta_scan": {
        # omega and Omega_f in units of Gamma + kappa
        "omega": [0.0, 0.5, 1.0],
        "Omega_f_min": 0.0,
        "Omega_f_max": 5.0,
        "n_points": 200,
    },
    "farfield": {
        "fractions": DEFAULT_FRACTIONS,
        "n_angles": 2401,
        "theta_max_deg": 30.0,
    },
    "evolve": {
        "initial_density": 1.0,
        "snapshot_every": 0,
        "diag_every": 1,
        "full_I": False,
        "check_cutoff": True,
    },
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(cfg: dict, overrides: Iterable[str]) -> dict:
    cfg = copy.deepcopy(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = cfg
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-table")
        node[parts[-1]] = _parse_value(text.strip())
    return cfg


def resolve_config(raw: dict) -> dict:
    """Fill defaults and validate every section; returns a plain JSON-able dict."""
    known = {"device", "numerics", *SCENARIO_DEFAULTS}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")

    device = DEMO_PARAMS.to_dict()
    if "device" in raw:
        # an explicit device table replaces the demo one entirely
        device = DeviceParams.from_dict(raw["device"]).to_dict()
    numerics = NumericsConfig.from_dict(raw.get("numerics", {})).to_dict()

    out = {"device": device, "numerics": numerics}
    for name, defaults in SCENARIO_DEFAULTS.items():
        section = raw.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a table")
        extra = set(section) - set(defaults)
        if extra:
            raise ConfigError(f"unknown key(s) in [{name}]: {sorted(extra)}")
        merged = {**defaults, **section}
        if name == "evolve":
            init = merged["initial_density"]
            merged["initial_density"] = dataclasses.asdict(PumpProfile.from_config(init))
        out[name] = merged
    return out


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

class OutputDir:
    """Creates the output directory and refuses to clobber files unless forced."""

    def __init__(self, path: Path, cfg: dict, scenario: str, force: bool):
        self.path = Path(path)
        self.cfg = cfg
        self.scenario = scenario
        self.force = force
        self.path.mkdir(parents=True, exist_ok=True)
        self.provenance = {
            "package": "qmbe",
            "version": __version__,
            "scenario": scenario,
            "config_sha256": config_hash(cfg),
        }

    def guard(self, names: Iterable[str]) -> None:
        if self.force:
            return
        clash = sorted(n for n in names if (self.path / n).exists()
                       or (self.path / (n + ".json")).exists())
        if clash:
            raise ConfigError(f"output exists in {self.path}: {clash[0]} "
                              f"(use --force to overwrite)")

    def guard_glob(self, patterns: Iterable[str]) -> None:
        if self.force:
            return
        for pat in patterns:
            hits = sorted(self.path.glob(pat))
            if hits:
                raise ConfigError(f"output exists in {self.path}: {hits[0].name} "
                                  f"(use --force to overwrite)")

    def sidecar(self, path: Path) -> None:
        blob = {"config": self.cfg, "provenance": self.provenance}
        path.with_name(path.name + ".json").write_text(
            json.dumps(blob, indent=2, sort_keys=True) + "\n")

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[float]]) -> Path:
        path = self.path / name
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.sidecar(path)
        return path


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

def run_beta_scan(cfg: dict, out: OutputDir) -> list[Path]:
    sc = cfg["beta_scan"]
    omegas = [float(w) for w in sc["omega"]]
    lo, hi, n = float(sc["Omega_f_min"]), float(sc["Omega_f_max"]), int(sc["n_points"])
    if not omegas:
        raise ConfigError("beta_scan.omega is empty")
    if any(w < 0 for w in omegas):
        raise ConfigError("beta_scan.omega entries must be nonnegative")
    if lo < 0 or hi < lo:
        raise ConfigError(f"invalid Omega_f range [{lo}, {hi}]")
    if n < 1:
        raise ConfigError("beta_scan.n_points must be >= 1")
    if hi == lo:
        n = 1
    out.guard(["beta_scan.csv"])

    raw = DeviceParams.from_dict(cfg["device"])
    p = normalize(raw)
    lw_raw = raw.linewidth
    grid = np.linspace(lo, hi, n)
    rows = []
    for w in omegas:
        res = spectral.beta_analytic(w, grid, p)
        b = np.atleast_1d(res.beta)
        for Of, beta in zip(grid, b):
            rows.append((w * lw_raw, Of * lw_raw, beta, beta / res.beta0))
    return [out.write_csv("beta_scan.csv", ["omega", "Omega_f", "beta", "beta_over_beta0"], rows)]


def _fraction_tag(f: float) -> str:
    return f"{f:g}"


def run_farfield(cfg: dict, out: OutputDir) -> list[Path]:
    sc = cfg["farfield"]
    fractions = [float(f) for f in sc["fractions"]]
    if not fractions:
        raise ConfigError("farfield.fractions is empty")
    bad = [f for f in fractions if not 0 <= f < 1]
    if bad:
        raise ConfigError(f"farfield fractions must lie in [0, 1) (below threshold): {bad}")
    theta_max = float(sc["theta_max_deg"])
    if not 0 < theta_max <= spectral.PARAXIAL_LIMIT_DEG:
        raise ConfigError(f"theta_max_deg must be in (0, {spectral.PARAXIAL_LIMIT_DEG}]")
    n_angles = int(sc["n_angles"])
    if n_angles < 3:
        raise ConfigError("farfield.n_angles must be >= 3")
    names = [f"farfield_{_fraction_tag(f)}.csv" for f in fractions] + ["farfield_summary.csv"]
    out.guard(names)

    raw = DeviceParams.from_dict(cfg["device"])
    p = normalize(raw)
    Np = spectral.pinning_density(p)
    theta = np.linspace(-theta_max, theta_max, n_angles)
    # exact mirror symmetry, so even profiles come out bitwise even
    theta = 0.5 * (theta - theta[::-1])
    paths, summary = [], []
    for f, name in zip(fractions, names):
        res = spectral.farfield_profile(f * Np, p.T, p, theta)
        F = res.values / res.values.max()
        paths.append(out.write_csv(name, ["theta_deg", "intensity_normalized"], zip(theta, F)))
        peak, width = spectral.peak_metrics(theta, F)
        N_raw = p.scale.to_raw(f * Np, DENSITY_DIM)
        summary.append((f, N_raw, peak, width))
    paths.append(out.write_csv("farfield_summary.csv",
                               ["fraction", "N", "peak_deg", "fwhm_deg"], summary))
    return paths


def _raw_diag(d: dict, scale) -> list[float]:
    line_density = (0, -1)
    return [
        scale.to_raw(d["t"], (1, 0)),
        scale.to_raw(d["total_carriers"], line_density),
        scale.to_raw(d["trace_I"], line_density),
        scale.to_raw(d["total_excitation"], line_density),
        scale.to_raw(d["hermiticity_residual"], DENSITY_DIM),
    ]


def _write_snapshot(out: OutputDir, state: dyn.SimState, model: dyn.QMBEModel,
                    full_I: bool, tag: str = "") -> Path:
    """Snapshot in raw units (t, x, N, diag I)."""
    scale = model.p.scale
    raw_state = dyn.SimState(
        t=scale.to_raw(state.t, (1, 0)),
        N=scale.to_raw(state.N, DENSITY_DIM),
        C=state.C,
        I=scale.to_raw(state.I, DENSITY_DIM),
    )

    x = scale.to_raw(model.x, (0, 1))
    path = dyn.write_snapshot(raw_state, x, out.path, full_I=full_I, tag=tag)
    out.sidecar(path)
    return path


def run_evolve(cfg: dict, out: OutputDir) -> list[Path]:
    sc = cfg["evolve"]
    raw = DeviceParams.from_dict(cfg["device"])
    p = normalize(raw)
    num_raw = NumericsConfig.from_dict(cfg["numerics"])
    num = num_raw.rescaled(p.scale)
    limit = dyn.stability_limit(p, num)
    if num.dt > limit * (1 + 1e-12):
        bound = p.scale.to_raw(limit, (1, 0))
        raise ConfigError(f"dt = {num_raw.dt:g} exceeds the stability limit {bound:.6g}")
    init = PumpProfile.from_config(sc["initial_density"]).rescaled(
        p.scale, amplitude_dim=DENSITY_DIM)
    model = dyn.QMBEModel(p, num)
    N0 = init(model.x)
    if sc["check_cutoff"]:
        # pumping can lift N above its initial value; j/gamma bounds the uniform steady state
        n_max = float(N0.max())
        if p.gamma > 0:
            n_max = max(n_max, float(model.pump.max()) / p.gamma)
        dyn.check_k_cutoff(p, num, n_max)
    snap_every = int(sc["snapshot_every"])
    diag_every = max(1, int(sc["diag_every"]))
    full_I = bool(sc["full_I"])
    out.guard(["diagnostics.csv"])
    out.guard_glob(["snap_*.csv"])

    state = dyn.SimState.vacuum(N0, num.n_x, num.n_k)
    rows = [_raw_diag(dyn.diagnostics(state, model.dx), p.scale)]
    paths = []
    if snap_every:
        paths.append(_write_snapshot(out, state, model, full_I))

    def record(n, s):
        if n % diag_every == 0:
            rows.append(_raw_diag(dyn.diagnostics(s, model.dx), p.scale))
        if snap_every and n % snap_every == 0:
            paths.append(_write_snapshot(out, s, model, full_I))

    try:
        final = dyn.integrate(state, model, callback=record)
    except dyn.NumericalError as exc:
        _write_snapshot(out, exc.state, model, full_I, tag="lastgood")
        out.write_csv("diagnostics.csv", dyn.DIAGNOSTIC_COLUMNS, rows)
        raise
    if rows[-1][0] != p.scale.to_raw(final.t, (1, 0)):
        rows.append(_raw_diag(dyn.diagnostics(final, model.dx), p.scale))
    paths.append(out.write_csv("diagnostics.csv", dyn.DIAGNOSTIC_COLUMNS, rows))
    return paths


SCENARIOS = {
    "beta-scan": run_beta_scan,
    "farfield": run_farfield,
    "evolve": run_evolve,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qmbe", description=__doc__.splitlines()[0])
    ap.add_argument("scenario", choices=sorted(SCENARIOS))
    ap.add_argument("--config", required=True, help="TOML or JSON config (or a JSON sidecar)")
    ap.add_argument("--out", default=".", help="output directory (created if absent)")
    ap.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="KEY=VALUE", help="override a config entry, e.g. device.kappa=0.2")
    ap.add_argument("--force", action="store_true", help="overwrite existing outputs")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = apply_overrides(read_config_file(args.config), args.overrides)
        cfg = resolve_config(raw)
        out = OutputDir(Path(args.out), cfg, args.scenario, args.force)
        paths = SCENARIOS[args.scenario](cfg, out)
    except (ConfigError, spectral.CannotLaseError, spectral.AboveThresholdError) as exc:
        print(f"qmbe: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (dyn.NumericalError, spectral.QuadratureError, FloatingPointError) as exc:
        print(f"qmbe: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for path in paths:
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
