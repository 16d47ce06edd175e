import csv
import json
from pathlib import Path

import numpy as np
import pytest

from qmbe import cli
from qmbe import dynamics as dyn
from qmbe.params import DEMO_PARAMS

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
DEMO = str(CONFIGS / "demo.toml")
CLOSED = str(CONFIGS / "closed_system.toml")


def read_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_beta_scan_outputs(tmp_path):
    assert cli.main(["beta-scan", "--config", DEMO, "--out", str(tmp_path)]) == 0
    header, data = read_rows(tmp_path / "beta_scan.csv")
    assert header == ["omega", "Omega_f", "beta", "beta_over_beta0"]
    assert data.shape == (600, 4)
    assert np.all(data[:, 3] <= 1.0)
    assert np.all(data[:, 3] > 0)
    side = json.loads((tmp_path / "beta_scan.csv.json").read_text())
    assert side["provenance"]["scenario"] == "beta-scan"
    assert side["config"]["device"]["g0"] == DEMO_PARAMS.g0


def test_beta_scan_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["beta-scan", "--config", DEMO, "--out", str(tmp_path / d)]) == 0
    assert (tmp_path / "a/beta_scan.csv").read_bytes() == (tmp_path / "b/beta_scan.csv").read_bytes()


def test_beta_scan_degenerate_range(tmp_path):
    rc = cli.main(["beta-scan", "--config", DEMO, "--out", str(tmp_path),
                   "--set", "beta_scan.Omega_f_min=0", "--set", "beta_scan.Omega_f_max=0"])
    assert rc == 0
    _, data = read_rows(tmp_path / "beta_scan.csv")
    assert data.shape == (3, 4)
    np.testing.assert_array_equal(data[:, 1], 0.0)
    assert data[0, 3] == 1.0


def test_beta_scan_reports_raw_units(tmp_path):
    # doubling every rate doubles the linewidth, hence the raw frequency axis
    sets = [f"device.{k}={2 * getattr(DEMO_PARAMS, k)}"
            for k in ("gamma", "Gamma", "kappa", "omega0")]
    sets += ["device.m_e=2.0", "device.m_h=11.25"]
    args = ["beta-scan", "--config", DEMO, "--set", "beta_scan.n_points=5"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")] + sum((["--set", s] for s in sets), [])) == 0
    _, a = read_rows(tmp_path / "a/beta_scan.csv")
    _, b = read_rows(tmp_path / "b/beta_scan.csv")
    np.testing.assert_allclose(b[:, :2], 2 * a[:, :2], rtol=1e-12)
    np.testing.assert_allclose(b[:, 3], a[:, 3], rtol=1e-12)


def test_farfield_outputs(tmp_path):
    rc = cli.main(["farfield", "--config", DEMO, "--out", str(tmp_path),
                   "--set", "farfield.fractions=[0.05, 0.5, 0.99]",
                   "--set", "farfield.n_angles=601"])
    assert rc == 0
    for f in ("0.05", "0.5", "0.99"):
        header, data = read_rows(tmp_path / f"farfield_{f}.csv")
        assert header == ["theta_deg", "intensity_normalized"]
        assert data.shape == (601, 2)
        assert data[:, 1].max() == 1.0
        np.testing.assert_array_equal(data[:, 1], data[::-1, 1])
    header, summary = read_rows(tmp_path / "farfield_summary.csv")
    assert header == ["fraction", "N", "peak_deg", "fwhm_deg"]
    assert summary[0, 2] == 0.0
    assert 10 <= summary[2, 2] <= 20


@pytest.mark.parametrize("value", ["[]", "[0.5, 1.0]", "[-0.1]"])
def test_farfield_rejects_bad_fractions(tmp_path, value, capsys):
    rc = cli.main(["farfield", "--config", DEMO, "--out", str(tmp_path),
                   "--set", f"farfield.fractions={value}"])
    assert rc == cli.EXIT_CONFIG
    assert "fractions" in capsys.readouterr().err
    assert not list(tmp_path.glob("*.csv"))


def test_cannot_lase_is_a_config_error(tmp_path, capsys):
    rc = cli.main(["farfield", "--config", DEMO, "--out", str(tmp_path),
                   "--set", "device.g0=0.2", "--set", "farfield.fractions=[0.5]"])
    assert rc == cli.EXIT_CONFIG
    assert "cannot lase" in capsys.readouterr().err


def test_closed_evolve_conserves_excitation(tmp_path):
    rc = cli.main(["evolve", "--config", CLOSED, "--out", str(tmp_path),
                   "--set", "numerics.n_x=8", "--set", "numerics.n_k=8",
                   "--set", "numerics.t_end=4.0", "--set", "evolve.diag_every=1"])
    assert rc == 0
    header, d = read_rows(tmp_path / "diagnostics.csv")
    assert header == dyn.DIAGNOSTIC_COLUMNS
    total = d[:, 3]
    assert np.max(np.abs(total - total[0])) <= 1e-6 * total[0]
    assert d[-1, 2] > 0
    assert d[-1, 0] == 4.0
    np.testing.assert_array_equal(d[:, 4], 0.0)


def test_pumped_evolve_builds_up_light(tmp_path):
    rc = cli.main(["evolve", "--config", DEMO, "--out", str(tmp_path),
                   "--set", "numerics.n_x=8", "--set", "numerics.n_k=8",
                   "--set", "numerics.dx=5.2", "--set", "numerics.t_end=3.0",
                   "--set", "evolve.snapshot_every=50", "--set", "evolve.full_I=true",
                   "--set", "evolve.initial_density=1.5"])
    assert rc == 0
    _, d = read_rows(tmp_path / "diagnostics.csv")
    # spontaneous emission from the inverted band fills the cavity
    assert d[0, 2] == 0.0
    assert np.all(np.diff(d[:, 2]) > 0)
    snaps = sorted(tmp_path.glob("snap_*.csv"))
    assert [s.name for s in snaps] == ["snap_0.000000.csv", "snap_1.500000.csv",
                                       "snap_3.000000.csv"]
    assert np.load(tmp_path / "snap_3.000000_I.npy").shape == (8, 8)


def test_evolve_refuses_unstable_step(tmp_path, capsys):
    rc = cli.main(["evolve", "--config", DEMO, "--out", str(tmp_path),
                   "--set", "numerics.dt=0.5"])
    assert rc == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "stability limit" in err
    from qmbe.params import NumericsConfig
    num = NumericsConfig(n_x=32, n_k=24, dx=1.3, k_max=9.8)
    assert f"{dyn.stability_limit(DEMO_PARAMS, num):.6g}" in err


def test_evolve_checks_k_cutoff(tmp_path, capsys):
    rc = cli.main(["evolve", "--config", DEMO, "--out", str(tmp_path),
                   "--set", "numerics.k_max=3.0"])
    assert rc == cli.EXIT_CONFIG
    assert "k_max" in capsys.readouterr().err


def test_numerical_blowup_exits_3_with_last_good_snapshot(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(dyn, "stability_limit", lambda p, n: np.inf)
    with np.errstate(all="ignore"):
        rc = cli.main(["evolve", "--config", DEMO, "--out", str(tmp_path),
                       "--set", "numerics.n_x=8", "--set", "numerics.n_k=8",
                       "--set", "numerics.dt=50.0", "--set", "numerics.t_end=5000.0",
                       "--set", "evolve.initial_density=3.0"])
    assert rc == cli.EXIT_NUMERICAL
    assert "non-finite" in capsys.readouterr().err
    last = list(tmp_path.glob("snap_*_lastgood.csv"))
    assert len(last) == 1
    _, snap = read_rows(last[0])
    assert np.all(np.isfinite(snap))
    assert (tmp_path / "diagnostics.csv").exists()


def test_refuses_to_overwrite_without_force(tmp_path, capsys):
    args = ["beta-scan", "--config", DEMO, "--out", str(tmp_path), "--set", "beta_scan.n_points=3"]
    assert cli.main(args) == 0
    before = (tmp_path / "beta_scan.csv").read_bytes()
    assert cli.main(args + ["--set", "beta_scan.omega=[2.0]"]) == cli.EXIT_CONFIG
    assert "--force" in capsys.readouterr().err
    assert (tmp_path / "beta_scan.csv").read_bytes() == before
    assert cli.main(args + ["--set", "beta_scan.omega=[2.0]", "--force"]) == 0
    assert (tmp_path / "beta_scan.csv").read_bytes() != before


def test_sidecar_reproduces_run(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["farfield", "--config", DEMO, "--out", str(a),
                     "--set", "farfield.fractions=[0.25, 0.9]",
                     "--set", "farfield.n_angles=201", "--set", "device.kappa=0.25"]) == 0
    assert cli.main(["farfield", "--config", str(a / "farfield_0.9.csv.json"),
                     "--out", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_unknown_keys_are_config_errors(tmp_path):
    for bad in ("device.colour=1", "evolve.snapshots=3", "mystery.x=1"):
        rc = cli.main(["beta-scan", "--config", DEMO, "--out", str(tmp_path), "--set", bad])
        assert rc == cli.EXIT_CONFIG, bad
    assert cli.main(["beta-scan", "--config", DEMO, "--out", str(tmp_path),
                     "--set", "no-equals-sign"]) == cli.EXIT_CONFIG


def test_overrides_parse_toml_values():
    cfg = cli.apply_overrides({"a": {"b": 1}}, ["a.b=2.5", "a.c=[1, 2]", "d.e=word", "f=true"])
    assert cfg == {"a": {"b": 2.5, "c": [1, 2]}, "d": {"e": "word"}, "f": True}


def test_json_config_is_accepted(tmp_path):
    cfg = {"beta_scan": {"omega": [0.0], "n_points": 4}}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["beta-scan", "--config", str(path), "--out", str(tmp_path)]) == 0
    _, data = read_rows(tmp_path / "beta_scan.csv")
    assert data.shape == (4, 4)


def test_missing_config_file(tmp_path):
    rc = cli.main(["beta-scan", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)])
    assert rc == cli.EXIT_CONFIG
