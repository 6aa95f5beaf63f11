import json
import subprocess
import sys

import numpy as np
import pytest

from heatstab import pipeline
from heatstab.cli import main
from heatstab.config import DEFAULTS, SCHEMA, load_config
from heatstab.errors import ConfigInvalid
from heatstab.gains import feedback_kernel
from heatstab.grid import uniform_grid


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def test_spectrum(tmp_path):
    assert main(["spectrum", "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "spectrum.csv")
    assert header == ["k", "beta", "delta", "lambda_even", "lambda_odd", "C2", "kappa"]
    cfg = load_config()
    sysm = pipeline.spectral_system(cfg)
    np.testing.assert_array_equal(data[:, 1], sysm.beta)
    np.testing.assert_array_equal(data[:, 5], sysm.C2)


def test_kernel_round_trip(tmp_path):
    assert main(["kernel", "--out", str(tmp_path)]) == 0
    d = pipeline.design(load_config())
    header, data = read_csv(tmp_path / "kernel.csv")
    assert header == ["x", "omega"]
    np.testing.assert_array_equal(data[:, 1], feedback_kernel(d.gains, uniform_grid(400)))
    gains = json.loads((tmp_path / "gains.json").read_text())
    np.testing.assert_array_equal(gains["A"], d.gains.A)
    np.testing.assert_array_equal(gains["weights"], d.gains.weights)
    assert gains["gammas"] == [25.0, 35.0]
    assert gains["cond_sum_B"] == d.gains.cond


def test_simulate_closed_loop(tmp_path):
    assert main(["simulate", "--out", str(tmp_path), "--set", "snapshots=true",
                 "--set", "M=100", "--set", "T=2.0"]) == 0
    header, traj = read_csv(tmp_path / "trajectory.csv")
    assert header == ["t", "l2norm"]
    rep = json.loads((tmp_path / "decay_report.json").read_text())
    assert rep["verdict"] == "decays_at_target" and rep["closed_loop"]
    header, snaps = read_csv(tmp_path / "snapshots.csv")
    assert header == ["t", "x", "y"]
    assert snaps.shape == (len(traj) * 101, 3)


def test_simulate_blowup_exits_zero(tmp_path):
    code = main(["simulate", "--out", str(tmp_path), "--set", "controller=false",
                 "--set", 'nonlinearity.kind="power"', "--set", "initial_data.params.amplitude=5"])
    assert code == 0
    rep = json.loads((tmp_path / "decay_report.json").read_text())
    assert rep["verdict"] == "blowup" and rep["fitted_rate"] is None


def test_bad_alpha_exit_one(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path), "--set", "alpha=-1"]) == 1
    assert "alpha" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"alpha": 1.5, "c": 5.0, "rho": 2.0, "gamma_spacnig": 3}))
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "gamma_spacnig" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["spectrum", "--config", str(tmp_path / "nope.json")]) == 1


def test_override_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"alpha": 2.0, "c": 3.0, "rho": 1.0, "M": 300}))
    loaded = load_config(cfg)
    assert (loaded.alpha, loaded.c, loaded.M) == (2.0, 3.0, 300)
    over = load_config(cfg, ["alpha=0.5", "initial_data.params.k=2"], seed=7)
    assert over.alpha == 0.5 and over.c == 3.0
    assert over.initial_data["params"]["k"] == 2 and over.seed == 7
    # later flags win over earlier ones
    assert load_config(cfg, ["M=10", "M=20"]).M == 20


def test_config_validation_names_key():
    cases = {"dt=-1": "dt", "theta=2": "theta", "nonlinearity.kind=\"cubic\"": "nonlinearity.kind",
             "initial_data.foo=1": "initial_data.foo", "M=4": "M", "mode=\"plot\"": "mode"}
    for flag, key in cases.items():
        with pytest.raises(ConfigInvalid) as exc:
            load_config(overrides=[flag])
        assert exc.value.key == key
    with pytest.raises(ConfigInvalid):
        load_config(overrides=["novalue"])


def test_shipped_defaults_match_schema():
    assert set(DEFAULTS) == set(SCHEMA["properties"])
    cfg = load_config()
    assert (cfg.alpha, cfg.c, cfg.rho) == (1.5, 5.0, 2.0)


def test_verify_exit_codes(tmp_path):
    assert main(["verify", "--out", str(tmp_path / "a"), "--seed", "3"]) == 0
    assert main(["verify", "--out", str(tmp_path / "b"), "--seed", "3"]) == 0
    a = (tmp_path / "a" / "suite_report.json").read_bytes()
    assert a == (tmp_path / "b" / "suite_report.json").read_bytes()
    # too few controlled modes for the target: lambda_2 = 4 caps the rate
    assert main(["verify", "--out", str(tmp_path / "c"), "--set", "rho=10",
                 "--set", "N_override=0"]) == 2


def test_mode_from_config(tmp_path):
    assert main(["--out", str(tmp_path), "--set", "mode=\"spectrum\""]) == 0
    assert (tmp_path / "spectrum.csv").exists()


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "heatstab.cli", "spectrum", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0
