import json
import os

import numpy as np
import pytest

from rkhsode.cli import main
from rkhsode.data import load_dataset


def run(args):
    return main([str(a) for a in args])


@pytest.fixture
def sim_file(tmp_path):
    out = tmp_path / "train.csv"
    code = run(
        ["simulate", "--system", "fhn", "--n-traj", 3, "--n-obs", 21, "--dt", 0.1,
         "--substeps", 10, "--out", out]
    )
    assert code == 0
    return out


def test_simulate_writes_csv_and_manifest(sim_file, tmp_path):
    ds = load_dataset(sim_file)
    assert ds.n_trajectories == 3
    assert ds.trajectories[0].n_obs == 21
    manifest = json.loads((tmp_path / "train.manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert set(manifest) >= {"command", "config_hash", "seed", "inputs", "outputs",
                             "wall_clock_s", "version"}


def test_simulate_noiseless_identical_across_seeds(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(["simulate", "--system", "fhn", "--n-traj", 2, "--n-obs", 11, "--dt", 0.1,
                "--substeps", 5, "--sigma", 0, "--seed", 1, "--out", a]) == 0
    assert run(["simulate", "--system", "fhn", "--n-traj", 2, "--n-obs", 11, "--dt", 0.1,
                "--substeps", 5, "--sigma", 0, "--seed", 2, "--out", b]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_lorenz96_six_columns(tmp_path):
    out = tmp_path / "l96.csv"
    assert run(["simulate", "--system", "lorenz96", "--dim", 6, "--forcing", 8,
                "--n-traj", 1, "--n-obs", 5, "--dt", 0.01, "--substeps", 5, "--out", out]) == 0
    header = out.read_text().splitlines()[0]
    assert header == "traj_id,t,y1,y2,y3,y4,y5,y6"


def _config(tmp_path, **overrides):
    cfg = {
        "h": 0.1,
        "rho": 0.4,
        "lambda": 1e-6,
        "gamma0": 1.0,
        "gamma_max": 1e8,
        "max_iters": 30,
        "early_stop_eps": 1e-6,
        "kernel": {
            "family": "fourier_features",
            "params": {"input_dim": 2, "lengthscales": [1.0, 1.0]},
            "n_features": 32,
            "seed": 5,
        },
        "seed": 0,
        "init": "gradient_matching",
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_fit_and_predict_pipeline(sim_file, tmp_path):
    cfg = _config(tmp_path)
    fit_dir = tmp_path / "fit"
    assert run(["fit", "--data", sim_file, "--config", cfg, "--out", fit_dir]) == 0
    assert (fit_dir / "field.json").exists()
    assert (fit_dir / "traces.csv").exists()
    assert (fit_dir / "manifest.json").exists()
    latents = sorted(fit_dir.glob("latents_*.csv"))
    assert len(latents) == 3
    header = (fit_dir / "traces.csv").read_text().splitlines()[0]
    assert header == "iter,data_loss,constraint_residual,gamma,field_change"

    pred = tmp_path / "pred.csv"
    assert run(["predict", "--field", fit_dir / "field.json", "--x0", "0.5,0.5",
                "--t0", 0, "--horizon", 1.0, "--h", 0.1, "--out", pred]) == 0
    rows = pred.read_text().splitlines()
    assert rows[0] == "traj_id,t,y1,y2"
    assert len(rows) == 12


def test_fit_max_iters_zero_dumps_init(sim_file, tmp_path):
    cfg = _config(tmp_path, max_iters=0)
    fit_dir = tmp_path / "fit0"
    assert run(["fit", "--data", sim_file, "--config", cfg, "--out", fit_dir]) == 0
    traces = (fit_dir / "traces.csv").read_text().splitlines()
    assert len(traces) == 1  # header only


def test_fit_missing_config_key_exits_2(sim_file, tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"h": 0.1}))
    assert run(["fit", "--data", sim_file, "--config", cfg, "--out", tmp_path / "x"]) == 2
    assert "kernel" in capsys.readouterr().err


def test_fit_missing_data_file_exits_4(tmp_path):
    cfg = _config(tmp_path)
    assert run(["fit", "--data", tmp_path / "absent.csv", "--config", cfg,
                "--out", tmp_path / "x"]) == 4


def test_fit_malformed_csv_exits_4(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("traj_id,t,y1\nA,0.0,NaN\n")
    cfg = _config(tmp_path, kernel={
        "family": "fourier_features",
        "params": {"input_dim": 1, "lengthscales": [1.0]},
        "n_features": 8,
        "seed": 0,
    })
    assert run(["fit", "--data", bad, "--config", cfg, "--out", tmp_path / "x"]) == 4


def test_predict_zero_horizon_single_row(tmp_path):
    field = tmp_path / "field.json"
    field.write_text(json.dumps({"form": "zero", "dim": 2}))
    out = tmp_path / "pred.csv"
    assert run(["predict", "--field", field, "--x0", "1.0,2.0", "--horizon", 0,
                "--h", 0.1, "--out", out]) == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 2
    assert rows[1].startswith("pred,0.0,1.0,2.0")


def test_predict_zero_field_constant_trajectory(tmp_path):
    field = tmp_path / "field.json"
    field.write_text(json.dumps({"form": "zero", "dim": 1}))
    out = tmp_path / "pred.csv"
    assert run(["predict", "--field", field, "--x0", "7.0", "--horizon", 0.5,
                "--h", 0.1, "--out", out]) == 0
    vals = [line.split(",")[2] for line in out.read_text().splitlines()[1:]]
    assert all(v == "7.0" for v in vals)


def test_fit_with_validation_split(tmp_path):
    out = tmp_path / "v.csv"
    assert run(["simulate", "--system", "fhn", "--n-traj", 5, "--n-obs", 15, "--dt", 0.1,
                "--substeps", 5, "--sigma", 0.1, "--out", out]) == 0
    cfg = _config(tmp_path, max_iters=15)
    fit_dir = tmp_path / "vfit"
    assert run(["fit", "--data", out, "--config", cfg, "--validate", 0.2,
                "--out", fit_dir]) == 0
    chosen = json.loads((fit_dir / "config.json").read_text())
    assert chosen["lambda"] in (1e-8, 1e-6, 1e-4)
    assert chosen["rho"] in (0.05, 0.1, 0.2)


def test_benchmark_tiny_smoke(tmp_path):
    out = tmp_path / "bench"
    assert run(["benchmark", "--protocol", "fhn", "--sigmas", "0.2", "--replicates", 1,
                "--n-train", 3, "--n-test", 2, "--n-obs", 31, "--n-features", 16,
                "--max-iters", 25, "--out", out]) == 0
    rows = (out / "sweep.csv").read_text().splitlines()
    assert rows[0] == "system,sigma,replicate,err_mean,err_sem,runtime_s"
    assert len(rows) == 2
    payload = json.loads((out / "sweep.json").read_text())
    assert payload["system"] == "fhn"
    assert (out / "manifest.json").exists()


def test_convergence_tiny_smoke(tmp_path):
    out = tmp_path / "conv"
    assert run(["convergence", "--n-features", 16, "--replicates", 1, "--full-m", 40,
                "--min-m", 10, "--out", out]) == 0
    payload = json.loads((out / "convergence.json").read_text())
    assert payload["sample_counts"] == [10, 20, 40]
    assert np.isfinite(payload["slope"])


def test_cli_deterministic_rerun_bytes(tmp_path):
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name / "t.csv"
        os.makedirs(out.parent)
        assert run(["simulate", "--system", "lorenz63", "--n-traj", 2, "--n-obs", 11,
                    "--dt", 0.01, "--substeps", 5, "--sigma", 0.5, "--seed", 9,
                    "--out", out]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["fit"])  # missing required arguments
    assert exc.value.code == 2
