import json
import math

import numpy as np
import pytest

from lscox.cli import UsageError, apply_overrides, cli_dispatch, config_hash

BASE_CONFIG = {
    "window": [1.0, 1.0],
    "nx": 10, "ny": 10,
    "margin_level": 0.5, "margin_class": 0.5,
    "level": {"rho": 0.5, "nu": 1.0, "mean": 0.0},
    "thresholds": [0.0],
    "sigma_eps": 0.1,
    "classes": [
        {"kind": "gaussian-field", "sigma": 1.0, "rho": 0.4, "mean": 5.0},
        {"kind": "constant", "mean": 4.0, "fixed": False},
    ],
    "fit": {"n_iter": 60, "burn_in": 20, "thinning": 4, "seed": 3},
}


def write_config(tmp_path, cfg=None, name="model.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg or BASE_CONFIG))
    return str(path)


# ---------------------------------------------------------------------------
# config plumbing

def test_apply_overrides():
    cfg = {"a": {"b": 1}, "keep": True}
    out = apply_overrides(cfg, ["a.b=2", "c=[1,2]", "name=plain", "new.x=0.5"])
    assert out["a"]["b"] == 2
    assert out["c"] == [1, 2]
    assert out["name"] == "plain"
    assert out["new"]["x"] == 0.5
    assert out["keep"] is True
    with pytest.raises(UsageError):
        apply_overrides({}, ["novalue"])


def test_config_hash_is_canonical():
    h1 = config_hash({"a": 1, "b": [2, 3]})
    h2 = config_hash({"b": [2, 3], "a": 1})
    assert h1 == h2
    assert len(h1) == 16
    assert int(h1, 16) >= 0
    assert config_hash({"a": 2, "b": [2, 3]}) != h1


# ---------------------------------------------------------------------------
# usage errors

def test_no_command_exits_1(capsys):
    assert cli_dispatch([]) == 1


def test_unknown_flag_exits_1(capsys):
    assert cli_dispatch(["simulate", "--no-such-flag"]) == 1


def test_unknown_preset_exits_1(tmp_path, capsys):
    code = cli_dispatch(["simulate", "--preset", "nope",
                         "--out", str(tmp_path / "x")])
    assert code == 1


def test_simulate_without_source_exits_1(tmp_path, capsys):
    assert cli_dispatch(["simulate", "--out", str(tmp_path / "x")]) == 1


def test_invalid_json_config_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code = cli_dispatch(["simulate", "--config", str(bad),
                         "--out", str(tmp_path / "x")])
    assert code == 1


def test_fit_without_data_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path)
    code = cli_dispatch(["fit", "--config", cfg,
                         "--out", str(tmp_path / "x")])
    assert code == 1


def test_envelope_source_conflicts_exit_1(tmp_path, capsys):
    cfg = write_config(tmp_path)
    data = tmp_path / "pts.csv"
    data.write_text("x,y\n0.5,0.5\n0.2,0.8\n")
    base = ["envelope", "--data", str(data), "--out", str(tmp_path / "x")]
    assert cli_dispatch(base) == 1
    assert cli_dispatch(base + ["--config", cfg, "--fit", str(tmp_path)]) == 1
    assert cli_dispatch(base + ["--config", cfg, "--sims", "10"]) == 1


# ---------------------------------------------------------------------------
# data errors

def test_missing_config_exits_2(tmp_path, capsys):
    code = cli_dispatch(["fit", "--config", str(tmp_path / "nope.json"),
                         "--counts", "whatever.csv",
                         "--out", str(tmp_path / "x")])
    assert code == 2


def test_missing_data_files_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert cli_dispatch(["fit", "--config", cfg,
                         "--data", str(tmp_path / "nope.csv"),
                         "--out", str(tmp_path / "x")]) == 2
    assert cli_dispatch(["fit", "--config", cfg,
                         "--counts", str(tmp_path / "nope.csv"),
                         "--out", str(tmp_path / "x")]) == 2
    assert cli_dispatch(["envelope", "--config", cfg,
                         "--data", str(tmp_path / "nope.csv"),
                         "--out", str(tmp_path / "x")]) == 2
    assert cli_dispatch(["summarize", "--fit", str(tmp_path / "empty"),
                         "--out", str(tmp_path / "x")]) == 2


# ---------------------------------------------------------------------------
# numerical failure

def test_overflowing_model_exits_3(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "window": [1.0, 1.0], "nx": 4, "ny": 4,
        "level": {"rho": 0.5},
        "thresholds": [],
        "classes": [{"kind": "constant", "mean": 80.0}],
    }, name="hot.json")
    code = cli_dispatch(["simulate", "--config", cfg,
                         "--out", str(tmp_path / "x")])
    assert code == 3


# ---------------------------------------------------------------------------
# simulate

def test_simulate_preset_deterministic(tmp_path, capsys):
    args = ["simulate", "--preset", "two-constant", "--nx", "12",
            "--ny", "12", "--seed", "7"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli_dispatch(args + ["--out", str(a)]) == 0
    assert cli_dispatch(args + ["--out", str(b)]) == 0
    for name in ("pattern.csv", "counts.csv", "gamma.csv",
                 "log_intensity.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()

    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 7
    assert manifest["config"]["preset"] == "two-constant"
    assert set(manifest["versions"]) == {"package", "python", "numpy",
                                         "scipy"}
    n_lines = len((a / "pattern.csv").read_text().strip().splitlines()) - 1
    assert manifest["n_points"] == n_lines
    # labels are reported one-based
    classes = np.loadtxt(a / "gamma.csv", delimiter=",", skiprows=1)[:, 2]
    assert classes.min() >= 1
    assert (a / "pattern.png").exists()


def test_simulate_set_override_changes_config(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "sim"
    code = cli_dispatch(["simulate", "--config", cfg, "--seed", "1",
                         "--set", "nx=8", "--set", "level.rho=0.45",
                         "--out", str(out)])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["nx"] == 8
    assert manifest["config"]["level"]["rho"] == 0.45
    rows = np.loadtxt(out / "counts.csv", delimiter=",", skiprows=1)
    assert rows.shape[0] == 8 * 10


def test_output_root_env_var(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("LSCOX_OUTPUT_ROOT", str(tmp_path / "root"))
    code = cli_dispatch(["simulate", "--preset", "two-constant",
                         "--nx", "8", "--ny", "8", "--seed", "0"])
    assert code == 0
    assert (tmp_path / "root" / "simulate" / "pattern.csv").exists()


# ---------------------------------------------------------------------------
# fit, summarize, envelope, moments round trip

def test_full_round_trip(tmp_path, capsys):
    cfg = write_config(tmp_path)
    sim = tmp_path / "sim"
    assert cli_dispatch(["simulate", "--config", cfg, "--seed", "11",
                         "--out", str(sim)]) == 0

    fit = tmp_path / "fit"
    assert cli_dispatch(["fit", "--config", cfg,
                         "--counts", str(sim / "counts.csv"),
                         "--out", str(fit)]) == 0
    for name in ("theta_level.csv", "theta_class_1.csv", "theta_class_2.csv",
                 "summary.json", "mean_log_intensity.csv",
                 "class_probability_1.csv", "class_probability_2.csv",
                 "snapshots.npz", "traces.png", "manifest.json"):
        assert (fit / name).exists(), name
    summary = json.loads((fit / "summary.json").read_text())
    for stats in summary["parameters"].values():
        assert stats["lo"] <= stats["hi"]
    manifest = json.loads((fit / "manifest.json").read_text())
    assert manifest["n_kept"] == 10
    assert manifest["fit_settings"]["n_iter"] == 60
    header = (fit / "theta_class_1.csv").read_text().splitlines()[0]
    assert header == "sigma_1,rho_1,mean_1"

    summ = tmp_path / "summ"
    assert cli_dispatch(["summarize", "--fit", str(fit),
                         "--out", str(summ)]) == 0
    lines = (summ / "parameters.csv").read_text().strip().splitlines()
    assert lines[0] == "parameter,mean,sd,lo,hi,ess"
    assert len(lines) == 1 + len(summary["parameters"])

    env = tmp_path / "env"
    assert cli_dispatch(["envelope", "--fit", str(fit),
                         "--data", str(sim / "pattern.csv"),
                         "--stat", "L", "--sims", "20",
                         "--r-max", "0.2", "--points", "8",
                         "--seed", "2", "--out", str(env)]) == 0
    body = np.loadtxt(env / "envelope_L.csv", delimiter=",", skiprows=1)
    assert body.shape == (8, 5)
    assert (body[:, 3] <= body[:, 4]).all()
    env_manifest = json.loads((env / "manifest.json").read_text())
    assert 0.0 <= env_manifest["fraction_inside"] <= 1.0

    env2 = tmp_path / "env2"
    assert cli_dispatch(["envelope", "--config", cfg,
                         "--data", str(sim / "pattern.csv"),
                         "--stat", "g", "--sims", "20",
                         "--r-max", "0.2", "--points", "6",
                         "--seed", "2", "--out", str(env2)]) == 0
    assert (env2 / "envelope_g.csv").exists()


def test_moments_command_intensity_oracle(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "window": [1.0, 1.0], "nx": 6, "ny": 6,
        "level": {"rho": 0.4},
        "thresholds": [0.0],
        "classes": [{"kind": "constant", "mean": 0.0},
                    {"kind": "constant", "mean": 1.0}],
    }, name="const.json")
    out = tmp_path / "mom"
    code = cli_dispatch(["moments", "--config", cfg, "--points", "4",
                         "--r-max", "0.2", "--f-sims", "0",
                         "--out", str(out)])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    expected = 0.5 * (1.0 + math.e)
    assert abs(manifest["intensity"] - expected) < 1e-9 * expected
    g = np.loadtxt(out / "pair_correlation.csv", delimiter=",", skiprows=1)
    k = np.loadtxt(out / "k_function.csv", delimiter=",", skiprows=1)
    assert g.shape == (4, 2)
    assert k.shape == (4, 2)
    assert not (out / "empty_space.csv").exists()


# ---------------------------------------------------------------------------
# preprocess

def raster_text(values, cellsize, origin=(0.0, 0.0)):
    ny, nx = values.shape
    lines = [f"ncols {nx}", f"nrows {ny}", f"cellsize {cellsize}",
             f"origin {origin[0]} {origin[1]}"]
    for row in values:
        lines.append(" ".join(f"{v:.6f}" for v in row))
    return "\n".join(lines) + "\n"


def test_preprocess_round_trip(tmp_path, capsys):
    xs = (np.arange(12) + 0.5) * 0.1
    ys = (np.arange(12) + 0.5) * 0.1
    elev_vals = 10.0 + np.sin(3.0 * xs)[None, :] + np.cos(2.0 * ys)[:, None]
    soil_vals = np.cos(4.0 * xs)[None, :] + 0.3 * ys[:, None] ** 2
    (tmp_path / "elev.asc").write_text(raster_text(elev_vals, 0.1))
    (tmp_path / "soil.asc").write_text(raster_text(soil_vals, 0.1))

    out = tmp_path / "prep"
    code = cli_dispatch(["preprocess",
                         "--raster", f"soil={tmp_path / 'soil.asc'}",
                         "--raster", f"soil_dup={tmp_path / 'soil.asc'}",
                         "--elevation", str(tmp_path / "elev.asc"),
                         "--window", "1", "1", "--nx", "8", "--ny", "8",
                         "--out", str(out)])
    assert code == 0
    with np.load(out / "stack.npz") as archive:
        stack = archive["stack"]
        names = [str(n) for n in archive["names"]]
    assert stack.shape[1:] == (8, 8)
    assert stack.shape[0] == len(names)
    # the duplicated raster cannot survive collinearity pruning
    assert ("soil" in names) != ("soil_dup" in names)
    # standardized layers
    assert np.abs(stack.mean(axis=(1, 2))).max() < 1e-9
    report = json.loads((out / "preprocess.json").read_text())
    assert set(report["names"]) == {"soil", "soil_dup", "elev", "slope"}
    assert len(report["removed"]) == 4 - len(names)
    removed_names = {entry["name"] for entry in report["removed"]}
    assert removed_names <= set(report["names"])
    assert removed_names.isdisjoint(names)
    for name in names:
        assert (out / f"covariate_{name}.csv").exists()


def test_preprocess_without_inputs_exits_1(tmp_path, capsys):
    assert cli_dispatch(["preprocess", "--window", "1", "1",
                         "--nx", "4", "--ny", "4",
                         "--out", str(tmp_path / "x")]) == 1


def test_preprocess_missing_raster_exits_2(tmp_path, capsys):
    assert cli_dispatch(["preprocess",
                         "--raster", f"a={tmp_path / 'nope.asc'}",
                         "--window", "1", "1", "--nx", "4", "--ny", "4",
                         "--out", str(tmp_path / "x")]) == 2
