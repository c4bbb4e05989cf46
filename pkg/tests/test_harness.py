import json
import subprocess
import sys

import numpy as np
import pytest

from halfflow import config as cf
from halfflow import io
from halfflow.cli import main
from halfflow.initial import (InitialDataSpec, bubble_angle, bubble_pullback, make_initial)
from halfflow.spectral import CircleGrid, half_energy


# ---- config ---------------------------------------------------------------

def test_config_parse_resolve_and_dump_roundtrip():
    raw = cf.parse_text("M = 64  # grid\n\n# comment\ndt = 0.005\nscan_radii = 0.1, 0.2\n")
    cfg = cf.resolve("flow", raw, {"seed": 7})
    assert cfg["M"] == 64 and cfg["dt"] == 0.005 and cfg["seed"] == 7
    assert cfg["scan_radii"] == [0.1, 0.2]
    assert cfg["reproject"] is True
    again = cf.resolve("flow", cf.parse_text(cf.dump(cfg)))
    assert again == cfg


@pytest.mark.parametrize("text", ["M 64", "= 3", "M = 1\nM = 2"])
def test_config_syntax_errors(text):
    with pytest.raises(cf.ConfigError):
        cf.parse_text(text)


def test_config_rejects_unknown_and_bad_values():
    with pytest.raises(cf.ConfigError) as exc:
        cf.resolve("flow", {"grid": "64"})
    assert exc.value.context["unknown"] == ["grid"]
    with pytest.raises(cf.ConfigError):
        cf.resolve("flow", {"M": "many"})
    with pytest.raises(cf.ConfigError):
        cf.resolve("flow", {"reproject": "maybe"})
    with pytest.raises(cf.ConfigError):
        cf.resolve("nonsense")
    with pytest.raises(cf.ConfigError):
        cf.load("flow", "/nonexistent/file.cfg")


# ---- io -------------------------------------------------------------------

def test_csv_roundtrip_is_lossless(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.standard_normal((5, 3)) * 10.0 ** rng.integers(-20, 20, (5, 3))
    io.write_csv(tmp_path / "a.csv", ["a", "b", "c"], data, footer="slope = 1.0")
    header, back = io.read_csv(tmp_path / "a.csv")
    assert header == ["a", "b", "c"]
    assert np.array_equal(back, data)
    assert (tmp_path / "a.csv").read_text().endswith("# slope = 1.0\n")


def test_json_handles_numpy_and_nonfinite(tmp_path):
    io.write_json(tmp_path / "x.json", {"a": np.float64(1.5), "b": np.arange(3), "c": np.inf})
    d = json.loads((tmp_path / "x.json").read_text())
    assert d == {"a": 1.5, "b": [0, 1, 2], "c": "inf"}
    rec = io.error_record("code", "msg", {"k": np.int64(2)})
    assert rec == {"code": "code", "message": "msg", "context": {"k": 2}}


# ---- initial data ---------------------------------------------------------

def test_initial_spec_parsing():
    s = InitialDataSpec.parse("bubble_pullback(0.1, 2.0)", n=3)
    assert s.kind == "bubble_pullback" and s.params == (0.1, 2.0)
    assert InitialDataSpec.parse("constant").params == ()
    with pytest.raises(ValueError):
        InitialDataSpec.parse("great_circle('a')")
    with pytest.raises(ValueError):
        InitialDataSpec.parse("1abc(")


@pytest.mark.parametrize("text", ["constant", "great_circle(2)", "bubble_pullback(0.1, 1.0)",
                                  "bandlimited_noise(0.3, 4, 5)", "perturbed_constant(0.1)"])
@pytest.mark.parametrize("n", [2, 3])
def test_initial_data_on_sphere(text, n):
    u = make_initial(InitialDataSpec.parse(text, n=n, seed=1), CircleGrid(64))
    assert u.n == n
    assert u.sphere_drift() < 1e-12


def test_initial_data_values():
    g = CircleGrid(64)
    assert half_energy(make_initial(InitialDataSpec.parse("constant"), g)) == 0.0
    with pytest.raises(ValueError):
        make_initial(InitialDataSpec("spiral"), g)
    with pytest.raises(ValueError):
        make_initial(InitialDataSpec("constant", n=4), g)
    # degree-one bubble: the angle winds once around the circle
    th = bubble_angle(np.linspace(-np.pi + 1e-9, np.pi - 1e-9, 1001), 0.3)
    assert th[-1] - th[0] == pytest.approx(2 * np.pi, abs=1e-6)
    u = bubble_pullback(CircleGrid(2048), 0.05, 0.0, 3)
    assert half_energy(u) == pytest.approx(np.pi, rel=1e-6)
    # seeds are honoured
    a = make_initial(InitialDataSpec.parse("perturbed_constant(0.1)", seed=1), g).values
    b = make_initial(InitialDataSpec.parse("perturbed_constant(0.1)", seed=2), g).values
    assert not np.array_equal(a, b)


# ---- cli ------------------------------------------------------------------

FLOW_CFG = "M = 32\ndt = 0.01\nt_end = 0.2\nsnapshot_stride = 5\n"


def test_cli_flow_is_deterministic(tmp_path):
    cfg = tmp_path / "f.cfg"
    cfg.write_text(FLOW_CFG + "initial_data = perturbed_constant(0.15)\n")
    for d in ("a", "b"):
        assert main(["flow", "--config", str(cfg), "--seed", "4", "--out", str(tmp_path / d)]) == 0
    files = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert "trace.csv" in files and "u_0.csv" in files
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for extra in ("config.resolved", "calibration.json", "plot.gp", "report.json"):
        assert (tmp_path / "a" / extra).is_file()
    assert "seed = 4" in (tmp_path / "a" / "config.resolved").read_text()


def test_cli_constant_flow_and_scan(tmp_path):
    cfg = tmp_path / "f.cfg"
    cfg.write_text(FLOW_CFG + "initial_data = constant\n")
    assert main(["flow", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 0
    _, tr = io.read_csv(tmp_path / "c" / "trace.csv")
    assert np.all(tr[:, 1] == 0.0)
    _, u1 = io.read_csv(tmp_path / "c" / "u_1.csv")
    _, u0 = io.read_csv(tmp_path / "c" / "u_0.csv")
    assert np.array_equal(u0, u1)
    assert main(["scan", "--trace", str(tmp_path / "c"), "--radii", "0.05,0.2",
                 "--out", str(tmp_path / "s")]) == 0
    rep = json.loads((tmp_path / "s" / "concentration.json").read_text())
    assert rep["radii"] == [0.05, 0.2]
    assert "radii = 0.05,0.2" in (tmp_path / "s" / "config.resolved").read_text()


def test_cli_bubble_extraction(tmp_path):
    cfg = tmp_path / "f.cfg"
    cfg.write_text("M = 256\ndt = 0.001\nt_end = 0.01\nsnapshot_stride = 5\n"
                   "initial_data = great_circle(1)\n")
    assert main(["flow", "--config", str(cfg), "--out", str(tmp_path / "f")]) == 0
    bcfg = tmp_path / "b.cfg"
    bcfg.write_text("line_M = 512\n")
    assert main(["bubble", "--config", str(bcfg), "--trace", str(tmp_path / "f"),
                 "--at", "0.01,1.0,0.05", "--out", str(tmp_path / "b")]) == 0
    rep = json.loads((tmp_path / "b" / "bubble_report.json").read_text())
    assert rep["M"] == 512 and rep["phi_R"]["profile"] == "arctan"
    header, data = io.read_csv(tmp_path / "b" / "bubble.csv")
    assert header == ["x", "v_1", "v_2", "v_3"] and data.shape == (512, 4)


def test_cli_errors_are_json(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("bogus = 1\n")
    out = tmp_path / "e"
    assert main(["flow", "--config", str(bad), "--out", str(out)]) == 2
    rec = json.loads((out / "error.json").read_text())
    assert rec["code"] == "config_error" and rec["context"]["unknown"] == ["bogus"]
    assert main(["scan", "--out", str(tmp_path / "s")]) != 0
    assert json.loads((tmp_path / "s" / "error.json").read_text())["code"] == "missing_trace"
    assert main(["scan", "--trace", str(tmp_path / "nowhere"), "--out", str(tmp_path / "t")]) == 3
    assert main(["bubble", "--trace", str(tmp_path), "--at", "x", "--out", str(tmp_path / "u")]) != 0


def test_cli_variational_and_wente(tmp_path):
    v = tmp_path / "v.cfg"
    v.write_text("M = 16\nMt = 20\n")
    assert main(["variational", "--config", str(v), "--out", str(tmp_path / "v")]) == 0
    for name in ("minimizer.csv", "ire.csv", "sweep.csv", "variational_report.json"):
        assert (tmp_path / "v" / name).is_file()
    assert "# slope = " in (tmp_path / "v" / "sweep.csv").read_text()
    header, data = io.read_csv(tmp_path / "v" / "minimizer.csv")
    assert header[:2] == ["t", "x"] and data.shape == (21 * 16, 5)
    w = tmp_path / "w.cfg"
    w.write_text("M = 32\nsamples = 3\n")
    assert main(["wente", "--config", str(w), "--out", str(tmp_path / "w")]) == 0
    rep = json.loads((tmp_path / "w" / "wente_report.json").read_text())
    assert rep["samples"] == 3 and np.isfinite(rep["max_ratio"])


def test_cli_calibrate_and_accept_subset(tmp_path):
    c = tmp_path / "c.cfg"
    c.write_text("M = 64\n")
    assert main(["calibrate", "--config", str(c), "--out", str(tmp_path / "c")]) == 0
    cal = json.loads((tmp_path / "c" / "calibration.json").read_text())
    assert cal["C_half"] == pytest.approx(1 / (2 * np.pi))
    assert main(["accept", "--only", "1,3", "--out", str(tmp_path / "a")]) == 0
    rep = json.loads((tmp_path / "a" / "acceptance.json").read_text())
    assert [r["id"] for r in rep["results"]] == [1, 3]
    f = tmp_path / "f.cfg"
    f.write_text("fault = corrupt_C_half\n")
    assert main(["accept", "--config", str(f), "--only", "4", "--out", str(tmp_path / "x")]) == 5


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "halfflow.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "calibrate" in proc.stdout and "variational" in proc.stdout
