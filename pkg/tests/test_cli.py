import textwrap
from pathlib import Path

import numpy as np
import pytest

from fictdim.cli import main
from fictdim.io import fmt, read_summary, read_table, write_summary, write_table
from fictdim.params import EquationParams
from fictdim.scenario import (
    EXIT_ASSERT,
    EXIT_CONFIG,
    EXIT_OK,
    ConfigError,
    load_scenario,
    parse_times,
    run_scenario,
)

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
P334 = EquationParams(3, 3, 4)

SMALL = """
[scenario]
name = {name}
n = 3
p = 3
q = {q}
R = 3
cells = 64
T_end = 0.5
samples = 0.1, 0.25, 0.5
seed = 11

[initial]
kind = random-bumps
count = 3
spread = 1

{extra}
"""


def write_ini(tmp_path, name="small", q=4, extra="[analysis:mass_conservation]\ntol = 1e-10"):
    path = tmp_path / f"{name}.ini"
    path.write_text(textwrap.dedent(SMALL.format(name=name, q=q, extra=extra)))
    return path


@pytest.mark.parametrize("text,expect", [
    ("1, 2, 3", [1.0, 2.0, 3.0]),
    ("linspace(0, 1, 3)", [0.0, 0.5, 1.0]),
    ("geom(1, 100, 3), 5", [1.0, 5.0, 10.0, 100.0]),
])
def test_parse_times(text, expect):
    assert parse_times(text) == pytest.approx(expect, rel=1e-14)


@pytest.mark.parametrize("text", ["geom(1, 2)", "linspace(0, 1, 1)", "1, x"])
def test_parse_times_rejects(text):
    with pytest.raises(ConfigError):
        parse_times(text)


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(True) == "true"
    assert fmt(np.int64(3)) == "3"
    assert fmt(float("nan")) == "nan"
    assert fmt(-np.inf) == "-inf"


def test_table_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=50) * 10.0 ** rng.integers(-300, 300, 50)
    path = write_table(tmp_path / "t.csv", {"x": x, "y": -x}, P334, {"tag": "demo"})
    meta, cols = read_table(path)
    assert np.array_equal(cols["x"], x) and np.array_equal(cols["y"], -x)
    assert meta["tag"] == "demo" and float(meta["lam"]) == 12.0
    assert meta["range_condition"] == "true"
    with pytest.raises(ValueError):
        write_table(tmp_path / "bad.csv", {"a": [1, 2], "b": [1]}, None)


def test_summary_round_trip(tmp_path):
    path = write_summary(tmp_path / "s.txt", {"a": 1.5, "b": "x=y", "c": False})
    assert read_summary(path) == {"a": "1.5", "b": "x=y", "c": "false"}


def test_params_table(capsys):
    assert main(["params", "--n", "3", "--p", "3", "--q", "4"]) == EXIT_OK
    rows = dict(line.split(None, 1) for line in capsys.readouterr().out.splitlines())
    assert float(rows["d"]) == 4.0
    assert float(rows["lambda"]) == 12.0
    assert float(rows["alpha"]) == pytest.approx(1 / 3, rel=1e-11)
    assert rows["range"] == "true"
    assert rows["regime"].strip() == "slow"


def test_params_rejects_bad_q(capsys):
    assert main(["params", "--n", "3", "--p", "3", "--q", "0.5"]) == EXIT_CONFIG
    out = capsys.readouterr().out
    assert out.startswith("status=config_error") and "q must exceed 1" in out


def test_barenblatt_csv(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["barenblatt", "--n", "3", "--p", "3", "--q", "4", "--t", "1.5",
                 "--points", "11", "--out", str(out)]) == EXIT_OK
    meta, cols = read_table(out)
    assert list(cols) == ["r", "u"] and cols["r"].size == 11
    assert meta["kind"] == "barenblatt" and float(meta["t"]) == 1.5
    assert np.all(cols["u"] >= 0) and cols["u"][0] == cols["u"].max()


def test_giant_csv_and_residual_line(tmp_path, capsys):
    out = tmp_path / "g.csv"
    assert main(["giant", "--n", "3", "--p", "3", "--q", "4", "--tol", "1e-10",
                 "--nodes", "256", "--out", str(out)]) == EXIT_OK
    line = capsys.readouterr().out.strip()
    fields = dict(kv.split("=", 1) for kv in line.split())
    assert float(fields["integral_residual"]) < 1e-8
    assert float(fields["ode_residual"]) < 1e-5
    _, cols = read_table(out)
    assert cols["V"][-1] == 0.0


def test_giant_rejects_fast(capsys):
    assert main(["giant", "--n", "3", "--p", "3", "--q", "1.5"]) == EXIT_CONFIG


def test_config_with_bad_q_exits_2(tmp_path, capsys):
    path = write_ini(tmp_path, q=0.5, extra="")
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "out")]) == EXIT_CONFIG
    out = capsys.readouterr().out.strip()
    assert out.count("\n") == 0
    assert out.startswith("status=config_error") and "q must exceed 1" in out


def test_tail_exponent_under_slow_regime_exits_2(tmp_path):
    path = write_ini(tmp_path, extra="[analysis:tail_exponent]")
    res = run_scenario(path, tmp_path / "out")
    assert res.status == EXIT_CONFIG
    assert "tail_exponent needs the fast regime" in res.reason
    assert not (tmp_path / "out").exists()


@pytest.mark.parametrize("extra,message", [
    ("[analysis:nonsense]", "unknown analysis"),
    ("[analysis:support_exponent]", "support_exponent needs the slow regime"),
    ("[analysis:giant_residual]", "giant_residual needs giant initial data"),
])
def test_precondition_messages(tmp_path, extra, message):
    q = 1.5 if "support" in extra else 4
    with pytest.raises(ConfigError, match=message):
        load_scenario(write_ini(tmp_path, q=q, extra=extra))


def test_missing_file_is_config_error(tmp_path):
    res = run_scenario(tmp_path / "absent.ini", tmp_path)
    assert res.status == EXIT_CONFIG and "cannot read" in res.reason


def test_seed_override(tmp_path):
    path = write_ini(tmp_path)
    assert load_scenario(path).seed == 11
    assert load_scenario(path, seed=5).seed == 5


def test_artifact_tree_and_provenance(tmp_path):
    res = run_scenario(write_ini(tmp_path), tmp_path / "out")
    assert res.status == EXIT_OK, res.reason
    root = tmp_path / "out" / "small"
    profiles = sorted((root / "profiles").glob("*.csv"))
    assert len(profiles) == 3
    meta, cols = read_table(profiles[-1])
    assert list(cols) == ["r", "u"] and float(meta["t"]) == 0.5
    assert meta["config.initial.kind"] == "random-bumps" and meta["seed"] == "11"
    _, series = read_table(root / "series.csv")
    assert list(series) == ["t", "sup", "d_mass", "support", "L2w"]
    summary = read_summary(root / "summary.txt")
    assert summary["status"] == "ok"
    assert summary["provenance.lam"] == "12"
    assert summary["provenance.config.scenario.cells"] == "64"
    assert "provenance.version" in summary


def test_same_seed_gives_identical_bytes(tmp_path):
    path = write_ini(tmp_path)
    a = run_scenario(path, tmp_path / "a")
    b = run_scenario(path, tmp_path / "b")
    c = run_scenario(path, tmp_path / "c", seed=12)
    assert a.status == b.status == c.status == EXIT_OK
    files = sorted(p.relative_to(a.out_dir) for p in a.out_dir.rglob("*.csv"))
    assert files
    for rel in files:
        assert (a.out_dir / rel).read_bytes() == (b.out_dir / rel).read_bytes()
    assert (a.out_dir / "series.csv").read_bytes() != (c.out_dir / "series.csv").read_bytes()


def test_failed_assertion_exits_1(tmp_path):
    extra = "[analysis:mass_conservation]\ntol = 1e-40"
    path = write_ini(tmp_path, extra=extra)
    res = run_scenario(path, tmp_path / "out")
    assert res.status == EXIT_ASSERT
    assert res.line.startswith("status=fail scenario=small code=1 reason=")
    assert read_summary(res.out_dir / "summary.txt")["status"] == "fail"


def test_output_root_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("FICTDIM_OUT", str(tmp_path / "env"))
    assert main(["simulate", "--config", str(write_ini(tmp_path))]) == EXIT_OK
    assert (tmp_path / "env" / "small" / "series.csv").exists()
    assert capsys.readouterr().out.startswith("status=ok scenario=small code=0")


def test_sweep_aggregates(tmp_path, capsys):
    folder = tmp_path / "scen"
    folder.mkdir()
    write_ini(folder, name="good")
    write_ini(folder, name="bad", q=0.5, extra="")
    code = main(["sweep", str(folder), "--out", str(tmp_path / "out"), "--jobs", "2"])
    assert code == EXIT_CONFIG
    lines = capsys.readouterr().out.splitlines()
    assert any(ln.startswith("good") and "PASS" in ln for ln in lines)
    assert any(ln.startswith("bad") and "FAIL" in ln and "code=2" in ln for ln in lines)
    table = (tmp_path / "out" / "sweep_summary.csv").read_text().splitlines()
    assert table[0] == "scenario,code,reason" and len(table) == 3


def test_sweep_empty_directory(tmp_path):
    assert main(["sweep", str(tmp_path), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_shipped_barenblatt_track(tmp_path):
    res = run_scenario(SCENARIOS / "barenblatt_track_3_3_4.ini", tmp_path)
    assert res.status == EXIT_OK, res.reason
    _, series = read_table(res.out_dir / "series.csv")
    m = series["d_mass"]
    assert np.max(np.abs(m - m[0])) <= 1e-10 * m[0]


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.ini")), ids=lambda p: p.stem)
def test_shipped_scenarios_parse(path):
    sc = load_scenario(path)
    assert sc.name == path.stem
    assert all(sc.t_start < t <= sc.T_end for t in sc.samples)
