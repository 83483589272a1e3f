import json
import subprocess
import sys

import numpy as np
import pytest

from platoonlab import cli
from platoonlab.io import bundle, csvio


def _lines(text):
    return [json.loads(l) for l in text.splitlines() if l.strip()]


def test_simulate_idm_is_stable(tmp_path, capsys):
    assert cli.main(["simulate", "idm_section6_1", "--out", str(tmp_path)]) == 0
    (rec,) = _lines(capsys.readouterr().out)
    assert rec["stable"] is True and rec["aborted"] is False
    run = tmp_path / "idm_section6_1"
    for name in ("trajectory.csv", "metrics.csv", "verdict.json", "provenance.json",
                 "spacing_error.svg", "velocity.svg"):
        assert (run / name).is_file()


def test_compare_all_with_150ms(tmp_path, capsys):
    assert cli.main(["compare", "all", "--delay", "0.15", "--no-plots", "--out", str(tmp_path)]) == 0
    recs = {r["scenario"]: r for r in _lines(capsys.readouterr().out)}
    assert len(recs) == 4
    cacc = recs["compare_cacc_nodelay"]
    assert max(cacc["max_abs_spacing_error"]) <= 0.6 * 2
    verdict = json.loads((tmp_path / "compare_delay_0.15" / "compare_cacc_nodelay" /
                          "verdict.json").read_text())
    assert verdict["comm_delay"] == 0.15
    for name in ("compare_idm_nodelay", "compare_ovm_nodelay", "compare_gmm_nodelay"):
        v = json.loads((tmp_path / "compare_delay_0.15" / name / "verdict.json").read_text())
        assert v["response_delay"] == 0.15


def test_stability_map_ovm(tmp_path, capsys):
    args = ["stability-map", "ovm", "--res", "20", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    rec = _lines(capsys.readouterr().out)[0]
    assert rec["cells"] == 400
    smap = csvio.read_map_csv(tmp_path / "map_ovm" / "map_ovm.csv")
    assert smap.values.shape == (20, 20)
    assert (tmp_path / "map_ovm" / "map_ovm.svg").read_text().startswith("<svg")


def test_stability_map_custom_axes(tmp_path, capsys):
    args = ["stability-map", "gmm", "--axes", "l=0:2:5", "alpha=0:1:3",
            "--fixed", "s_star=4", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    smap = csvio.read_map_csv(tmp_path / "map_gmm" / "map_gmm.csv")
    assert smap.values.shape == (5, 3)
    assert smap.fixed["s_star"] == 4.0


def test_sweep(tmp_path, capsys):
    args = ["sweep", "gmm_discrete", "--param", "platoon.t_end", "--values", "5", "6",
            "--no-plots", "--out", str(tmp_path)]
    assert cli.main(args) == 0
    recs = _lines(capsys.readouterr().out)
    assert [r["value"] for r in recs] == [5, 6]
    assert (tmp_path / "gmm_discrete_sweep_platoon.t_end" / "platoon.t_end=6").is_dir()


def test_list_scenarios(capsys):
    assert cli.main(["list-scenarios"]) == 0
    names = capsys.readouterr().out.split()
    assert "idm_section6_1" in names and names == sorted(names)


def test_out_env_var(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(bundle.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["simulate", "gmm_discrete", "--no-plots"]) == 0
    assert (tmp_path / "env" / "gmm_discrete" / "trajectory.csv").is_file()


def test_validation_failure_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('schema_version = 1\nname = "x"\nfoo = 3\n[model]\nkind = "idm"\n')
    assert cli.main(["simulate", str(bad), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    rec = json.loads(err[0])
    assert rec["error"] == "ScenarioValidationError"
    assert any("foo" in p for p in rec["problems"])


def test_unknown_scenario_exit_1(tmp_path, capsys):
    assert cli.main(["simulate", "nope", "--out", str(tmp_path)]) == 1
    assert "error" in json.loads(capsys.readouterr().err)


def test_bad_map_axis_exit_1(tmp_path, capsys):
    assert cli.main(["stability-map", "ovm", "--axes", "zzz=0:1:3", "--out", str(tmp_path)]) == 1
    assert "zzz" in json.loads(capsys.readouterr().err)["message"]


@pytest.mark.parametrize("argv", [["frobnicate"], ["simulate", "x", "--bogus"], [],
                                  ["stability-map", "nope"]])
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "platoonlab", "frobnicate"],
                         capture_output=True, text=True)
    assert res.returncode == 2
    res = subprocess.run([sys.executable, "-m", "platoonlab", "list-scenarios"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "ovm_section6_2" in res.stdout


def test_repeated_simulate_bytes(tmp_path, capsys):
    for d in ("a", "b"):
        assert cli.main(["simulate", "cacc_nonharmonic", "--out", str(tmp_path / d)]) == 0
    for name in ("trajectory.csv", "metrics.csv", "verdict.json", "velocity.svg"):
        a = (tmp_path / "a" / "cacc_nonharmonic" / name).read_bytes()
        b = (tmp_path / "b" / "cacc_nonharmonic" / name).read_bytes()
        assert a == b, name
    back = csvio.read_trajectory_csv(tmp_path / "a" / "cacc_nonharmonic" / "trajectory.csv")
    assert np.all(np.isfinite(back["x"]))
