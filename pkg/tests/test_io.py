import json
import re

import numpy as np
import pytest

from platoonlab import stability
from platoonlab.errors import ConfigError
from platoonlab.io import bundle, csvio, svg
from platoonlab.io.scenario import (ScenarioParseError, ScenarioValidationError, bundled_names,
                                    load_scenario, parse_toml, validate_scenario)
from platoonlab.models import IdmParams
from platoonlab.perturb import PerturbationSpec
from platoonlab.sim import PlatoonConfig, Trajectory, run_simulation

MINIMAL = """
schema_version = 1
name = "tiny"

[model]
kind = "gmm"

[platoon]
n_vehicles = 3
equilibrium_speed = 20.0
equilibrium_gap = 25.0
dt = 0.05
t_end = 10.0

[perturbation]
waveform = "sinusoid"
amplitude = 1.0
angular_frequency = 0.5
"""


def _write(tmp_path, text, name="scn.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# -- scenarios -----------------------------------------------------------------

def test_bundled_idm_scenario():
    scn = load_scenario("idm_section6_1")
    assert scn.model == "idm"
    assert scn.platoon.equilibrium_speed == 27.8
    assert scn.params.time_headway == 1.5
    assert scn.platoon.n_vehicles == 5


def test_dt_zero_rejected(tmp_path):
    path = _write(tmp_path, MINIMAL.replace("dt = 0.05", "dt = 0.0"))
    with pytest.raises(ScenarioValidationError) as exc:
        load_scenario(path)
    assert any("dt" in p for p in exc.value.problems)


def test_unknown_field_rejected(tmp_path):
    path = _write(tmp_path, MINIMAL + "\nfoo = 1\n")
    with pytest.raises(ScenarioValidationError) as exc:
        load_scenario(path)
    assert any("foo" in p for p in exc.value.problems)
    nested = _write(tmp_path, MINIMAL.replace("dt = 0.05", "dt = 0.05\nfoo = 2"), "n.toml")
    with pytest.raises(ScenarioValidationError, match="platoon.foo"):
        load_scenario(nested)


def test_all_problems_reported_together(tmp_path):
    bad = MINIMAL.replace("dt = 0.05", "dt = -1.0\nbar = 3").replace('kind = "gmm"',
                                                                      'kind = "gmm"\nzap = 1')
    with pytest.raises(ScenarioValidationError) as exc:
        load_scenario(_write(tmp_path, bad))
    text = " ".join(exc.value.problems)
    assert "dt" in text and "bar" in text and "zap" in text


def test_parse_error_has_position(tmp_path):
    path = _write(tmp_path, "[model]\nkind = \n")
    with pytest.raises(ScenarioParseError) as exc:
        load_scenario(path)
    assert exc.value.line == 2
    assert exc.value.column is not None


def test_comm_delay_belongs_in_delays_table():
    raw = parse_toml(MINIMAL.replace('kind = "gmm"', 'kind = "cacc"') + "\n")
    raw["model"]["params"] = {"comm_delay": 0.1}
    with pytest.raises(ScenarioValidationError, match="delays.communication"):
        validate_scenario(raw)
    raw["model"]["params"] = {}
    raw["delays"] = {"communication": 0.15}
    raw["platoon"]["auto_equilibrium"] = True
    assert validate_scenario(raw).params.comm_delay == 0.15


def test_assumed_keys_must_exist(tmp_path):
    text = MINIMAL + '\n[assumed]\n"platoon.not_a_field" = true\n'
    with pytest.raises(ScenarioValidationError, match="not_a_field"):
        load_scenario(_write(tmp_path, text))


def test_unknown_bundled_name():
    with pytest.raises(ConfigError):
        load_scenario("no_such_scenario")


def test_every_bundled_scenario_loads():
    names = bundled_names()
    assert len(names) >= 11
    kinds = set()
    for name in names:
        scn = load_scenario(name)
        assert scn.name == name
        kinds.add(scn.model.split("_")[0])
        for key, flag in scn.assumed.items():
            assert flag is True
    assert kinds == {"idm", "ovm", "gmm", "cacc"}


def test_bundled_library_covers_experiments():
    names = set(bundled_names())
    for required in ("idm_section6_1", "idm_section6_1_spacing_only", "ovm_section6_2",
                     "gmm_section6_3_config1", "gmm_section6_3_config2", "gmm_appendix_a_l1",
                     "cacc_section6_4_config1", "cacc_section6_4_config2",
                     "cacc_section6_4_config3"):
        assert required in names
    for model in ("idm", "ovm", "gmm", "cacc"):
        assert f"{model}_discrete" in names
        assert f"{model}_nonharmonic" in names
        assert f"compare_{model}_nodelay" in names and f"compare_{model}_150ms" in names


def test_override_and_hash():
    scn = load_scenario("compare_idm_nodelay")
    slow = scn.with_override("delays.response", 1.5)
    assert slow.platoon.response_delay == 1.5
    assert slow.sha256 != scn.sha256
    assert load_scenario("compare_idm_nodelay").sha256 == scn.sha256
    with pytest.raises(ScenarioValidationError):
        scn.with_override("platoon.dt", 0.0)


# -- CSV -----------------------------------------------------------------------

def _leader_run(t_end):
    cfg = PlatoonConfig("idm", IdmParams(), 20.0, n_vehicles=1, dt=0.1, t_end=t_end,
                        perturbation=PerturbationSpec("sinusoid", 1.0, 1.0))
    return run_simulation(cfg)


def test_two_step_leader_csv_rows(tmp_path):
    traj = _leader_run(0.2)
    path = csvio.write_trajectory_csv(traj, tmp_path / "t.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "t,veh0_x,veh0_v,veh0_a"
    assert len(lines) == 4
    assert [float(l.split(",")[0]) for l in lines[1:]] == [0.0, 0.1, 0.2]


def test_trajectory_csv_round_trip(tmp_path):
    cfg = PlatoonConfig("cacc", load_scenario("compare_cacc_150ms").params, 23.0,
                        auto_equilibrium=True, n_vehicles=4, t_end=5.0,
                        perturbation=PerturbationSpec("sinusoid", 2.0, 0.5))
    traj = run_simulation(cfg)
    path = csvio.write_trajectory_csv(traj, tmp_path / "t.csv", {"scenario_sha256": "abc"})
    back = csvio.read_trajectory_csv(path)
    for key in ("t", "x", "v", "a"):
        assert np.array_equal(back[key], getattr(traj, key))
    assert np.array_equal(back["gaps"], traj.gaps)
    assert back["meta"]["scenario_sha256"] == "abc"
    header = path.read_text().splitlines()[1]
    assert header.endswith("gap_0_1,gap_1_2,gap_2_3")


def test_empty_trajectory_header_only(tmp_path):
    cfg = PlatoonConfig("idm", IdmParams(), 20.0, auto_equilibrium=True, n_vehicles=2, t_end=1.0)
    empty = Trajectory(np.empty(0), np.empty((0, 2)), np.empty((0, 2)), np.empty((0, 2)), cfg, 1.0)
    path = csvio.write_trajectory_csv(empty, tmp_path / "e.csv")
    assert path.read_text() == "t,veh0_x,veh0_v,veh0_a,veh1_x,veh1_v,veh1_a,gap_0_1\n"
    back = csvio.read_trajectory_csv(path)
    assert back["t"].size == 0


def test_write_to_missing_directory_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        csvio.write_trajectory_csv(_leader_run(0.2), tmp_path / "nope" / "t.csv")


@pytest.mark.parametrize("name", ["ovm", "cacc_delay", "gmm"])
def test_map_csv_round_trip(tmp_path, name):
    smap = stability.build_stability_map(name, resolution=7)
    path = csvio.write_map_csv(smap, tmp_path / "m.csv")
    back = csvio.read_map_csv(path)
    assert back.condition == smap.condition
    assert back.axes == smap.axes
    assert back.fixed == smap.fixed
    assert np.array_equal(back.values, smap.values, equal_nan=True)


# -- SVG -----------------------------------------------------------------------

def _polylines(text):
    return re.findall(r'<polyline [^>]*points="([^"]*)"', text)


def test_constant_series_is_horizontal():
    t = np.linspace(0, 10, 101)
    text = svg.line_plot([("flat", t, np.full_like(t, 3.0))])
    lines = _polylines(text)
    assert len(lines) == 1
    ys = {p.split(",")[1] for p in lines[0].split()}
    assert len(ys) == 1


def test_two_series_two_polylines_and_legend():
    t = np.linspace(0, 10, 101)
    text = svg.line_plot([("Cars 0-1", t, np.sin(t)), ("Cars 1-2", t, np.cos(t))])
    assert len(_polylines(text)) == 2
    assert ">Cars 0-1</text>" in text and ">Cars 1-2</text>" in text


def test_svg_deterministic_and_errors():
    t = np.linspace(0, 10, 5001)
    series = [("a", t, np.sin(t))]
    assert svg.line_plot(series, "x") == svg.line_plot(series, "x")
    with pytest.raises(ConfigError):
        svg.line_plot([])
    with pytest.raises(ConfigError):
        svg.line_plot([("a", [], [])])
    with pytest.raises(ConfigError):
        svg.heatmap(np.zeros(3), ("x", 0, 1), ("y", 0, 1))


def test_heatmap_colors():
    vals = np.array([[1.0, -1.0], [np.nan, 0.0]])
    text = svg.heatmap(vals, ("x", 0, 1), ("y", 0, 1))
    assert text.count('fill="#4daf4a"') == 3  # two stable cells + legend swatch
    assert text.count('fill="#e41a1c"') == 2
    assert text.count('fill="#bbbbbb"') == 2


# -- bundles -------------------------------------------------------------------

def test_run_bundle_cross_references_hash(tmp_path):
    scn = load_scenario("cacc_section6_4_config2").with_override("platoon.t_end", 10.0)
    b = bundle.simulate_scenario(scn, tmp_path / "run")
    sha = scn.sha256
    for key in ("trajectory", "metrics", "spacing_svg", "velocity_svg"):
        assert sha in b.files[key].read_text()
    assert json.loads(b.files["verdict"].read_text())["scenario_sha256"] == sha
    prov = json.loads(b.files["provenance"].read_text())
    assert prov["scenario_sha256"] == sha and prov["dt"] == scn.platoon.dt
    assert "created_utc" in prov and prov["version"]
    assert "Vehicle 0" in b.files["velocity_svg"].read_text()
    assert "Cars 0-1" in b.files["spacing_svg"].read_text()


def test_run_bundle_bytes_deterministic(tmp_path):
    scn = load_scenario("gmm_discrete").with_override("platoon.t_end", 12.0)
    a = bundle.simulate_scenario(scn, tmp_path / "a")
    b = bundle.simulate_scenario(scn, tmp_path / "b")
    for key, path in a.files.items():
        if key == "provenance":
            continue
        assert path.read_bytes() == b.files[key].read_bytes(), key


def test_verdict_records_undefined_ratio(tmp_path):
    scn = load_scenario("idm_discrete")
    b = bundle.simulate_scenario(scn, tmp_path / "d", plots=False)
    assert b.verdict["stable"] is None
    assert "UndefinedRatioError" in b.verdict["verdict_velocity"]["error"]
    assert "spacing_svg" not in b.files


def test_map_bundle(tmp_path):
    smap = stability.build_stability_map("cacc_delay", resolution=8)
    b = bundle.write_map_bundle(smap, tmp_path / "m", "f" * 64)
    assert b.verdict["cells"] == 512
    assert b.verdict["stable_cells"] + b.verdict["undefined_cells"] <= 512
    assert "f" * 64 in b.files["svg"].read_text()
    assert np.array_equal(csvio.read_map_csv(b.files["map"]).values, smap.values, equal_nan=True)
