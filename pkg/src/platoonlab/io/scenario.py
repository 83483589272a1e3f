"""TOML scenario files.

Schema (``schema_version = 1``)::

    schema_version = 1
    name = "idm_section6_1"          # defaults to the file stem
    description = "..."              # optional

    [model]
    kind = "idm"                     # idm, idm_spacing_only, ovm, gmm, gmm_config1, cacc
    [model.params]                   # fields of the model's params class
    time_headway = 1.5               # (comm_delay is set under [delays])

    [platoon]
    n_vehicles = 5
    equilibrium_speed = 27.8
    equilibrium_gap = 6.0            # optional with auto_equilibrium
    auto_equilibrium = true
    vehicle_length = 5.0
    dt = 0.01
    t_end = 60.0
    scheme = "rk4"                   # or "euler"
    abort_on_collision = true

    [perturbation]                   # see perturb.PerturbationSpec
    waveform = "sinusoid"
    amplitude = 2.0
    angular_frequency = 0.5

    [delays]
    communication = 0.0              # CACC V2V delay tau
    response = 0.0                   # IDM/OVM/GMM response delay tau_r

    [metrics]
    tol = 0.05
    window = [30.0, 60.0]            # optional; default is the last half

    [output]
    plots = true

    [assumed]                        # values not given by the source study
    "perturbation.angular_frequency" = true

Every table except ``[model]`` and ``[platoon]`` is optional. Unknown keys
are rejected and all problems are reported together.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import tomli

from platoonlab import models
from platoonlab.errors import ConfigError, PlatoonError
from platoonlab.perturb import PerturbationSpec
from platoonlab.sim import SCHEMES, PlatoonConfig

SCHEMA_VERSION = 1
SCENARIO_PACKAGE = "platoonlab.scenarios"

_TOP = {"schema_version", "name", "description", "model", "platoon", "perturbation",
        "delays", "metrics", "output", "assumed"}
_MODEL = {"kind", "params"}
_PLATOON = {
    "n_vehicles": int, "equilibrium_speed": float, "equilibrium_gap": float,
    "auto_equilibrium": bool, "vehicle_length": float, "dt": float, "t_end": float,
    "scheme": str, "abort_on_collision": bool,
}
_PERTURB = {
    "waveform": str, "amplitude": float, "angular_frequency": float,
    "window_start": float, "window_duration": float, "step_delta": float,
}
_DELAYS = {"communication": float, "response": float}
_METRICS = {"tol": float, "window": list}
_OUTPUT = {"plots": bool}


class ScenarioParseError(PlatoonError, ValueError):
    def __init__(self, path, message, line=None, column=None):
        self.path, self.line, self.column = path, line, column
        where = f"{path}" + (f":{line}:{column}" if line is not None else "")
        super().__init__(f"{where}: {message}")


class ScenarioValidationError(ConfigError):
    def __init__(self, path, problems: List[str]):
        self.path = path
        self.problems = problems
        super().__init__(f"{path}: " + "; ".join(problems))


@dataclass
class ScenarioFile:
    name: str
    description: str
    model: str
    params: Any
    platoon: PlatoonConfig
    tol: float
    window: Optional[Tuple[float, float]]
    plots: bool
    assumed: Dict[str, bool]
    raw: Dict[str, Any] = field(repr=False)
    source: str = ""

    @property
    def sha256(self) -> str:
        return scenario_hash(self.raw)

    def to_config(self) -> PlatoonConfig:
        return self.platoon

    def with_override(self, dotted: str, value) -> "ScenarioFile":
        raw = copy.deepcopy(self.raw)
        set_dotted(raw, dotted, value)
        return validate_scenario(raw, source=f"{self.source} [{dotted}={value!r}]",
                                 default_name=self.name)


def scenario_hash(raw: Dict[str, Any]) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def set_dotted(raw: Dict[str, Any], dotted: str, value) -> None:
    keys = dotted.split(".")
    node = raw
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{dotted!r} does not name a table entry")
    node[keys[-1]] = value


def _coerce(value, typ, where, problems):
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{where}: expected a number, got {value!r}")
            return None
        value = float(value)
        if not math.isfinite(value):
            problems.append(f"{where}: must be finite")
            return None
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"{where}: expected an integer, got {value!r}")
            return None
        return value
    if not isinstance(value, typ):
        problems.append(f"{where}: expected {typ.__name__}, got {value!r}")
        return None
    return value


def _table(raw, key, spec, problems, required=False):
    tbl = raw.get(key)
    if tbl is None:
        if required:
            problems.append(f"missing table [{key}]")
        return {}
    if not isinstance(tbl, dict):
        problems.append(f"{key}: expected a table")
        return {}
    out = {}
    for k, v in tbl.items():
        if k not in spec:
            problems.append(f"unknown field {key}.{k}")
            continue
        c = _coerce(v, spec[k], f"{key}.{k}", problems)
        if c is not None:
            out[k] = c
    return out


def _params(kind, given, problems):
    cls = models.PARAMS_FOR_KIND[kind]
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for k, v in given.items():
        if k == "comm_delay":
            problems.append("model.params.comm_delay: set delays.communication instead")
            continue
        if k not in names:
            problems.append(f"unknown field model.params.{k}")
            continue
        typ = bool if names[k].type in ("bool", bool) else float
        c = _coerce(v, typ, f"model.params.{k}", problems)
        if c is not None:
            kwargs[k] = c
    return cls, kwargs


def validate_scenario(raw: Dict[str, Any], source: str = "<memory>",
                      default_name: str = "scenario") -> ScenarioFile:
    """Check a parsed scenario tree and build the typed scenario."""
    problems: List[str] = []
    for k in raw:
        if k not in _TOP:
            problems.append(f"unknown field {k}")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        problems.append(f"schema_version: unsupported value {version!r}")
    name = raw.get("name", default_name)
    if not isinstance(name, str) or not name:
        problems.append("name: expected a non-empty string")
        name = default_name
    description = raw.get("description", "")
    if not isinstance(description, str):
        problems.append("description: expected a string")
        description = ""

    model_tbl = raw.get("model")
    kind, params = None, None
    comm = 0.0
    if not isinstance(model_tbl, dict):
        problems.append("missing table [model]")
    else:
        for k in model_tbl:
            if k not in _MODEL:
                problems.append(f"unknown field model.{k}")
        kind = model_tbl.get("kind")
        if kind not in models.MODEL_KINDS:
            problems.append(f"model.kind: expected one of {list(models.MODEL_KINDS)}, got {kind!r}")
            kind = None
    delays = _table(raw, "delays", _DELAYS, problems)
    for k, v in delays.items():
        if v < 0:
            problems.append(f"delays.{k}: must be >= 0")
    comm = delays.get("communication", 0.0)
    response = delays.get("response", 0.0)
    if kind is not None:
        given = model_tbl.get("params", {})
        if not isinstance(given, dict):
            problems.append("model.params: expected a table")
            given = {}
        cls, kwargs = _params(kind, given, problems)
        if kind == "cacc":
            kwargs["comm_delay"] = comm
        elif comm:
            problems.append("delays.communication: only the cacc model has a V2V delay")
        try:
            params = cls(**kwargs)
            models.check_params(kind, params)
        except ConfigError as exc:
            problems.append(f"model.params: {exc}")
            params = None

    plat = _table(raw, "platoon", _PLATOON, problems, required=True)
    if "dt" in plat and not plat["dt"] > 0:
        problems.append("platoon.dt: must be > 0")
    if "t_end" in plat and "dt" in plat and not plat["t_end"] > plat["dt"]:
        problems.append("platoon.t_end: must exceed dt")
    if "scheme" in plat and plat["scheme"] not in SCHEMES:
        problems.append(f"platoon.scheme: expected one of {list(SCHEMES)}")
    if "equilibrium_speed" not in plat and "platoon" in raw:
        problems.append("platoon.equilibrium_speed: required")

    pert_kwargs = _table(raw, "perturbation", _PERTURB, problems)
    pert = None
    try:
        pert = PerturbationSpec(**pert_kwargs)
    except ConfigError as exc:
        problems.append(f"perturbation: {exc}")

    met = _table(raw, "metrics", _METRICS, problems)
    tol = met.get("tol", 0.05)
    if not tol >= 0:
        problems.append("metrics.tol: must be >= 0")
    window = None
    if "window" in met:
        w = met["window"]
        if (len(w) != 2 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in w)
                or not w[0] < w[1]):
            problems.append("metrics.window: expected [start, stop] with start < stop")
        else:
            window = (float(w[0]), float(w[1]))
    out = _table(raw, "output", _OUTPUT, problems)

    assumed = raw.get("assumed", {})
    if not isinstance(assumed, dict):
        problems.append("assumed: expected a table")
        assumed = {}
    for key, val in assumed.items():
        if not isinstance(val, bool):
            problems.append(f"assumed.{key}: expected true/false")
        elif not _dotted_exists(raw, key):
            problems.append(f"assumed.{key}: names no field in this scenario")

    cfg = None
    if not problems:
        try:
            cfg = PlatoonConfig(model=kind, params=params, perturbation=pert,
                                response_delay=response, **plat)
            cfg.resolved_gap()
        except ConfigError as exc:
            problems.append(f"platoon: {exc}")
    if problems:
        raise ScenarioValidationError(source, problems)
    return ScenarioFile(name=name, description=description, model=kind, params=params,
                        platoon=cfg, tol=tol, window=window, plots=out.get("plots", True),
                        assumed=dict(assumed), raw=raw, source=source)


def _dotted_exists(raw, dotted):
    node = raw
    for k in dotted.split("."):
        if not isinstance(node, dict) or k not in node:
            return False
        node = node[k]
    return True


def parse_toml(text: str, source: str = "<memory>") -> Dict[str, Any]:
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        msg = getattr(exc, "msg", str(exc))
        raise ScenarioParseError(source, msg, line, col) from None


def bundled_names() -> List[str]:
    root = resources.files(SCENARIO_PACKAGE)
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def _resolve(ref) -> Tuple[str, str]:
    path = Path(ref)
    if path.suffix == ".toml" or path.exists():
        return path.read_text(encoding="utf-8"), str(path)
    name = str(ref)
    res = resources.files(SCENARIO_PACKAGE).joinpath(f"{name}.toml")
    if not res.is_file():
        raise ConfigError(f"no scenario file or bundled scenario named {name!r}")
    return res.read_text(encoding="utf-8"), f"bundled:{name}"


def load_scenario(ref) -> ScenarioFile:
    """Load a scenario from a path, or a bundled scenario by name."""
    text, source = _resolve(ref)
    raw = parse_toml(text, source)
    stem = Path(source.split(":", 1)[-1]).stem
    return validate_scenario(raw, source=source, default_name=stem)
