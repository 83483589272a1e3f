"""Command-line interface.

Exit status: 0 on success, 1 on validation or runtime failure (one JSON
line on stderr), 2 on usage errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional

from platoonlab import __version__
from platoonlab.errors import PlatoonError
from platoonlab.io import bundle as bundles
from platoonlab.io.scenario import ScenarioValidationError, bundled_names, load_scenario
from platoonlab.stability import CONDITIONS, Axis, build_stability_map

COMPARE_GROUPS = {
    "all": ["compare_idm_nodelay", "compare_ovm_nodelay", "compare_gmm_nodelay",
            "compare_cacc_nodelay"],
    "nodelay": ["compare_idm_nodelay", "compare_ovm_nodelay", "compare_gmm_nodelay",
                "compare_cacc_nodelay"],
    "150ms": ["compare_idm_150ms", "compare_ovm_150ms", "compare_gmm_150ms", "compare_cacc_150ms"],
    "1500ms": ["compare_idm_1500ms", "compare_ovm_1500ms", "compare_gmm_1500ms",
               "compare_cacc_150ms"],
}


def _out_dir(args) -> Path:
    return Path(args.out) if args.out else bundles.default_out_dir()


def _emit(record):
    print(json.dumps(record, sort_keys=True))


def _fail(exc: Exception) -> int:
    rec = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ScenarioValidationError):
        rec["problems"] = exc.problems
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)
    return 1


def _summary_line(b):
    v = b.verdict
    return {"scenario": v["scenario"], "directory": str(b.directory), "stable": v["stable"],
            "aborted": v["aborted"], "max_abs_spacing_error": v["max_abs_spacing_error"]}


def cmd_simulate(args) -> int:
    scn = load_scenario(args.scenario)
    b = bundles.simulate_scenario(scn, _out_dir(args) / scn.name,
                                  plots=False if args.no_plots else None)
    _emit(_summary_line(b))
    return 0


def _apply_delays(scn, delay, cacc_delay):
    if scn.model == "cacc":
        d = cacc_delay if cacc_delay is not None else delay
        if d is not None:
            scn = scn.with_override("delays.communication", d)
    elif delay is not None:
        scn = scn.with_override("delays.response", delay)
    return scn


def cmd_compare(args) -> int:
    names: List[str] = []
    for ref in args.scenarios:
        names.extend(COMPARE_GROUPS.get(ref, [ref]))
    scns = [_apply_delays(load_scenario(n), args.delay, args.cacc_delay) for n in names]
    label = "compare" if args.delay is None else f"compare_delay_{args.delay:g}"
    if args.cacc_delay is not None:
        label += f"_cacc_{args.cacc_delay:g}"
    root = _out_dir(args) / label

    def job(scn):
        return bundles.simulate_scenario(scn, root / scn.name,
                                         plots=False if args.no_plots else None)

    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        results = list(pool.map(job, scns))
    for b in results:
        _emit(_summary_line(b))
    return 0


def _parse_axis(text: str) -> Axis:
    try:
        name, rng = text.split("=", 1)
        parts = rng.split(":")
        lo, hi = float(parts[0]), float(parts[1])
        res = int(parts[2]) if len(parts) > 2 else 200
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError(f"axis must look like name=lo:hi[:res], got {text!r}")
    return Axis(name, lo, hi, res)


def _parse_fixed(text: str):
    try:
        key, val = text.split("=", 1)
        return key, float(val)
    except ValueError:
        raise argparse.ArgumentTypeError(f"fixed parameter must look like key=value, got {text!r}")


def cmd_stability_map(args) -> int:
    cond = CONDITIONS[args.condition]
    axes = None
    if args.axes:
        given = {a.name: a for a in args.axes}
        axes = [given.get(a.name, a) for a in cond.axes]
        unknown = set(given) - {a.name for a in cond.axes}
        if unknown:
            raise PlatoonError(f"unknown axes {sorted(unknown)} for {args.condition!r}")
    fixed = dict(args.fixed or [])
    smap = build_stability_map(args.condition, axes, fixed, args.res)
    request = json.dumps({"condition": args.condition,
                          "axes": [[a.name, a.lo, a.hi, a.resolution] for a in smap.axes],
                          "fixed": smap.fixed}, sort_keys=True)
    digest = hashlib.sha256(request.encode()).hexdigest()
    b = bundles.write_map_bundle(smap, _out_dir(args) / f"map_{args.condition}", digest)
    _emit({"condition": args.condition, "directory": str(b.directory), **b.verdict})
    return 0


def _parse_value(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def cmd_sweep(args) -> int:
    base = load_scenario(args.scenario)
    values = [_parse_value(v) for v in args.values]
    scns = [base.with_override(args.param, v) for v in values]
    root = _out_dir(args) / f"{base.name}_sweep_{args.param}"

    def job(pair):
        v, scn = pair
        return bundles.simulate_scenario(scn, root / f"{args.param}={v}",
                                         plots=False if args.no_plots else None)

    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        results = list(pool.map(job, zip(values, scns)))
    for v, b in zip(values, results):
        _emit({"param": args.param, "value": v, **_summary_line(b)})
    return 0


def cmd_list(args) -> int:
    for name in bundled_names():
        if args.verbose:
            scn = load_scenario(name)
            print(f"{name}\t{scn.model}\t{scn.description}")
        else:
            print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="platoonlab",
                                description="Platoon string-stability simulation and analysis.")
    p.add_argument("--version", action="version", version=f"platoonlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(sp):
        sp.add_argument("--out", help=f"output directory (default ${bundles.OUT_ENV} "
                                      f"or ./{bundles.DEFAULT_OUT})")

    sp = sub.add_parser("simulate", help="run one scenario and write a bundle")
    sp.add_argument("scenario", help="scenario file or bundled scenario name")
    sp.add_argument("--no-plots", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("compare", help="run several scenarios side by side")
    sp.add_argument("scenarios", nargs="+",
                    help=f"scenario names/files or a group: {', '.join(COMPARE_GROUPS)}")
    sp.add_argument("--delay", type=float, help="response delay for IDM/OVM/GMM and, unless "
                                                "--cacc-delay is given, the CACC V2V delay")
    sp.add_argument("--cacc-delay", type=float, help="CACC V2V delay")
    sp.add_argument("--workers", type=int, default=4)
    sp.add_argument("--no-plots", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("stability-map", help="evaluate a stability condition on a grid")
    sp.add_argument("condition", choices=sorted(CONDITIONS))
    sp.add_argument("--axes", nargs="+", type=_parse_axis, metavar="NAME=LO:HI[:RES]")
    sp.add_argument("--res", type=int, help="resolution for every axis")
    sp.add_argument("--fixed", nargs="+", type=_parse_fixed, metavar="KEY=VALUE")
    common(sp)
    sp.set_defaults(func=cmd_stability_map)

    sp = sub.add_parser("sweep", help="rerun a scenario over values of one field")
    sp.add_argument("scenario")
    sp.add_argument("--param", required=True, help="dotted field, e.g. model.params.sensitivity")
    sp.add_argument("--values", nargs="+", required=True)
    sp.add_argument("--workers", type=int, default=4)
    sp.add_argument("--no-plots", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("list-scenarios", help="list bundled scenarios")
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.set_defaults(func=cmd_list)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PlatoonError, OSError) as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
