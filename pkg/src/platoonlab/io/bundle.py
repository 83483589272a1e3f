"""Run bundles: every artifact of one simulation, written to one directory."""
from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from platoonlab import __version__, metrics
from platoonlab.errors import PlatoonError
from platoonlab.io import csvio, svg
from platoonlab.sim import Trajectory, run_simulation
from platoonlab.stability import StabilityMap

OUT_ENV = "PLATOONLAB_OUT"
DEFAULT_OUT = "platoonlab_out"


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


@dataclass
class RunBundle:
    directory: Path
    files: Dict[str, Path] = field(default_factory=dict)
    verdict: Dict = field(default_factory=dict)


def _verdict_or_error(traj, scn, basis):
    try:
        return metrics.string_stability_verdict(traj, tol=scn.tol, window=scn.window,
                                                basis=basis).to_dict()
    except PlatoonError as exc:
        return {"basis": basis, "error": f"{type(exc).__name__}: {exc}"}


def summarize(scn, traj: Trajectory) -> Dict:
    """Verdicts, events and flags of one run as a JSON-ready dict."""
    spacing = metrics.spacing_error(traj)
    vel = _verdict_or_error(traj, scn, "velocity")
    spc = (_verdict_or_error(traj, scn, "spacing") if traj.n_vehicles >= 3
           else {"basis": "spacing", "error": "needs at least 3 vehicles"})
    errs = spacing.values
    return {
        "scenario": scn.name,
        "scenario_sha256": scn.sha256,
        "model": scn.model,
        "n_vehicles": traj.n_vehicles,
        "dt": scn.platoon.dt,
        "response_delay": scn.platoon.response_delay,
        "comm_delay": getattr(scn.params, "comm_delay", None),
        "t_end_reached": float(traj.t[-1]),
        "aborted": traj.aborted,
        "flags": list(traj.flags),
        "events": [{"t": e.t, "kind": e.kind, "vehicle": e.vehicle, "detail": e.detail}
                   for e in traj.events],
        "spacing_reference": spacing.reference,
        "spacing_convention": spacing.convention,
        "max_abs_spacing_error": [float(np.nanmax(np.abs(errs[:, j]))) for j in range(errs.shape[1])],
        "verdict_velocity": vel,
        "verdict_spacing": spc,
        "stable": vel.get("stable"),
    }


def metrics_rows(scn, traj: Trajectory):
    spacing = metrics.spacing_error(traj).values
    tg = metrics.time_gap(traj).values
    sel = metrics.steady_window(traj.t, scn.window)
    rows = []
    for j in range(traj.n_vehicles - 1):
        lead = np.ptp(traj.v[sel, j])
        ratio = float(np.ptp(traj.v[sel, j + 1]) / lead) if lead >= 1e-9 else float("nan")
        steady_tg = tg[sel, j]
        rows.append([f"{j}-{j + 1}", j, j + 1,
                     float(np.max(np.abs(spacing[:, j]))),
                     float(np.ptp(spacing[sel, j])),
                     ratio,
                     float(np.min(traj.gaps[:, j])),
                     float(np.nanmean(steady_tg)) if np.isfinite(steady_tg).any() else float("nan")])
    return rows


METRIC_COLUMNS = ["pair", "leader", "follower", "peak_abs_spacing_error",
                  "steady_p2p_spacing_error", "velocity_amplification", "min_gap",
                  "steady_mean_time_gap"]


def render_plots(traj: Trajectory, outdir, tag: Dict[str, str], title: str = "") -> Dict[str, Path]:
    outdir = Path(outdir)
    spacing = metrics.spacing_error(traj).values
    n = traj.n_vehicles
    files = {}
    if n > 1:
        series = [(f"Cars {j}-{j + 1}", traj.t, spacing[:, j]) for j in range(n - 1)]
        text = svg.line_plot(series, title=f"{title} spacing error", ylabel="Spacing error (m)")
        files["spacing_svg"] = svg.write_svg(_tag_svg(text, tag), outdir / "spacing_error.svg")
    series = [(f"Vehicle {i}", traj.t, traj.v[:, i]) for i in range(n)]
    text = svg.line_plot(series, title=f"{title} velocity", ylabel="Velocity (m/s)")
    files["velocity_svg"] = svg.write_svg(_tag_svg(text, tag), outdir / "velocity.svg")
    return files


def _tag_svg(text: str, tag: Dict[str, str]) -> str:
    comment = "".join(f"<!-- {k}={v} -->\n" for k, v in tag.items())
    head, _, rest = text.partition("\n")
    return head + "\n" + comment + rest


def write_run_bundle(scn, traj: Trajectory, outdir, plots: Optional[bool] = None) -> RunBundle:
    """Write trajectory/metrics CSVs, verdict JSON, plots and provenance."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tag = {"scenario_sha256": scn.sha256}
    bundle = RunBundle(outdir)
    bundle.files["trajectory"] = csvio.write_trajectory_csv(traj, outdir / "trajectory.csv", tag)
    bundle.files["metrics"] = csvio.write_rows_csv(outdir / "metrics.csv", METRIC_COLUMNS,
                                                   metrics_rows(scn, traj), tag)
    bundle.verdict = summarize(scn, traj)
    path = outdir / "verdict.json"
    path.write_text(json.dumps(bundle.verdict, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    bundle.files["verdict"] = path
    if scn.plots if plots is None else plots:
        bundle.files.update(render_plots(traj, outdir, tag, scn.name))
    bundle.files["provenance"] = write_provenance(outdir, scn.sha256, {
        "scenario": scn.name, "source": scn.source, "dt": scn.platoon.dt,
        "assumed": sorted(k for k, v in scn.assumed.items() if v)})
    return bundle


def write_provenance(outdir, sha: str, extra: Dict) -> Path:
    record = {"toolkit": "platoonlab", "version": __version__, "scenario_sha256": sha,
              "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds")}
    record.update(extra)
    path = Path(outdir) / "provenance.json"
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def simulate_scenario(scn, outdir, plots: Optional[bool] = None) -> RunBundle:
    traj = run_simulation(scn.to_config())
    return write_run_bundle(scn, traj, outdir, plots)


def write_map_bundle(smap: StabilityMap, outdir, request_hash: str) -> RunBundle:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tag = {"request_sha256": request_hash}
    bundle = RunBundle(outdir)
    stem = f"map_{smap.condition}"
    bundle.files["map"] = csvio.write_map_csv(smap, outdir / f"{stem}.csv", tag)
    values = smap.values
    if values.ndim > 2:
        # fraction of stable cells along the trailing axes
        with np.errstate(invalid="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            values = np.nanmean(np.where(np.isnan(values), np.nan, (values >= 0).astype(float)),
                                axis=tuple(range(2, values.ndim))) - 0.5
    ax, ay = smap.axes[0], smap.axes[1]
    text = svg.heatmap(values, (ax.name, ax.lo, ax.hi), (ay.name, ay.lo, ay.hi),
                       title=f"Stability map: {smap.condition}")
    bundle.files["svg"] = svg.write_svg(_tag_svg(text, tag), outdir / f"{stem}.svg")
    stable = smap.mask
    bundle.verdict = {"condition": smap.condition, "request_sha256": request_hash,
                      "cells": int(smap.values.size),
                      "stable_cells": int(stable.sum()),
                      "undefined_cells": int(smap.undefined.sum())}
    path = outdir / f"{stem}.json"
    path.write_text(json.dumps(bundle.verdict, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    bundle.files["summary"] = path
    bundle.files["provenance"] = write_provenance(outdir, request_hash, {"condition": smap.condition})
    return bundle
