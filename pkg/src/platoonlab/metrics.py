"""Spacing errors, time gaps and string-stability verdicts from trajectories.

Spacing errors always use the ``actual - desired`` convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from platoonlab import models
from platoonlab.errors import ConfigError, EmptyWindowError, UndefinedRatioError
from platoonlab.stability import steady_window

CONVENTION = "actual_minus_desired"
DEFAULT_TOL = 5e-2
MIN_SPEED = 1e-6


@dataclass
class SpacingErrorSeries:
    """``values[:, j]`` is the error of pair ``(j, j+1)``."""

    t: np.ndarray
    values: np.ndarray
    reference: str
    convention: str = CONVENTION


@dataclass
class TimeGapSeries:
    """``(gap - L) / v`` of each follower; NaN where ``v <= 1e-6``."""

    t: np.ndarray
    values: np.ndarray
    vehicle_length: float


def idm_desired_gaps(v: np.ndarray, dv: np.ndarray, p: models.IdmParams) -> np.ndarray:
    s = p.min_gap + p.time_headway * v + v * dv / (2.0 * math.sqrt(p.max_accel * p.comfort_decel))
    if p.jam_gap:
        s = s + p.jam_gap * np.sqrt(np.maximum(v, 0.0) / p.desired_speed)
    return np.maximum(s, 0.0)


def spacing_error(traj) -> SpacingErrorSeries:
    """Per-pair ``gap - desired`` with a model-specific desired gap.

    IDM: the dynamic desired gap ``s*(v, v - v_lead)`` shifted by the
    constant ``s_e - s*(v_e, 0)`` so that an equilibrium run reads zero.
    CACC: the constant-time-headway spacing ``r + h v``. OVM and GMM: the
    initial spacing ``s_e``.
    """
    cfg = traj.config
    gaps = traj.gaps
    follower_v = traj.v[:, 1:]
    kind = cfg.model
    if kind in ("idm", "idm_spacing_only"):
        p = cfg.params
        closing = follower_v - traj.v[:, :-1]
        offset = traj.initial_gap - models.idm_desired_gap(cfg.equilibrium_speed, 0.0, p)
        desired = idm_desired_gaps(follower_v, closing, p) + offset
        ref = f"idm s*(v, dv) + {offset!r}"
    elif kind == "cacc":
        p = cfg.params
        desired = p.standstill + p.time_headway * follower_v
        ref = "cacc r + h v"
    else:
        desired = np.full_like(gaps, traj.initial_gap)
        ref = f"initial spacing {traj.initial_gap!r}"
    return SpacingErrorSeries(traj.t, gaps - desired, ref)


def time_gap(traj, vehicle_length: Optional[float] = None) -> TimeGapSeries:
    L = traj.config.vehicle_length if vehicle_length is None else vehicle_length
    v = traj.v[:, 1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        th = (traj.gaps - L) / v
    th = np.where(v > MIN_SPEED, th, np.nan)
    return TimeGapSeries(traj.t, th, L)


def peak_to_peak(series, window=None) -> float:
    """``max - min`` of ``series`` over ``window`` (a slice, index array or mask)."""
    arr = np.asarray(series, dtype=float)
    if window is not None:
        arr = arr[window]
    if arr.size == 0:
        raise EmptyWindowError("peak_to_peak over an empty window")
    return float(np.max(arr) - np.min(arr))


def period_peak_to_peak(series, t, period: float, start: float = 0.0) -> List[float]:
    """Peak-to-peak of ``series`` over consecutive full periods from ``start``."""
    t = np.asarray(t)
    out = []
    k = 0
    while start + (k + 1) * period <= t[-1] + 1e-9:
        lo, hi = start + k * period, start + (k + 1) * period
        out.append(peak_to_peak(series, (t >= lo - 1e-9) & (t < hi - 1e-9)))
        k += 1
    return out


@dataclass
class Verdict:
    ratios: List[float]
    stable: bool
    basis: str
    tol: float
    window: tuple

    def to_dict(self):
        return {"basis": self.basis, "tol": self.tol, "window": list(self.window),
                "ratios": list(self.ratios), "stable": self.stable}


def string_stability_verdict(traj, tol: float = DEFAULT_TOL, window=None,
                             basis: str = "velocity") -> Verdict:
    """Consecutive-pair amplification over the steady window.

    ``basis="velocity"`` compares each follower's velocity peak-to-peak with
    its predecessor's (one ratio per follower). ``basis="spacing"`` compares
    each pair's spacing-error peak-to-peak with the pair ahead (needs at
    least three vehicles). Stable iff every ratio is ``<= 1 + tol``.
    """
    sel = steady_window(traj.t, window)
    if not sel.any():
        raise EmptyWindowError("verdict window is empty")
    if basis == "velocity":
        series = traj.v
    elif basis == "spacing":
        if traj.n_vehicles < 3:
            raise ConfigError("spacing-basis verdict needs at least 3 vehicles")
        series = spacing_error(traj).values
    else:
        raise ConfigError(f"unknown basis {basis!r}")
    p2p = [peak_to_peak(series[:, j], sel) for j in range(series.shape[1])]
    if p2p[0] < 1e-9:
        raise UndefinedRatioError(f"lead oscillation {p2p[0]:.3g} is below 1e-9")
    ratios = []
    for j in range(1, len(p2p)):
        if p2p[j - 1] < 1e-9:
            raise UndefinedRatioError(f"oscillation of series {j - 1} is below 1e-9")
        ratios.append(p2p[j] / p2p[j - 1])
    t_sel = traj.t[sel]
    return Verdict(ratios, all(r <= 1.0 + tol for r in ratios), basis, tol,
                   (float(t_sel[0]), float(t_sel[-1])))
