"""Linearized string-stability analytics and parameter-space stability maps.

Frequency-response helpers accept scalars or numpy arrays for ``omega``
and return a float for scalar input.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from platoonlab.errors import ConfigError, DomainError, SingularityError, UndefinedRatioError
from platoonlab.models import CaccParams, IdmParams, LinearizedModel, OvmParams

CRITICAL_TOL = 1e-9
SCAN_OMEGA_MAX = 100.0
SCAN_POINTS = 100_000


class OscillatorParams(NamedTuple):
    damping_ratio: float
    natural_frequency: float


class ForcedResponse(NamedTuple):
    """Steady response ``A cos(wt) + B sin(wt)`` to unit cosine forcing."""

    in_phase: float
    out_of_phase: float

    @property
    def amplitude(self) -> float:
        return math.hypot(self.in_phase, self.out_of_phase)


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


# -- generic oscillator --------------------------------------------------------

def oscillator_from_linearization(lin: LinearizedModel) -> OscillatorParams:
    """Map gap-dynamics partials onto ``y'' + 2 xi w0 y' + w0^2 y = 0``."""
    if not lin.f_s > 0:
        raise DomainError(f"no oscillator form for f_s={lin.f_s!r} "
                          f"(f_v={lin.f_v!r}, f_dv={lin.f_dv!r})")
    w0 = math.sqrt(lin.f_s)
    return OscillatorParams((lin.f_dv - lin.f_v) / (2.0 * w0), w0)


def eigenvalues(p: OscillatorParams) -> Tuple[complex, complex]:
    xi, w0 = p
    root = cmath.sqrt(xi * xi - 1.0)
    return w0 * (-xi + root), w0 * (-xi - root)


def classify_damping(xi: float, tol: float = CRITICAL_TOL) -> str:
    if not math.isfinite(xi):
        raise DomainError(f"damping ratio must be finite, got {xi!r}")
    if xi <= 0:
        return "unstable"
    if abs(xi - 1.0) <= tol:
        return "critical"
    return "underdamped" if xi < 1.0 else "overdamped"


def forced_response(p: OscillatorParams, omega: float) -> ForcedResponse:
    xi, w0 = p
    det = w0 * w0 - omega * omega
    cross = 2.0 * xi * w0 * omega
    d = det * det + cross * cross
    if d == 0.0:
        raise SingularityError(f"undamped resonance at omega={omega!r}")
    return ForcedResponse(det / d, cross / d)


# -- IDM -----------------------------------------------------------------------

def _idm_damping(v, dv, T, a, b, d, vd):
    return (-dv / (2.0 * T * T * b)
            + a * d * v ** d / (v * vd ** d)
            - math.sqrt(a) / (T * math.sqrt(b))
            + (dv + 2.0 * T * math.sqrt(a * b)) ** 2 / (2.0 * T * T * b * v))


def idm_damping_term(v, dv, p: IdmParams):
    """Closed-form damping expression whose positivity marks the stable region.

    Evaluated exactly as the reference closed form; note that it is not the
    derivative of the IDM law itself (see :func:`models.idm_linearization`).
    """
    if not (p.time_headway > 0 and p.comfort_decel > 0):
        raise DomainError("time_headway and comfort_decel must be > 0")
    v = np.asarray(v, dtype=float)
    dv = np.asarray(dv, dtype=float)
    if np.any(v <= 0):
        raise DomainError("damping term is undefined at v <= 0")
    return _scalar(_idm_damping(v, dv, p.time_headway, p.max_accel, p.comfort_decel,
                                p.accel_exponent, p.desired_speed))


# -- OVM -----------------------------------------------------------------------

def ovm_lambda(dx_star, p: OvmParams = OvmParams()):
    """Slope of the optimal-velocity function at the equilibrium gap."""
    c = np.cosh(np.asarray(dx_star, dtype=float) - p.form_offset)
    return _scalar(p.desired_speed / (c * c))


def ovm_stability_metric(dx_star, alpha, p: OvmParams = OvmParams()):
    """``S = alpha - 2 v0 sech^2(dx* - h)``; stable iff ``S >= 0``."""
    return _scalar(np.asarray(alpha, dtype=float) - 2.0 * np.asarray(ovm_lambda(dx_star, p)))


def ovm_transfer_magnitude(omega, alpha, lam):
    w = np.asarray(omega, dtype=float)
    al = alpha * lam
    return _scalar(al / np.sqrt((al - w * w) ** 2 + (alpha * w) ** 2))


# -- GMM -----------------------------------------------------------------------

def gmm_stability_condition(alpha: float, l: float, s_star: float) -> Tuple[float, bool]:
    if not s_star > 0:
        raise DomainError(f"s_star must be > 0, got {s_star!r}")
    crit = l / s_star
    return crit, bool(alpha <= crit)


def gmm_transfer_magnitude(omega, alpha, m, l, v_star, s_star):
    """Magnitude of the refined GMM transfer function in its reference form."""
    if not s_star > 0:
        raise DomainError(f"s_star must be > 0, got {s_star!r}")
    c1 = alpha * v_star ** m / s_star ** l
    c2 = alpha * l * v_star ** m / s_star ** (l + 1)
    jw = 1j * np.asarray(omega, dtype=float)
    den = np.abs(jw * jw + c1 * jw + c2)
    if np.any(den < 1e-15):
        raise SingularityError("GMM transfer denominator vanishes")
    return _scalar(np.abs(c1 * jw + c2) / den)


# -- CACC ----------------------------------------------------------------------

def _cacc_gains(p: CaccParams):
    kv, ka = (p.k_v, p.k_a) if p.use_v2v else (0.0, 0.0)
    return p.k_p, p.k_d, kv, ka, p.effective_delay


def cacc_transfer_magnitude(omega, p: CaccParams, include_headway: bool = False):
    """Spacing-error propagation magnitude ``|G(jw)|``.

    The default is the reference form, which treats the spacing policy as
    constant. ``include_headway`` adds the time-headway terms that the
    simulated closed loop (error ``gap - r - h v``) actually has.
    """
    kp, kd, kv, ka, tau = _cacc_gains(p)
    s = 1j * np.asarray(omega, dtype=float)
    lag = np.exp(-s * tau)
    num = kp + kd * s + (kv * s + ka * s * s) * lag
    if include_headway:
        h = p.time_headway
        den = (1.0 + kd * h) * s * s + (kp * h + kd + kv) * s + kp
    else:
        den = s * s + kp + kd * s + kv * s * lag
    mag = np.abs(den)
    if np.any(mag < 1e-15):
        raise SingularityError("CACC transfer denominator vanishes")
    return _scalar(np.abs(num) / mag)


def cacc_no_delay_conditions(p: CaccParams, omega0_ref: float) -> Tuple[bool, bool]:
    if omega0_ref == 0:
        raise DomainError("omega0_ref must be nonzero")
    first = p.k_a <= p.k_v / 2.0
    second = p.k_v >= 2.0 * p.k_d - p.k_p / omega0_ref ** 2
    return bool(first), bool(second)


def cacc_delay_argument(k_p, k_v, k_a, omega_c):
    return (k_v * omega_c ** 2 - k_a * omega_c ** 4 - k_p) / (k_v * omega_c ** 3)


def cacc_critical_delay(p: CaccParams, omega_c: float) -> float:
    if not omega_c > 0:
        raise DomainError(f"omega_c must be > 0, got {omega_c!r}")
    if p.k_v == 0:
        raise DomainError("critical delay needs k_v > 0")
    arg = cacc_delay_argument(p.k_p, p.k_v, p.k_a, omega_c)
    if not -1.0 <= arg <= 1.0:
        raise DomainError(f"arccos argument {arg!r} outside [-1, 1]")
    return math.acos(arg) / omega_c


# -- suprema -------------------------------------------------------------------

def sup_magnitude(mag: Callable, omega_max: float = SCAN_OMEGA_MAX,
                  n: int = SCAN_POINTS, omega_min: float = 1e-4) -> Tuple[float, float]:
    """Estimate ``sup |G(jw)|`` over ``(0, omega_max]``.

    ``mag`` must accept an array of frequencies. A log-spaced scan locates
    the peak, which is then polished with a bounded scalar search.
    Returns ``(omega_peak, value)``.
    """
    w = np.geomspace(omega_min, omega_max, n)
    g = np.asarray(mag(w))
    k = int(np.argmax(g))
    best_w, best = float(w[k]), float(g[k])
    lo, hi = w[max(k - 1, 0)], w[min(k + 1, n - 1)]
    if hi > lo:
        res = minimize_scalar(lambda x: -float(mag(x)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, hi)})
        if -res.fun > best:
            best_w, best = float(res.x), float(-res.fun)
    return best_w, best


# -- empirical -----------------------------------------------------------------

def steady_window(t: np.ndarray, window=None) -> np.ndarray:
    """Boolean mask for ``window=(start, stop)``; default is the last half."""
    if window is None:
        start = t[0] + 0.5 * (t[-1] - t[0])
        return t >= start
    lo, hi = window
    return (t >= lo) & (t <= hi)


def empirical_amplification(traj, pair: int, window=None) -> float:
    """Velocity peak-to-peak of follower ``pair`` over that of vehicle ``pair - 1``."""
    if not 1 <= pair < traj.n_vehicles:
        raise ConfigError(f"pair must be in [1, {traj.n_vehicles - 1}]")
    sel = steady_window(traj.t, window)
    if not sel.any():
        raise ConfigError("empty window")
    lead = np.ptp(traj.v[sel, pair - 1])
    if lead < 1e-9:
        raise UndefinedRatioError(f"leader peak-to-peak {lead:.3g} is below 1e-9")
    return float(np.ptp(traj.v[sel, pair]) / lead)


# -- stability maps ------------------------------------------------------------

@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    resolution: int

    def __post_init__(self):
        if not (isinstance(self.resolution, int) and self.resolution >= 1):
            raise ConfigError(f"axis {self.name!r}: resolution must be a positive integer")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.hi >= self.lo):
            raise ConfigError(f"axis {self.name!r}: need finite lo <= hi")

    def values(self) -> np.ndarray:
        if self.resolution == 1:
            return np.array([self.lo])
        return np.linspace(self.lo, self.hi, self.resolution)


@dataclass
class StabilityMap:
    """Condition metric on a grid; ``values[i, j, ...]`` follows ``axes`` order.

    Cells where the metric is undefined hold NaN and are neither stable nor
    unstable.
    """

    condition: str
    axes: Tuple[Axis, ...]
    values: np.ndarray
    fixed: Dict[str, float] = field(default_factory=dict)

    @property
    def mask(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return self.values >= 0

    @property
    def undefined(self) -> np.ndarray:
        return np.isnan(self.values)

    def coords(self):
        return [a.values() for a in self.axes]


class Condition(NamedTuple):
    axes: Tuple[Axis, ...]
    fixed: Dict[str, float]
    metric: Callable
    description: str


def _idm_metric(g, f):
    T = g["T"]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = _idm_damping(f["v"], g["dv"], T, f["max_accel"], f["comfort_decel"],
                           f["accel_exponent"], f["desired_speed"])
    return np.where(T > 0, out, np.nan)


def _ovm_metric(g, f):
    p = OvmParams(desired_speed=f["v0"], form_offset=f["h"])
    return ovm_stability_metric(g["dx_star"], g["alpha"], p)


def _gmm_metric(g, f):
    return g["l"] / f["s_star"] - g["alpha"]


def _cacc_metric(g, f):
    kv, ka = g["k_v"], g["k_a"]
    first = kv / 2.0 - ka
    second = kv - (2.0 * f["k_d"] - f["k_p"] / f["omega0_ref"] ** 2)
    return np.minimum(first, second)


def _cacc_delay_metric(g, f):
    kv, ka, wc = g["k_v"], g["k_a"], g["omega_c"]
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = cacc_delay_argument(f["k_p"], kv, ka, wc)
        tau_max = np.arccos(np.where(np.abs(arg) <= 1.0, arg, np.nan)) / wc
    return tau_max - f["tau"]


def _cacc_transfer_metric(g, f):
    kv, ka = g["k_v"], g["k_a"]
    w = np.geomspace(1e-3, SCAN_OMEGA_MAX, int(f["scan_points"]))
    s = 1j * w
    lag = np.exp(-s * f["tau"])
    kp, kd = f["k_p"], f["k_d"]
    out = np.empty(kv.shape)
    flat_v, flat_a, flat_o = kv.ravel(), ka.ravel(), out.reshape(-1)
    for lo in range(0, flat_v.size, 512):
        v = flat_v[lo:lo + 512, None]
        a = flat_a[lo:lo + 512, None]
        num = np.abs(kp + kd * s + (v * s + a * s * s) * lag)
        den = np.abs(s * s + kp + kd * s + v * s * lag)
        with np.errstate(divide="ignore", invalid="ignore"):
            flat_o[lo:lo + 512] = 1.0 - np.max(num / den, axis=1)
    return out


def _constant_metric(g, f):
    first = next(iter(g.values()))
    return np.full(first.shape, float(f["value"]))


CONDITIONS: Dict[str, Condition] = {
    "idm": Condition(
        (Axis("dv", -10.0, 10.0, 200), Axis("T", 0.5, 3.0, 200)),
        {"v": 27.8, "max_accel": 1.0, "desired_speed": 30.0, "accel_exponent": 4.0,
         "comfort_decel": 1.5},
        _idm_metric, "IDM damping term over (dv, T)"),
    "ovm": Condition(
        (Axis("dx_star", 0.0, 50.0, 200), Axis("alpha", 0.0, 3.0, 200)),
        {"v0": 22.0, "h": 4.0}, _ovm_metric, "OVM metric S over (dx*, alpha)"),
    "gmm": Condition(
        (Axis("l", 0.0, 4.0, 200), Axis("alpha", 0.0, 1.0, 200)),
        {"s_star": 6.0}, _gmm_metric, "GMM margin l/s* - alpha over (l, alpha)"),
    "cacc": Condition(
        (Axis("k_v", 0.0, 3.0, 200), Axis("k_a", 0.0, 1.5, 200)),
        {"k_p": 0.25, "k_d": 0.7, "omega0_ref": 1.0}, _cacc_metric,
        "CACC no-delay conditions over (k_v, k_a)"),
    "cacc_delay": Condition(
        (Axis("k_v", 0.1, 3.0, 64), Axis("k_a", 0.0, 1.5, 64), Axis("omega_c", 0.1, 3.0, 64)),
        {"k_p": 0.25, "tau": 0.15}, _cacc_delay_metric,
        "CACC delay margin tau_max - tau over (k_v, k_a, omega_c)"),
    "cacc_transfer": Condition(
        (Axis("k_v", 0.0, 3.0, 200), Axis("k_a", 0.0, 1.5, 200)),
        {"k_p": 0.25, "k_d": 0.7, "tau": 0.15, "scan_points": 400.0}, _cacc_transfer_metric,
        "CACC 1 - sup|G| over (k_v, k_a)"),
    "constant": Condition(
        (Axis("x", 0.0, 1.0, 10), Axis("y", 0.0, 1.0, 10)),
        {"value": 1.0}, _constant_metric, "all-stable toy condition"),
}


def build_stability_map(condition: str, axes: Optional[Sequence[Axis]] = None,
                        fixed: Optional[Dict[str, float]] = None,
                        resolution: Optional[int] = None) -> StabilityMap:
    """Evaluate a named condition on a row-major grid.

    ``axes`` replaces the condition's default axes (names must match);
    ``resolution`` overrides every axis's resolution; ``fixed`` overrides
    individual fixed parameters.
    """
    if condition not in CONDITIONS:
        raise ConfigError(f"unknown condition {condition!r}; expected one of {sorted(CONDITIONS)}")
    cond = CONDITIONS[condition]
    use_axes = tuple(axes) if axes is not None else cond.axes
    if sorted(a.name for a in use_axes) != sorted(a.name for a in cond.axes):
        raise ConfigError(f"condition {condition!r} needs axes {[a.name for a in cond.axes]}")
    if resolution is not None:
        use_axes = tuple(Axis(a.name, a.lo, a.hi, resolution) for a in use_axes)
    params = dict(cond.fixed)
    for key, val in (fixed or {}).items():
        if key not in params:
            raise ConfigError(f"condition {condition!r} has no fixed parameter {key!r}")
        params[key] = float(val)
    grids = np.meshgrid(*[a.values() for a in use_axes], indexing="ij")
    g = {a.name: grid for a, grid in zip(use_axes, grids)}
    values = np.asarray(cond.metric(g, params), dtype=float)
    values = np.where(np.isfinite(values), values, np.nan)
    return StabilityMap(condition, use_axes, values, params)
