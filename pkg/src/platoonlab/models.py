"""Acceleration laws for the four car-following models.

Every function here is pure. Gaps are front-to-front distances
(leader position minus follower position). Two relative-speed
orientations appear and are kept apart by name:

* ``dv`` (IDM) is the closing speed ``v - v_lead``;
* ``dv_lead`` (GMM, linearizations) is ``v_lead - v``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import NamedTuple, Optional

from platoonlab.errors import CollisionError, ConfigError, DomainError

MODEL_KINDS = ("idm", "idm_spacing_only", "ovm", "gmm", "gmm_config1", "cacc")


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _finite(obj):
    for f in fields(obj):
        val = getattr(obj, f.name)
        if isinstance(val, float) and not math.isfinite(val):
            raise ConfigError(f"{type(obj).__name__}.{f.name} must be finite, got {val!r}")


@dataclass(frozen=True)
class IdmParams:
    """Intelligent Driver Model coefficients.

    ``jam_gap`` defaults to zero, which gives the homogeneous desired-gap
    form ``s0 + T v + v dv / (2 sqrt(a b))``.
    """

    max_accel: float = 1.0
    desired_speed: float = 30.0
    accel_exponent: float = 4.0
    comfort_decel: float = 1.5
    min_gap: float = 2.0
    jam_gap: float = 0.0
    time_headway: float = 1.5

    def __post_init__(self):
        _finite(self)
        _require(self.max_accel > 0, "max_accel must be > 0")
        _require(self.comfort_decel > 0, "comfort_decel must be > 0")
        _require(self.desired_speed > 0, "desired_speed must be > 0")
        _require(self.accel_exponent > 0, "accel_exponent must be > 0")
        _require(self.min_gap >= 0, "min_gap must be >= 0")
        _require(self.jam_gap >= 0, "jam_gap must be >= 0")
        _require(self.time_headway >= 0, "time_headway must be >= 0")


@dataclass(frozen=True)
class OvmParams:
    sensitivity: float = 0.5
    desired_speed: float = 22.0
    form_offset: float = 4.0

    def __post_init__(self):
        _finite(self)
        _require(self.sensitivity >= 0, "sensitivity must be >= 0")
        _require(self.desired_speed > 0, "desired_speed must be > 0")


@dataclass(frozen=True)
class GmmParams:
    """General Motors (GHR) model coefficients.

    The units of ``sensitivity`` depend on the exponents: the law returns
    m/s^2 only when ``sensitivity`` carries m^(l-m) s^(m-1). The value is
    used raw.
    """

    sensitivity: float = 1.5
    speed_exponent: float = 1.0
    spacing_exponent: float = 2.0

    def __post_init__(self):
        _finite(self)
        _require(self.sensitivity >= 0, "sensitivity must be >= 0")


@dataclass(frozen=True)
class CaccParams:
    k_p: float = 0.25
    k_d: float = 0.7
    k_v: float = 1.0
    k_a: float = 0.4
    comm_delay: float = 0.0
    standstill: float = 2.0
    time_headway: float = 1.5
    use_v2v: bool = True
    use_delay: bool = True

    def __post_init__(self):
        _finite(self)
        for name in ("k_p", "k_d", "k_v", "k_a"):
            _require(getattr(self, name) >= 0, f"{name} must be >= 0")
        _require(self.comm_delay >= 0, "comm_delay must be >= 0")
        _require(self.standstill >= 0, "standstill must be >= 0")
        _require(self.time_headway > 0, "time_headway must be > 0")
        _require(self.use_v2v or not self.use_delay or self.comm_delay == 0,
                 "a communication delay requires use_v2v")

    @property
    def effective_delay(self) -> float:
        return self.comm_delay if (self.use_v2v and self.use_delay) else 0.0


PARAMS_FOR_KIND = {
    "idm": IdmParams,
    "idm_spacing_only": IdmParams,
    "ovm": OvmParams,
    "gmm": GmmParams,
    "gmm_config1": GmmParams,
    "cacc": CaccParams,
}


class NeighborObservation(NamedTuple):
    """What a follower perceives of its leader at one instant."""

    gap: float
    lead_velocity: float
    lead_acceleration: float = 0.0
    delayed_lead_velocity: Optional[float] = None
    delayed_lead_acceleration: Optional[float] = None

    @property
    def lagged_velocity(self) -> float:
        v = self.delayed_lead_velocity
        return self.lead_velocity if v is None else v

    @property
    def lagged_acceleration(self) -> float:
        a = self.delayed_lead_acceleration
        return self.lead_acceleration if a is None else a


class LinearizedModel(NamedTuple):
    """Partial derivatives of an acceleration law at an operating point.

    ``f_dv`` is taken with respect to ``v_lead - v``.
    """

    f_v: float
    f_dv: float
    f_s: float


# -- OVM ---------------------------------------------------------------------

def ovm_optimal_velocity(dx: float, p: OvmParams) -> float:
    return p.desired_speed * (math.tanh(dx - p.form_offset) + math.tanh(p.form_offset))


def ovm_accel(v: float, dx: float, p: OvmParams) -> float:
    return p.sensitivity * (ovm_optimal_velocity(dx, p) - v)


def ovm_slope(dx: float, p: OvmParams) -> float:
    """Derivative of the optimal-velocity function, ``v0 sech^2(dx - h)``."""
    return p.desired_speed / math.cosh(dx - p.form_offset) ** 2


def ovm_linearization(dx_star: float, p: OvmParams) -> LinearizedModel:
    alpha = p.sensitivity
    return LinearizedModel(f_v=-alpha, f_dv=0.0, f_s=alpha * ovm_slope(dx_star, p))


# -- IDM ---------------------------------------------------------------------

def idm_desired_gap(v: float, dv: float, p: IdmParams) -> float:
    s = (p.min_gap + p.time_headway * v
         + v * dv / (2.0 * math.sqrt(p.max_accel * p.comfort_decel)))
    if p.jam_gap:
        s += p.jam_gap * math.sqrt(max(v, 0.0) / p.desired_speed)
    return max(0.0, s)


def idm_accel(v: float, dv: float, s: float, p: IdmParams) -> float:
    if not s > 0:
        raise CollisionError(s)
    s_star = idm_desired_gap(v, dv, p)
    return p.max_accel * (1.0 - (v / p.desired_speed) ** p.accel_exponent - (s_star / s) ** 2)


def idm_spacing_only_accel(v: float, dv: float, s: float, p: IdmParams) -> float:
    """IDM with the free-road term removed: ``a (1 - (s*/s)^2)``."""
    if not s > 0:
        raise CollisionError(s)
    s_star = idm_desired_gap(v, dv, p)
    return p.max_accel * (1.0 - (s_star / s) ** 2)


def idm_equilibrium_gap(v: float, p: IdmParams, spacing_only: bool = False) -> float:
    """Gap at which the follower neither accelerates nor brakes at speed ``v``."""
    s_star = idm_desired_gap(v, 0.0, p)
    if spacing_only:
        return s_star
    ratio = (v / p.desired_speed) ** p.accel_exponent
    if ratio >= 1.0:
        raise ConfigError(
            f"no IDM equilibrium: speed {v} is not below desired_speed {p.desired_speed}")
    return s_star / math.sqrt(1.0 - ratio)


def idm_linearization(v: float, s: float, p: IdmParams, dv: float = 0.0,
                      spacing_only: bool = False) -> LinearizedModel:
    """Analytic partials of the IDM law at (v, dv, s); dv is the closing speed."""
    a = p.max_accel
    sqrt_ab = math.sqrt(a * p.comfort_decel)
    s_star = idm_desired_gap(v, dv, p)
    ds_dv = p.time_headway + dv / (2.0 * sqrt_ab)
    ds_ddv = v / (2.0 * sqrt_ab)
    if s_star == 0.0:
        ds_dv = ds_ddv = 0.0
    f_v = -2.0 * a * s_star * ds_dv / s ** 2
    if not spacing_only:
        f_v -= a * p.accel_exponent * v ** (p.accel_exponent - 1.0) / p.desired_speed ** p.accel_exponent
    # closing speed is v - v_lead, so d/d(v_lead - v) flips the sign
    f_dv = 2.0 * a * s_star * ds_ddv / s ** 2
    f_s = 2.0 * a * s_star ** 2 / s ** 3
    return LinearizedModel(f_v=f_v, f_dv=f_dv, f_s=f_s)


# -- GMM ---------------------------------------------------------------------

def _gmm_core(alpha, m, l, v, gap, dv_lead):
    if l > 0 and not gap > 0:
        raise CollisionError(gap)
    if v < 0 and float(m) != int(m):
        raise DomainError(f"negative speed {v} with non-integer speed exponent {m}")
    return alpha * v ** m / gap ** l * dv_lead


def gmm_accel(v: float, gap: float, dv_lead: float, p: GmmParams) -> float:
    return _gmm_core(p.sensitivity, p.speed_exponent, p.spacing_exponent, v, gap, dv_lead)


def gmm_config1_accel(gap: float, dv_lead: float, alpha: float) -> float:
    """Reduced GMM with m = 0, l = 1: ``alpha * dv_lead / gap``."""
    if not gap > 0:
        raise CollisionError(gap)
    return alpha * 1.0 / gap ** 1 * dv_lead


def gmm_linearization(v: float, s: float, p: GmmParams, dv_lead: float = 0.0) -> LinearizedModel:
    alpha, m, l = p.sensitivity, p.speed_exponent, p.spacing_exponent
    base = alpha * v ** m / s ** l
    f_v = alpha * m * v ** (m - 1) / s ** l * dv_lead if dv_lead else 0.0
    return LinearizedModel(f_v=f_v, f_dv=base, f_s=-l * base / s * dv_lead)


# -- CACC --------------------------------------------------------------------

def cacc_desired_spacing(v: float, p: CaccParams) -> float:
    return p.standstill + p.time_headway * v


def cacc_spacing_error(gap: float, v: float, p: CaccParams,
                       v_lead: Optional[float] = None, a_self: float = 0.0):
    """Return ``(e, e_dot)`` with ``e = d_des(v) - gap``.

    ``e_dot`` is evaluated analytically as ``h a_self - (v_lead - v)``.
    """
    if v_lead is None:
        v_lead = v
    e = cacc_desired_spacing(v, p) - gap
    e_dot = p.time_headway * a_self - (v_lead - v)
    return e, e_dot


def cacc_accel(e: float, e_dot: float, v: float, obs: NeighborObservation,
               p: CaccParams) -> float:
    """Raw CACC control law ``k_p e + k_d e_dot + k_v (v_lead(t-tau) - v) + k_a a_lead(t-tau)``.

    With ``use_v2v`` off the last two terms vanish; with ``use_delay`` off the
    undelayed lead signals are used.
    """
    a = p.k_p * e + p.k_d * e_dot
    if p.use_v2v:
        if p.use_delay:
            vl, al = obs.lagged_velocity, obs.lagged_acceleration
        else:
            vl, al = obs.lead_velocity, obs.lead_acceleration
        a += p.k_v * (vl - v) + p.k_a * al
    return a


def cacc_closed_loop_accel(v: float, obs: NeighborObservation, p: CaccParams) -> float:
    """CACC acceleration with the spacing-error derivative resolved implicitly.

    The law is fed the gap excess ``gap - d_des(v)`` and its rate
    ``(v_lead - v) - h a``, where ``a`` is the acceleration being commanded.
    Because the law is affine in ``a`` the loop has the closed-form solution
    ``a = rest / (1 + k_d h)``.
    """
    excess = obs.gap - cacc_desired_spacing(v, p)
    rest = cacc_accel(excess, obs.lead_velocity - v, v, obs, p)
    return rest / (1.0 + p.k_d * p.time_headway)


# -- dispatch ----------------------------------------------------------------

def follower_accel(kind: str, params, v: float, obs: NeighborObservation) -> float:
    """Acceleration of a follower at speed ``v`` under model ``kind``."""
    if kind == "idm":
        return idm_accel(v, v - obs.lead_velocity, obs.gap, params)
    if kind == "idm_spacing_only":
        return idm_spacing_only_accel(v, v - obs.lead_velocity, obs.gap, params)
    if kind == "ovm":
        return ovm_accel(v, obs.gap, params)
    if kind == "gmm":
        return gmm_accel(v, obs.gap, obs.lead_velocity - v, params)
    if kind == "gmm_config1":
        return gmm_config1_accel(obs.gap, obs.lead_velocity - v, params.sensitivity)
    if kind == "cacc":
        return cacc_closed_loop_accel(v, obs, params)
    raise ConfigError(f"unknown model kind {kind!r}")


def check_params(kind: str, params) -> None:
    if kind not in PARAMS_FOR_KIND:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    expected = PARAMS_FOR_KIND[kind]
    if not isinstance(params, expected):
        raise ConfigError(f"model {kind!r} needs {expected.__name__}, got {type(params).__name__}")
    if kind == "gmm_config1" and (params.speed_exponent != 0 or params.spacing_exponent != 1):
        raise ConfigError("gmm_config1 fixes speed_exponent=0 and spacing_exponent=1")


def equilibrium_gap(kind: str, params, v: float) -> Optional[float]:
    """Steady-state gap at speed ``v``; ``None`` when every gap is an equilibrium (GMM)."""
    if kind in ("idm", "idm_spacing_only"):
        return idm_equilibrium_gap(v, params, spacing_only=kind == "idm_spacing_only")
    if kind == "ovm":
        arg = v / params.desired_speed - math.tanh(params.form_offset)
        if abs(arg) >= 1.0:
            raise ConfigError(f"speed {v} is outside the optimal-velocity range")
        return params.form_offset + math.atanh(arg)
    if kind == "cacc":
        return cacc_desired_spacing(v, params)
    return None
