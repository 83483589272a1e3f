"""Fixed-step platoon integration with delayed-information lookups.

The leader's velocity is prescribed (equilibrium speed plus a perturbation);
followers obey one car-following law. The state is advanced with classical
RK4 (or explicit Euler as a reference scheme). Delayed signals are read from
per-vehicle :class:`HistoryBuffer` objects once per step, at the step's start
time minus the delay, and held fixed across the RK stages (method of steps).
Histories are pre-filled with steady motion at the equilibrium speed, so
lookups before ``t = 0`` are always defined.
"""
from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from platoonlab import models, perturb
from platoonlab.errors import CollisionError, ConfigError, DomainError
from platoonlab.models import NeighborObservation
from platoonlab.perturb import PerturbationSpec

log = logging.getLogger(__name__)

SCHEMES = ("rk4", "euler")
EQUILIBRIUM_TOL = 1e-9


class VehicleState(NamedTuple):
    x: float
    v: float
    a: float = 0.0


class Event(NamedTuple):
    t: float
    kind: str
    vehicle: int
    detail: str = ""


@dataclass(frozen=True)
class PlatoonConfig:
    """Everything needed to run one platoon simulation.

    ``equilibrium_gap`` may be omitted when ``auto_equilibrium`` is set and the
    model has a speed-determined equilibrium gap (IDM, OVM, CACC). The
    ``response_delay`` lags every input of the IDM/OVM/GMM laws; CACC uses its
    own ``comm_delay`` on the V2V terms instead.
    """

    model: str
    params: object
    equilibrium_speed: float
    equilibrium_gap: Optional[float] = None
    n_vehicles: int = 5
    auto_equilibrium: bool = False
    vehicle_length: float = 5.0
    response_delay: float = 0.0
    perturbation: PerturbationSpec = perturb.NONE
    dt: float = 0.01
    t_end: float = 60.0
    scheme: str = "rk4"
    abort_on_collision: bool = True

    def __post_init__(self):
        models.check_params(self.model, self.params)
        if not isinstance(self.n_vehicles, int) or self.n_vehicles < 1:
            raise ConfigError("n_vehicles must be an integer >= 1")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError("dt must be > 0")
        if not (math.isfinite(self.t_end) and self.t_end > self.dt):
            raise ConfigError("t_end must exceed dt")
        if not (math.isfinite(self.equilibrium_speed) and self.equilibrium_speed >= 0):
            raise ConfigError("equilibrium_speed must be >= 0")
        if self.equilibrium_gap is not None and not self.equilibrium_gap > 0:
            raise ConfigError("equilibrium_gap must be > 0")
        if self.equilibrium_gap is None and not self.auto_equilibrium and self.n_vehicles > 1:
            raise ConfigError("equilibrium_gap is required unless auto_equilibrium is set")
        if not self.vehicle_length >= 0:
            raise ConfigError("vehicle_length must be >= 0")
        if not (math.isfinite(self.response_delay) and self.response_delay >= 0):
            raise ConfigError("response_delay must be >= 0")
        if self.model == "cacc" and self.response_delay > 0:
            raise ConfigError("response_delay applies to idm/ovm/gmm; use comm_delay for cacc")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_end / self.dt + 1e-9))

    @property
    def max_delay(self) -> float:
        if self.model == "cacc":
            return self.params.effective_delay
        return self.response_delay

    def resolved_gap(self) -> float:
        """Initial (and, when consistent, equilibrium) spacing between vehicles."""
        if self.auto_equilibrium:
            gap = models.equilibrium_gap(self.model, self.params, self.equilibrium_speed)
            if gap is not None:
                if not gap > 0:
                    raise ConfigError(f"equilibrium gap {gap} is not positive")
                return gap
        if self.equilibrium_gap is None:
            if self.n_vehicles == 1:
                return 1.0
            raise ConfigError(f"model {self.model!r} needs an explicit equilibrium_gap")
        return self.equilibrium_gap

    def with_(self, **changes) -> "PlatoonConfig":
        return replace(self, **changes)


class HistoryBuffer:
    """Time-ordered samples of one vehicle's state with linear interpolation.

    Only samples newer than ``span`` before the latest one are guaranteed to
    be kept. Queries earlier than the first retained sample return the
    pre-fill state: steady motion at ``prefill.v`` through the first sample.
    """

    def __init__(self, prefill: VehicleState, span: float = math.inf):
        self.prefill = prefill
        self.span = span
        self._t: List[float] = []
        self._s: List[VehicleState] = []
        self._trimmed = False

    def __len__(self):
        return len(self._t)

    def append(self, t: float, state: VehicleState) -> None:
        if self._t and not t > self._t[-1]:
            raise ValueError(f"history timestamps must increase: {t} after {self._t[-1]}")
        self._t.append(t)
        self._s.append(state)
        if len(self._t) > 64 and self._t[-1] - self._t[len(self._t) // 2] > self.span:
            cut = bisect.bisect_left(self._t, self._t[-1] - self.span) - 1
            if cut > 0:
                del self._t[:cut]
                del self._s[:cut]
                self._trimmed = True

    def lookup(self, t_query: float) -> VehicleState:
        ts = self._t
        if not ts:
            return self.prefill
        if t_query <= ts[0]:
            if t_query == ts[0]:
                return self._s[0]
            if self._trimmed:
                raise ValueError(f"query {t_query} precedes the retained history")
            first = self._s[0]
            v = self.prefill.v
            return VehicleState(first.x + v * (t_query - ts[0]), v, self.prefill.a)
        if t_query >= ts[-1]:
            return self._s[-1]
        j = bisect.bisect_right(ts, t_query)
        t0, t1 = ts[j - 1], ts[j]
        s0, s1 = self._s[j - 1], self._s[j]
        if t_query == t0:
            return s0
        w = (t_query - t0) / (t1 - t0)
        return VehicleState(s0.x + w * (s1.x - s0.x),
                            s0.v + w * (s1.v - s0.v),
                            s0.a + w * (s1.a - s0.a))


def delayed_lookup(buf: HistoryBuffer, t_query: float) -> VehicleState:
    return buf.lookup(t_query)


@dataclass
class Trajectory:
    """Recorded platoon motion on a uniform time grid.

    ``x``, ``v`` and ``a`` have shape ``(len(t), n_vehicles)``; vehicle 0 is
    the leader. ``a`` holds the commanded accelerations.
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    config: PlatoonConfig
    initial_gap: float
    events: List[Event] = field(default_factory=list)
    aborted: bool = False
    flags: tuple = ()

    @property
    def n_vehicles(self) -> int:
        return self.x.shape[1]

    @property
    def gaps(self) -> np.ndarray:
        """Front-to-front gaps ``x[i-1] - x[i]``; column ``j`` is pair ``(j, j+1)``."""
        return self.x[:, :-1] - self.x[:, 1:]

    def gap_deviation(self) -> np.ndarray:
        return self.gaps - self.initial_gap

    def velocity_deviation(self) -> np.ndarray:
        return self.v - self.config.equilibrium_speed


def equilibrium_init(cfg: PlatoonConfig, offset: float = 0.0) -> List[VehicleState]:
    """Vehicles at the resolved spacing, all at the equilibrium speed, leader first."""
    gap = cfg.resolved_gap()
    v = cfg.equilibrium_speed
    return [VehicleState(offset - i * gap, v, 0.0) for i in range(cfg.n_vehicles)]


def initial_accelerations(cfg: PlatoonConfig, states: Sequence[VehicleState]) -> List[float]:
    """Follower accelerations implied by the state alone (steady leader)."""
    out = []
    for i in range(1, len(states)):
        lead, own = states[i - 1], states[i]
        obs = NeighborObservation(lead.x - own.x, lead.v, 0.0)
        out.append(models.follower_accel(cfg.model, cfg.params, own.v, obs))
    return out


class _Dynamics:
    """Right-hand side of the platoon ODE for one configuration."""

    def __init__(self, cfg: PlatoonConfig, histories: Sequence[HistoryBuffer]):
        self.cfg = cfg
        self.kind = cfg.model
        self.params = cfg.params
        self.histories = histories
        self.v_e = cfg.equilibrium_speed
        self.spec = cfg.perturbation
        if cfg.model == "cacc":
            self.comm_delay = cfg.params.effective_delay
            self.response_delay = 0.0
        else:
            self.comm_delay = 0.0
            self.response_delay = cfg.response_delay

    def leader_v(self, t):
        return perturb.leader_velocity(self.v_e, self.spec, t)

    def leader_a(self, t):
        return perturb.leader_acceleration(self.v_e, self.spec, t)

    def accelerations(self, t, xs, vs, t_hist=None):
        """Accelerations at stage time ``t``; delayed inputs are read at ``t_hist - delay``."""
        kind, params = self.kind, self.params
        if t_hist is None:
            t_hist = t
        law = models.follower_accel
        acc = [self.leader_a(t)]
        n = len(xs)
        if self.response_delay > 0:
            q = t_hist - self.response_delay
            prev = self.histories[0].lookup(q)
            for i in range(1, n):
                own = self.histories[i].lookup(q)
                obs = NeighborObservation(prev.x - own.x, prev.v, prev.a)
                acc.append(law(kind, params, max(own.v, 0.0), obs))
                prev = own
            return acc
        if self.comm_delay > 0:
            q = t_hist - self.comm_delay
            for i in range(1, n):
                lag = self.histories[i - 1].lookup(q)
                obs = NeighborObservation(xs[i - 1] - xs[i], vs[i - 1], acc[i - 1], lag.v, lag.a)
                acc.append(law(kind, params, max(vs[i], 0.0), obs))
            return acc
        for i in range(1, n):
            obs = NeighborObservation(xs[i - 1] - xs[i], vs[i - 1], acc[i - 1])
            acc.append(law(kind, params, max(vs[i], 0.0), obs))
        return acc


def _rk4(dyn, t, dt, xs, vs, a1):
    h2 = 0.5 * dt
    n = len(xs)
    lv_mid = dyn.leader_v(t + h2)
    lv_end = dyn.leader_v(t + dt)
    x2 = [xs[i] + h2 * vs[i] for i in range(n)]
    v2 = [vs[i] + h2 * a1[i] for i in range(n)]
    v2[0] = lv_mid
    a2 = dyn.accelerations(t + h2, x2, v2, t)
    x3 = [xs[i] + h2 * v2[i] for i in range(n)]
    v3 = [vs[i] + h2 * a2[i] for i in range(n)]
    v3[0] = lv_mid
    a3 = dyn.accelerations(t + h2, x3, v3, t)
    x4 = [xs[i] + dt * v3[i] for i in range(n)]
    v4 = [vs[i] + dt * a3[i] for i in range(n)]
    v4[0] = lv_end
    a4 = dyn.accelerations(t + dt, x4, v4, t)
    s = dt / 6.0
    new_x = [xs[i] + s * (vs[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]) for i in range(n)]
    new_v = [vs[i] + s * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]) for i in range(n)]
    new_v[0] = lv_end
    return new_x, new_v


def _euler(dyn, t, dt, xs, vs, a1):
    n = len(xs)
    new_x = [xs[i] + dt * vs[i] for i in range(n)]
    new_v = [vs[i] + dt * a1[i] for i in range(n)]
    new_v[0] = dyn.leader_v(t + dt)
    return new_x, new_v


_SCHEME_FN = {"rk4": _rk4, "euler": _euler}


def make_histories(cfg: PlatoonConfig, states: Sequence[VehicleState]) -> List[HistoryBuffer]:
    span = cfg.max_delay + 2.0 * cfg.dt
    return [HistoryBuffer(VehicleState(s.x, cfg.equilibrium_speed, 0.0), span) for s in states]


def step_platoon(states: Sequence[VehicleState], histories: Sequence[HistoryBuffer],
                 cfg: PlatoonConfig, t: float) -> List[VehicleState]:
    """Advance the platoon from ``t`` to ``t + dt``.

    ``histories`` must already hold the samples at ``t``; the new states are
    appended at ``t + dt``. Follower velocities are floored at zero. Raises
    :class:`CollisionError` when a law meets a non-positive gap.
    """
    dyn = _Dynamics(cfg, histories)
    xs = [s.x for s in states]
    vs = [s.v for s in states]
    a1 = [s.a for s in states]
    new_x, new_v = _SCHEME_FN[cfg.scheme](dyn, t, cfg.dt, xs, vs, a1)
    for i in range(1, len(new_v)):
        if new_v[i] < 0.0:
            new_v[i] = 0.0
    t1 = t + cfg.dt
    new_a = dyn.accelerations(t1, new_x, new_v) if len(new_x) > 1 else [dyn.leader_a(t1)]
    out = [VehicleState(new_x[i], new_v[i], new_a[i]) for i in range(len(new_x))]
    for h, s in zip(histories, out):
        h.append(t1, s)
    return out


def run_simulation(cfg: PlatoonConfig,
                   initial_states: Optional[Sequence[VehicleState]] = None) -> Trajectory:
    """Integrate the platoon over ``t = 0, dt, ..., t_end``.

    Runs are deterministic. On a collision the run stops (when
    ``abort_on_collision``) and the trajectory up to and including the
    colliding step is returned with ``aborted=True``.
    """
    n = cfg.n_vehicles
    dt = cfg.dt
    n_steps = cfg.n_steps
    states = list(initial_states) if initial_states is not None else equilibrium_init(cfg)
    if len(states) != n:
        raise ConfigError(f"expected {n} initial states, got {len(states)}")
    gap0 = cfg.resolved_gap()
    events: List[Event] = []
    flags = []
    if n > 1:
        init_acc = initial_accelerations(cfg, states)
        if max(abs(a) for a in init_acc) > EQUILIBRIUM_TOL:
            flags.append("nonequilibrium_start")
            events.append(Event(0.0, "nonequilibrium_start", -1,
                                f"max |a| = {max(abs(a) for a in init_acc):.6g}"))

    histories = make_histories(cfg, states)
    dyn = _Dynamics(cfg, histories)
    scheme = _SCHEME_FN[cfg.scheme]
    times = np.arange(n_steps + 1, dtype=float) * dt

    xs = [s.x for s in states]
    vs = [s.v for s in states]
    vs[0] = dyn.leader_v(0.0)
    for h, x, v in zip(histories, xs, vs):
        h.append(0.0, VehicleState(x, v, 0.0))
    acc = dyn.accelerations(0.0, xs, vs)
    for i, h in enumerate(histories):
        h._s[-1] = VehicleState(xs[i], vs[i], acc[i])

    X = np.empty((n_steps + 1, n))
    V = np.empty((n_steps + 1, n))
    A = np.empty((n_steps + 1, n))
    X[0], V[0], A[0] = xs, vs, acc
    clamped = [False] * n
    overlapping = [False] * n
    last = n_steps
    aborted = False

    for k in range(n_steps):
        t = times[k]
        t1 = times[k + 1]
        try:
            xs, vs = scheme(dyn, t, dt, xs, vs, acc)
        except CollisionError as exc:
            events.append(Event(float(t1), "collision", -1, f"law saw gap {exc.gap:.6g}"))
            last, aborted = k, True
            break
        for i in range(1, n):
            if vs[i] < 0.0:
                vs[i] = 0.0
                if not clamped[i]:
                    events.append(Event(float(t1), "velocity_clamp", i, "speed floored at 0"))
                clamped[i] = True
            elif clamped[i] and vs[i] > 0.0:
                clamped[i] = False
        hit = [i for i in range(1, n) if not xs[i - 1] - xs[i] > 0.0]
        try:
            acc = dyn.accelerations(t1, xs, vs)
        except CollisionError:
            acc = [math.nan] * n
        for i in range(n):
            histories[i].append(t1, VehicleState(xs[i], vs[i], acc[i]))
        X[k + 1], V[k + 1], A[k + 1] = xs, vs, acc
        for i in range(1, n):
            if i in hit and not overlapping[i]:
                events.append(Event(float(t1), "collision", i, f"gap {xs[i - 1] - xs[i]:.6g}"))
            overlapping[i] = i in hit
        if hit:
            if cfg.abort_on_collision or any(math.isnan(a) for a in acc):
                last, aborted = k + 1, True
                break

    if aborted:
        log.warning("run aborted by collision at t=%.3f", times[last])
    return Trajectory(t=times[:last + 1].copy(), x=X[:last + 1].copy(), v=V[:last + 1].copy(),
                      a=A[:last + 1].copy(), config=cfg, initial_gap=gap0, events=events,
                      aborted=aborted, flags=tuple(flags))
