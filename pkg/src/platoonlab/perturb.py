"""Leader velocity perturbations."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from platoonlab.errors import ConfigError

WAVEFORMS = ("sinusoid", "windowed_sinusoid", "step", "square", "sawtooth", "none")
PERIODIC = ("sinusoid", "windowed_sinusoid", "square", "sawtooth")


@dataclass(frozen=True)
class PerturbationSpec:
    """A velocity offset imposed on the platoon leader.

    For ``step`` the jump size is ``step_delta`` and it starts at
    ``window_start`` (default 0). ``windowed_sinusoid`` restarts its phase at
    ``window_start`` and is zero outside ``[start, start + duration)``.
    """

    waveform: str = "none"
    amplitude: float = 0.0
    angular_frequency: float = 1.0
    window_start: Optional[float] = None
    window_duration: Optional[float] = None
    step_delta: float = 0.0

    def __post_init__(self):
        if self.waveform not in WAVEFORMS:
            raise ConfigError(f"unknown waveform {self.waveform!r}; expected one of {WAVEFORMS}")
        for name in ("amplitude", "angular_frequency", "step_delta"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.amplitude < 0:
            raise ConfigError("amplitude must be >= 0")
        if self.waveform in PERIODIC and not self.angular_frequency > 0:
            raise ConfigError("angular_frequency must be > 0 for periodic waveforms")
        if self.waveform == "windowed_sinusoid":
            if self.window_start is None or self.window_duration is None:
                raise ConfigError("windowed_sinusoid needs window_start and window_duration")
            if not self.window_duration > 0:
                raise ConfigError("window_duration must be > 0")
        if self.window_start is not None and self.window_start < 0:
            raise ConfigError("window_start must be >= 0")

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.angular_frequency


NONE = PerturbationSpec()


def _in_window(spec, t):
    start = spec.window_start
    return start <= t < start + spec.window_duration


def evaluate(spec: PerturbationSpec, t: float) -> float:
    """Velocity offset at time ``t`` (m/s)."""
    w = spec.waveform
    if w == "none":
        return 0.0
    A, omega = spec.amplitude, spec.angular_frequency
    if w == "sinusoid":
        return A * math.sin(omega * t)
    if w == "windowed_sinusoid":
        if not _in_window(spec, t):
            return 0.0
        return A * math.sin(omega * (t - spec.window_start))
    if w == "step":
        return spec.step_delta if t >= (spec.window_start or 0.0) else 0.0
    if w == "square":
        return A if math.sin(omega * t) >= 0.0 else -A
    if w == "sawtooth":
        phase = omega * t / (2.0 * math.pi)
        return A * (2.0 * (phase - math.floor(phase)) - 1.0)
    raise ConfigError(f"unknown waveform {w!r}")


def rate(spec: PerturbationSpec, t: float) -> float:
    """Time derivative of :func:`evaluate`; jump discontinuities contribute 0."""
    w = spec.waveform
    A, omega = spec.amplitude, spec.angular_frequency
    if w == "sinusoid":
        return A * omega * math.cos(omega * t)
    if w == "windowed_sinusoid":
        if not _in_window(spec, t):
            return 0.0
        return A * omega * math.cos(omega * (t - spec.window_start))
    if w == "sawtooth":
        return A * omega / math.pi
    return 0.0


def leader_velocity(v_e: float, spec: PerturbationSpec, t: float) -> float:
    return max(0.0, v_e + evaluate(spec, t))


def leader_acceleration(v_e: float, spec: PerturbationSpec, t: float) -> float:
    if v_e + evaluate(spec, t) <= 0.0:
        return 0.0
    return rate(spec, t)
