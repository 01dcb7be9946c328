"""Izhikevich neuron dynamics, current coding of inputs and activity decoding.

Units follow the usual Izhikevich convention: membrane variables in mV and
integration steps in ms. Spike times and rate windows are in seconds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from numba import njit

from .errors import ConfigError, NumericDomainError

# Boundary slack for comparisons between accumulated float times.
_TIME_EPS = 1e-9


@dataclass(frozen=True)
class IzhikevichParams:
    a: float = 0.02
    b_iz: float = 0.2
    c: float = -65.0
    d: float = 2.0
    v_t: float = 30.0

    def __post_init__(self):
        if not self.a > 0:
            raise ConfigError(f"recovery timescale a must be positive, got {self.a}")
        if not self.c < self.v_t:
            raise ConfigError(f"reset potential c={self.c} must lie below threshold v_t={self.v_t}")


@dataclass
class NeuronState:
    """Membrane state of one neuron plus its recent firing history.

    ``t`` is the simulation clock in seconds. A spike is stamped with the time
    at the start of the integration step in which the threshold was crossed.
    """

    v: float = -65.0
    u: float = -13.0
    t: float = 0.0
    spike_times: list[float] = field(default_factory=list)
    window_rate: float = 0.0

    @classmethod
    def at_rest(cls, params: IzhikevichParams) -> "NeuronState":
        return cls(v=params.c, u=params.b_iz * params.c)


@dataclass(frozen=True)
class EncoderConfig:
    in_min: float
    in_max: float
    i_max: float = 15.0

    def __post_init__(self):
        if not self.in_min < self.in_max:
            raise ConfigError(f"encoder range is degenerate: [{self.in_min}, {self.in_max}]")
        if not self.i_max > 0:
            raise ConfigError(f"i_max must be positive, got {self.i_max}")


@njit(cache=True)
def izh_update(v, u, i_in, a, b, c, d, v_t, dt):
    """One forward-Euler step of the Izhikevich equations with threshold reset.

    Returns ``(v, u, fired)``. Shared by the scalar API and the compiled
    network kernels so both follow the exact same arithmetic.
    """
    dv = 0.04 * v * v + 5.0 * v + 140.0 - u + i_in
    du = a * (b * v - u)
    v_new = v + dv * dt
    u_new = u + du * dt
    if v_new >= v_t:
        return c, u_new + d, True
    return v_new, u_new, False


@njit(cache=True)
def membrane_fraction(v, c, v_t):
    x = (v - c) / (v_t - c)
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


def neuron_step(
    state: NeuronState, params: IzhikevichParams, i_in: float, dt: float = 1.0
) -> tuple[NeuronState, bool]:
    """Advance a neuron by ``dt`` milliseconds under constant input current."""
    if not (0.0 < dt <= 1.0):
        raise ValueError(f"dt must lie in (0, 1] ms, got {dt}")
    if not (math.isfinite(state.v) and math.isfinite(state.u) and math.isfinite(i_in)):
        raise NumericDomainError(f"non-finite neuron input: v={state.v} u={state.u} i={i_in}")
    v, u, fired = izh_update(
        state.v, state.u, i_in, params.a, params.b_iz, params.c, params.d, params.v_t, dt
    )
    if not (math.isfinite(v) and math.isfinite(u)):
        raise NumericDomainError(f"neuron integration blew up: v={v} u={u}")
    spikes = list(state.spike_times)
    if fired:
        spikes.append(state.t)
    t_new = state.t + dt * 1e-3
    new = NeuronState(v=v, u=u, t=t_new, spike_times=spikes, window_rate=0.0)
    new.window_rate = window_rate(new, 0.1)
    return new, bool(fired)


def encode_current(x: float, cfg: EncoderConfig) -> float:
    """Current coding: normalize ``x`` into [0, 1] (clamped) and scale by i_max."""
    span = cfg.in_max - cfg.in_min
    if span == 0:
        raise ConfigError("encoder range is degenerate")
    n = (x - cfg.in_min) / span
    return cfg.i_max * min(max(n, 0.0), 1.0)


def spikes_in_window(state: NeuronState, window: float) -> int:
    """Count spikes with ``now - window <= t_spike < now``."""
    lo = state.t - window - _TIME_EPS
    hi = state.t - _TIME_EPS
    return sum(1 for ts in state.spike_times if lo <= ts < hi)


def window_rate(state: NeuronState, window: float) -> float:
    if not window > 0:
        raise ValueError("window must be positive")
    return spikes_in_window(state, window) / window


def decode_activation(
    state: NeuronState, params: IzhikevichParams, window: float = 0.02, k_max: int = 10
) -> float:
    """Blend the trailing spike count with the sub-threshold membrane level.

    The membrane term contributes a fractional spike, so a neuron close to
    firing reads higher than one sitting at its reset potential.
    """
    if not window > 0 or k_max < 1:
        raise ValueError("window must be positive and k_max >= 1")
    k = spikes_in_window(state, window)
    frac = membrane_fraction(state.v, params.c, params.v_t)
    return min(max((k + frac) / k_max, 0.0), 1.0)
