"""Heave plants, linear model identification and the PID baseline.

Sign convention is z-up. Thrust produces a positive acceleration ``a_z``; the
net acceleration adds gravity, ``a_n = a_z - 9.81``. At hover ``a_z = 9.81``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from .errors import ConfigError, IdentificationError, NumericDomainError

G = 9.81

PLANT_IDENTIFIED = 0
PLANT_TRUTH = 1

AccelFn = Callable[[float, float], float]


@dataclass(frozen=True)
class TruthHeaveConfig:
    hover_thrust: float = 0.5
    thrust_exponent: float = 1.5
    g_mag: float = G
    wash_coeff: float = 0.08
    drag_coeff: float = 0.05

    def __post_init__(self):
        if not 0 < self.hover_thrust <= 1:
            raise ConfigError("hover thrust must lie in (0, 1]")
        if not self.thrust_exponent > 0:
            raise ConfigError("thrust exponent must be positive")

    def packed(self) -> np.ndarray:
        return np.array([self.hover_thrust, self.thrust_exponent, self.g_mag,
                         self.wash_coeff, self.drag_coeff])


@dataclass(frozen=True)
class IdentifiedHeaveModel:
    k_T: float
    k_v: float
    b_id: float

    def __post_init__(self):
        if not self.k_T > 0:
            raise ConfigError(f"k_T must be positive, got {self.k_T}")
        if not self.k_v < 0:
            raise ConfigError(f"k_v must be negative, got {self.k_v}")

    def packed(self) -> np.ndarray:
        return np.array([self.k_T, self.k_v, self.b_id])


@dataclass
class PlantState:
    z: float = 0.0
    v_z: float = 0.0


@njit(cache=True)
def accel_kernel(kind, pp, thrust, v_z):
    if thrust < 0.0:
        thrust = 0.0
    elif thrust > 1.0:
        thrust = 1.0
    if kind == 0:
        return pp[0] * thrust + pp[1] * v_z + pp[2]
    return pp[2] * (thrust / pp[0]) ** pp[1] * (1.0 - pp[3] * v_z) - pp[4] * v_z * abs(v_z)


def truth_accel(thrust: float, v_z: float, cfg: TruthHeaveConfig | None = None) -> float:
    """Vertical acceleration of the nonlinear reference plant.

    Thrust enters through a convex power law normalized at hover; rotor
    downwash scales it down when climbing, and body drag is quadratic.
    """
    cfg = cfg or TruthHeaveConfig()
    return accel_kernel(PLANT_TRUTH, cfg.packed(), thrust, v_z)


def identified_accel(thrust: float, v_z: float, model: IdentifiedHeaveModel) -> float:
    return model.k_T * thrust + model.k_v * v_z + model.b_id


def plant_step(state: PlantState, thrust: float, dt: float, accel_fn: AccelFn) -> PlantState:
    """Semi-implicit Euler: velocity first, then position with the new velocity."""
    a_n = accel_fn(thrust, state.v_z) - G
    v = state.v_z + a_n * dt
    z = state.z + v * dt
    if not (math.isfinite(v) and math.isfinite(z)):
        raise NumericDomainError(f"plant state diverged: z={z} v_z={v}")
    return PlantState(z, v)


def _bisect(f: Callable[[float], float], lo: float, hi: float, tol: float) -> float:
    flo = f(lo)
    if flo == 0:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def identify_heave(
    truth: AccelFn | None = None, fd_step: float = 1e-4, tol: float = 1e-9
) -> tuple[IdentifiedHeaveModel, float]:
    """Fit the linear heave model tangent to the truth curve at hover.

    Only samples of the truth plant at v_z = 0 and v_z = 1 m/s are used:
    hover thrust by bisection, thrust gain by central differencing there,
    velocity gain as the gap between the two curves at hover, and the bias so
    the line touches the truth curve. Returns the model and the hover thrust.
    """
    truth = truth or (lambda t, v: truth_accel(t, v))

    def excess(t):
        return truth(t, 0.0) - G

    if excess(0.0) * excess(1.0) > 0:
        raise IdentificationError("truth plant has no hover thrust in [0, 1]")
    t_h = _bisect(excess, 0.0, 1.0, tol)
    lo, hi = max(t_h - fd_step, 0.0), min(t_h + fd_step, 1.0)
    k_T = (truth(hi, 0.0) - truth(lo, 0.0)) / (hi - lo)
    k_v = truth(t_h, 1.0) - truth(t_h, 0.0)
    b_id = G - k_T * t_h
    return IdentifiedHeaveModel(k_T, k_v, b_id), t_h


def validation_thrust(
    duration: float = 80.0,
    dt: float = 0.02,
    hold: float = 0.5,
    amplitude: float = 0.1,
    hover: float = 0.5,
    seed: int = 0,
) -> np.ndarray:
    """Hover thrust plus a seeded uniform perturbation held piecewise constant."""
    n = round(duration / dt)
    per_hold = round(hold / dt)
    rng = np.random.default_rng(seed)
    levels = hover + rng.uniform(-amplitude, amplitude, size=math.ceil(n / per_hold))
    return np.clip(np.repeat(levels, per_hold)[:n], 0.0, 1.0)


def simulate_open_loop(thrust: np.ndarray, accel_fn: AccelFn, dt: float = 0.02,
                       state: PlantState | None = None) -> np.ndarray:
    """Velocity trace (one sample per thrust command, after the step)."""
    s = state or PlantState()
    out = np.empty(len(thrust))
    for i, t in enumerate(thrust):
        s = plant_step(s, float(t), dt, accel_fn)
        out[i] = s.v_z
    return out


def validate_identification(
    model: IdentifiedHeaveModel,
    truth_cfg: TruthHeaveConfig | None = None,
    thrust: np.ndarray | None = None,
    dt: float = 0.02,
    truth_fn: AccelFn | None = None,
) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Feed the same thrust signal to both plants and compare velocity responses."""
    truth_cfg = truth_cfg or TruthHeaveConfig()
    if thrust is None:
        thrust = validation_thrust(hover=truth_cfg.hover_thrust)
    truth_fn = truth_fn or (lambda t, v: truth_accel(t, v, truth_cfg))
    trace_id = simulate_open_loop(thrust, lambda t, v: identified_accel(t, v, model), dt)
    trace_truth = simulate_open_loop(thrust, truth_fn, dt)
    rmse = float(np.sqrt(np.mean((trace_id - trace_truth) ** 2)))
    if np.std(trace_id) == 0 or np.std(trace_truth) == 0:
        corr = 1.0 if rmse == 0 else 0.0
    else:
        corr = float(np.corrcoef(trace_id, trace_truth)[0, 1])
    return trace_id, trace_truth, corr, rmse


@dataclass(frozen=True)
class PIDConfig:
    kp: float = 0.12
    ki: float = 0.01
    kd: float = 0.12
    hover_thrust: float = 0.5
    out_min: float = 0.0
    out_max: float = 1.0
    integrator_limit: float = 5.0

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise ConfigError("PID gains must be non-negative")


@dataclass
class PIDState:
    integral: float = 0.0


def pid_step(pid: PIDState, e_z: float, v_z: float, dt: float, cfg: PIDConfig) -> float:
    """Hover feed-forward plus PID on height error; derivative acts on measured velocity."""
    integral = pid.integral + e_z * dt
    integral = min(max(integral, -cfg.integrator_limit), cfg.integrator_limit)
    pid.integral = integral
    raw = cfg.hover_thrust + cfg.kp * e_z + cfg.ki * integral - cfg.kd * v_z
    return min(max(raw, cfg.out_min), cfg.out_max)


@dataclass
class StepResponse:
    z: np.ndarray
    overshoot: float  # fraction of the step size
    settle_time: float | None
    target: float


def pid_step_response(cfg: PIDConfig, accel_fn: AccelFn, step: float = 1.0,
                      duration: float = 20.0, dt: float = 0.02, z0: float = 2.0) -> StepResponse:
    s = PlantState(z0, 0.0)
    pid = PIDState()
    n = round(duration / dt)
    z = np.empty(n)
    target = z0 + step
    for i in range(n):
        thrust = pid_step(pid, target - s.z, s.v_z, dt, cfg)
        s = plant_step(s, thrust, dt, accel_fn)
        z[i] = s.z
    overshoot = max(0.0, (z.max() - target) / step)
    outside = np.flatnonzero(np.abs(z - target) > 0.02 * step)
    settle = None if len(outside) and outside[-1] == n - 1 else (
        (outside[-1] + 1) * dt if len(outside) else 0.0)
    return StepResponse(z, overshoot, settle, target)


def tune_pid(accel_fn: AccelFn, dt: float = 0.02, hover: float = 0.5,
             max_overshoot: float = 0.05) -> PIDConfig:
    """Tune on the target plant for the fastest clean 1 m step.

    The PD pair minimizing integrated absolute error with overshoot below
    ``max_overshoot`` is picked from a log grid, then the largest integral
    gain (up to a tenth of kp) that keeps the overshoot bound is added.
    """
    best = None
    for kp in np.geomspace(0.01, 1.0, 25):
        for kd in np.geomspace(0.01, 1.0, 25):
            r = pid_step_response(PIDConfig(kp=kp, ki=0.0, kd=kd, hover_thrust=hover), accel_fn, dt=dt)
            if r.overshoot >= max_overshoot or r.settle_time is None:
                continue
            iae = float(np.sum(np.abs(r.z - r.target)) * dt)
            if best is None or iae < best[0]:
                best = (iae, float(kp), float(kd))
    if best is None:
        raise RuntimeError("no PD gains met the overshoot target")
    _, kp, kd = best
    ki = 0.0
    for cand in np.geomspace(0.1, 0.001, 30) * kp:
        r = pid_step_response(PIDConfig(kp=kp, ki=cand, kd=kd, hover_thrust=hover), accel_fn, dt=dt)
        if r.overshoot < max_overshoot and r.settle_time is not None:
            ki = float(cand)
            break
    return PIDConfig(kp=kp, ki=ki, kd=kd, hover_thrust=hover)
