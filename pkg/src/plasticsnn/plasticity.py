"""Spike-timing window and the evolvable rate-based Hebbian rule.

The rate rule is the operational one: every connection carries its own
magnitude (``k_m``) and correlation (``k_c``) coefficients, and weights drift
toward the post-synaptic rate at which potentiation and depression balance.
Rates are in Hz, times in seconds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .errors import ConfigError

KM_BOUNDS = (-2.0, 2.0)
KC_BOUNDS = (-50.0, 50.0)


@dataclass(frozen=True)
class HebbianRule:
    a_plus: float = 0.1
    a_minus: float = -0.1
    tau_plus: float = 0.02
    tau_minus: float = 0.02
    k_m: float = 0.0
    k_c: float = 0.0

    def __post_init__(self):
        if not (self.tau_plus > 0 and self.tau_minus > 0):
            raise ConfigError("STDP time constants must be positive")

    @property
    def is_balanced(self) -> bool:
        """Symmetric window: equal time constants and opposite amplitudes."""
        return self.tau_plus == self.tau_minus and self.a_minus == -self.a_plus


def stdp_window(dt_spike: float, rule: HebbianRule) -> float:
    """Weight change for one pre/post spike pair, ``dt_spike = t_post - t_pre``."""
    if dt_spike > 0:
        return rule.a_plus * math.exp(-dt_spike / rule.tau_plus)
    if dt_spike < 0:
        return rule.a_minus * math.exp(dt_spike / rule.tau_minus)
    raise ValueError("STDP window is undefined at dt_spike == 0")


@njit(cache=True)
def hebb_rate(u_pre, u_post, a_plus, a_minus, tau_plus, tau_minus, k_m, k_c):
    """Weight derivative (1/s) of the rate rule for one connection."""
    pot = a_plus / (1.0 / tau_plus + u_post)
    dep = (k_m * (u_pre - u_post + k_c) + a_minus) / (1.0 / tau_minus + u_post)
    return u_post * (pot + dep)


def weight_derivative(u_pre: float, u_post: float, rule: HebbianRule) -> float:
    return hebb_rate(
        u_pre, u_post, rule.a_plus, rule.a_minus, rule.tau_plus, rule.tau_minus, rule.k_m, rule.k_c
    )


def hebbian_update(w: float, u_pre: float, u_post: float, rule: HebbianRule, dt: float) -> float:
    """Forward-Euler weight update over ``dt`` seconds, clamped to [-1, 1]."""
    if u_pre < 0 or u_post < 0:
        raise ValueError("firing rates must be non-negative")
    if not dt > 0:
        raise ValueError("dt must be positive")
    w_new = w + dt * weight_derivative(u_pre, u_post, rule)
    return min(max(w_new, -1.0), 1.0)


def equilibrium_rate(rule: HebbianRule, u_pre: float, r_max: float = 100.0) -> float | None:
    """Post-synaptic rate where the weight stops drifting, if one exists.

    For a balanced window the root is ``u_pre + k_c`` in closed form. Otherwise
    the first sign change of the derivative on (0, r_max] is refined with Brent.
    """
    if rule.k_m == 0:
        raise ValueError("equilibrium is undefined for k_m == 0")
    if rule.is_balanced:
        root = u_pre + rule.k_c
        return root if root > 0 else None

    def per_rate(u):
        # Divide out the leading u_post factor so the trivial root at 0 disappears.
        return weight_derivative(u_pre, u, rule) / u

    grid = np.linspace(r_max * 1e-6, r_max, 2001)
    vals = [per_rate(u) for u in grid]
    for lo, hi, flo, fhi in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if flo == 0:
            return float(lo)
        if flo * fhi < 0:
            return float(brentq(per_rate, lo, hi, xtol=1e-12))
    if vals[-1] == 0:
        return float(grid[-1])
    return None
