"""Episode fitness and the feasibility-first ranking."""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Any

import numpy as np

INFEASIBLE_SCALE = 0.2


@dataclass
class FitnessReport:
    feasible: bool
    fitness: float
    mean_abs_error: float
    steps_in_bounds: int
    total_steps: int
    trace: np.ndarray | None = None  # columns t, z_ref, z, v_z, thrust
    genome_id: int = -1
    genome_size: int = 0

    @property
    def size(self) -> int:
        return self.genome_size


def fitness_feasible(norm_errors) -> float:
    """One minus the mean normalized absolute tracking error."""
    e = np.abs(np.asarray(norm_errors, dtype=float))
    if e.size == 0:
        raise ValueError("empty error series")
    if e.max() > 1.0:
        raise ValueError("normalized errors must lie in [0, 1]")
    return float(1.0 - e.mean())


def fitness_infeasible(t_in: int, t_total: int, k: float = INFEASIBLE_SCALE) -> float:
    """Penalized fitness from the number of steps spent in bounds before leaving."""
    if t_total <= 0:
        raise ValueError("total step count must be positive")
    if not 0 <= t_in <= t_total:
        raise ValueError(f"in-bounds steps {t_in} outside [0, {t_total}]")
    return k * t_in / t_total


def rank_key(x: Any) -> tuple:
    """Sort key, best first: feasible before infeasible, then fitness, size, id.

    Works on anything exposing ``feasible``, ``fitness``, ``size`` and an id
    (``genome_id``), i.e. genomes and fitness reports alike.
    """
    return (not x.feasible, -x.fitness, getattr(x, "size", 0), getattr(x, "genome_id", -1))


def rank_compare(a: Any, b: Any) -> int:
    """-1 if ``a`` ranks ahead of ``b``, 1 if behind, 0 if indistinguishable."""
    ka, kb = rank_key(a), rank_key(b)
    return (ka > kb) - (ka < kb)


sort_key = functools.cmp_to_key(rank_compare)
