"""Episode evaluation and the experiment protocol.

Controllers are trained on the identified linear heave model and judged on
the nonlinear truth model. ``evaluate`` runs one 80 s episode through the
compiled loop; the orchestrators below string episodes into the two-stage
training run, the transfer study, the repeated-episode adaptation check and
the PID comparison.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .errors import ConfigError
from .fitness import FitnessReport, fitness_feasible, fitness_infeasible, rank_key
from .genome import Genome, InnovationRegistry, minimal_genome
from .neat import (PLASTICITY_ONLY, TOPOLOGY_AND_WEIGHTS, EvolutionConfig, EvolutionResult,
                   _IdCounter, evolve, plastic_population)
from .network import (NetworkConfig, NetworkState, NetworkTopology, build_network, control_step,
                      reset_network)
from .plants import (G, PLANT_IDENTIFIED, PLANT_TRUTH, IdentifiedHeaveModel, PIDConfig, PIDState,
                     PlantState, TruthHeaveConfig, accel_kernel, identify_heave, pid_step,
                     plant_step, truth_accel, tune_pid)
from .stats import column_mean, mann_whitney_u

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("t", "z_ref", "z", "v_z", "thrust")


@dataclass(frozen=True)
class EpisodeConfig:
    duration: float = 80.0
    dt_control: float = 0.02
    ref_levels: tuple[float, ...] = (2.0, 4.0, 1.0, 3.0)
    ref_period: float = 20.0
    z_lo: float = 0.0
    z_hi: float = 10.0
    e_max: float = 5.0
    z0: float = 2.0
    v0: float = 0.0

    def __post_init__(self):
        steps = self.duration / self.dt_control
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError("episode duration must be a whole number of control steps")
        if not self.e_max > 0:
            raise ConfigError("e_max must be positive")
        if not self.z_lo < self.z_hi:
            raise ConfigError("feasibility bounds are empty")
        if not self.ref_levels or not self.ref_period > 0:
            raise ConfigError("reference schedule needs levels and a positive period")

    @property
    def n_steps(self) -> int:
        return round(self.duration / self.dt_control)

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt_control


def reference_signal(t: float, cfg: EpisodeConfig | None = None) -> float:
    """Piecewise-constant height schedule; the last level holds past the schedule end."""
    cfg = cfg or EpisodeConfig()
    idx = min(int(math.floor(t / cfg.ref_period + 1e-9)), len(cfg.ref_levels) - 1)
    return cfg.ref_levels[max(idx, 0)]


def reference_trace(cfg: EpisodeConfig) -> np.ndarray:
    return np.array([reference_signal(t, cfg) for t in cfg.times()])


@dataclass(frozen=True)
class Plant:
    """Which heave model an episode flies, packed for the compiled loop."""

    kind: int
    params: tuple[float, ...]

    @classmethod
    def identified(cls, model: IdentifiedHeaveModel) -> "Plant":
        return cls(PLANT_IDENTIFIED, tuple(model.packed()))

    @classmethod
    def truth(cls, cfg: TruthHeaveConfig | None = None) -> "Plant":
        return cls(PLANT_TRUTH, tuple((cfg or TruthHeaveConfig()).packed()))

    def accel(self, thrust: float, v_z: float) -> float:
        return accel_kernel(self.kind, np.array(self.params), thrust, v_z)


@njit(cache=True)
def _episode_kernel(params, n_hidden, layers, conn_src, conn_dst, conn_rec, conn_km, conn_kc,
                    dst_start, substeps, decode_steps, v, u, ring, cnt_decode, cnt_rate, act,
                    act_prev, weights, counters, plastic, plant_kind, plant_params, zref, dt,
                    z0, v0, z_lo, z_hi, out):
    """Closed loop of network and plant. Fills ``out`` rows; returns (rows, in-bounds steps, feasible)."""
    z = z0
    vz = v0
    n = zref.shape[0]
    for i in range(n):
        zr = zref[i]
        thrust = control_step(params, n_hidden, layers, conn_src, conn_dst, conn_rec, conn_km,
                              conn_kc, dst_start, substeps, decode_steps, v, u, ring, cnt_decode,
                              cnt_rate, act, act_prev, weights, counters, zr - z, vz, plastic)
        out[i, 0] = i * dt
        out[i, 1] = zr
        out[i, 2] = z
        out[i, 3] = vz
        out[i, 4] = thrust
        if not np.isfinite(thrust):
            return i + 1, i, False
        a_n = accel_kernel(plant_kind, plant_params, thrust, vz) - 9.81
        vz = vz + a_n * dt
        z = z + vz * dt
        if not (np.isfinite(z) and np.isfinite(vz)) or z < z_lo or z > z_hi:
            return i + 1, i, False
    return n, n, True


def score_trace(trace: np.ndarray, steps_in_bounds: int, feasible: bool,
                cfg: EpisodeConfig) -> tuple[float, float]:
    """Fitness and mean absolute height error of a (possibly truncated) trace."""
    err = np.abs(trace[:, 1] - trace[:, 2])
    mae = float(err.mean()) if len(err) else math.inf
    if feasible:
        return fitness_feasible(np.minimum(err / cfg.e_max, 1.0)), mae
    return fitness_infeasible(steps_in_bounds, cfg.n_steps), mae


def run_network_episode(topo: NetworkTopology, state: NetworkState, plant: Plant,
                        cfg: EpisodeConfig, plastic: bool,
                        zref: np.ndarray | None = None) -> FitnessReport:
    """Fly one episode starting from ``state`` as-is (no reset)."""
    if abs(cfg.dt_control - topo.config.dt_control) > 1e-12:
        raise ConfigError("episode and network control periods differ")
    if zref is None:
        zref = reference_trace(cfg)
    out = np.zeros((cfg.n_steps, 5))
    nc = topo.config
    rows, t_in, feasible = _episode_kernel(
        topo.params, topo.n_hidden, topo.layers, topo.conn_src, topo.conn_dst, topo.conn_rec,
        topo.conn_km, topo.conn_kc, topo.dst_start, nc.substeps, nc.decode_steps, state.v,
        state.u, state.ring, state.cnt_decode, state.cnt_rate, state.act, state.act_prev,
        state.weights, state.counters, bool(plastic), plant.kind, np.array(plant.params), zref,
        cfg.dt_control, cfg.z0, cfg.v0, cfg.z_lo, cfg.z_hi, out,
    )
    trace = out[:rows]
    fitness, mae = score_trace(trace, t_in, feasible, cfg)
    return FitnessReport(bool(feasible), fitness, mae, int(t_in), cfg.n_steps, trace)


def evaluate(genome: Genome, plant: Plant, plastic: bool, cfg: EpisodeConfig | None = None,
             net_cfg: NetworkConfig | None = None, keep_trace: bool = True) -> FitnessReport:
    cfg = cfg or EpisodeConfig()
    topo, state = build_network(genome, net_cfg)
    report = run_network_episode(topo, state, plant, cfg, plastic)
    report.genome_id = genome.genome_id
    report.genome_size = genome.size
    if not keep_trace:
        report.trace = None
    return report


def run_controller_episode(controller: Callable[[float, float], float], plant: Plant,
                           cfg: EpisodeConfig | None = None) -> FitnessReport:
    """Same episode protocol for any Python controller ``(e_z, v_z) -> thrust``."""
    cfg = cfg or EpisodeConfig()
    zref = reference_trace(cfg)
    rows = []
    s = PlantState(cfg.z0, cfg.v0)
    t_in, feasible = cfg.n_steps, True
    for i in range(cfg.n_steps):
        thrust = float(controller(zref[i] - s.z, s.v_z))
        rows.append((i * cfg.dt_control, zref[i], s.z, s.v_z, thrust))
        try:
            s = plant_step(s, thrust, cfg.dt_control, plant.accel)
        except ArithmeticError:
            t_in, feasible = i, False
            break
        if not cfg.z_lo <= s.z <= cfg.z_hi:
            t_in, feasible = i, False
            break
    trace = np.array(rows)
    fitness, mae = score_trace(trace, t_in, feasible, cfg)
    return FitnessReport(feasible, fitness, mae, t_in, cfg.n_steps, trace)


@dataclass(frozen=True)
class Evaluator:
    """Picklable genome -> report callable used by the evolutionary loop."""

    plant: Plant
    plastic: bool
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)

    def __call__(self, genome: Genome) -> FitnessReport:
        return evaluate(genome, self.plant, self.plastic, self.episode, self.network, keep_trace=False)


@dataclass(frozen=True)
class ExperimentConfig:
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    truth: TruthHeaveConfig = field(default_factory=TruthHeaveConfig)
    pid: PIDConfig | None = None  # None: tune on the truth plant
    identified: IdentifiedHeaveModel | None = None  # None: identify from the truth plant
    workers: int = 1


def identified_plant(cfg: ExperimentConfig) -> tuple[IdentifiedHeaveModel, Plant]:
    model = cfg.identified
    if model is None:
        model, _ = identify_heave(lambda t, v: truth_accel(t, v, cfg.truth))
    return model, Plant.identified(model)


def _executor(workers: int) -> Executor | None:
    return ProcessPoolExecutor(max_workers=workers) if workers > 1 else None


def _seed_rngs(seed: int, stage: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stage]))


def run_stage1(cfg: ExperimentConfig, seed: int,
               on_generation=None) -> EvolutionResult:
    """Evolve fixed-weight controllers (topology and weights) on the identified plant."""
    _, plant = identified_plant(cfg)
    evo = replace(cfg.evolution, stage=TOPOLOGY_AND_WEIGHTS)
    rng = _seed_rngs(seed, 1)
    registry = InnovationRegistry()
    pop = [minimal_genome(i, registry, rng) for i in range(evo.population_size)]
    evaluator = Evaluator(plant, False, cfg.episode, cfg.network)
    ex = _executor(cfg.workers)
    try:
        return evolve(pop, evaluator, evo, registry, rng, ex, on_generation)
    finally:
        if ex is not None:
            ex.shutdown()


def run_stage2(champion: Genome, cfg: ExperimentConfig, seed: int,
               on_generation=None) -> EvolutionResult:
    """Evolve only the Hebbian coefficients of a loaded champion, plasticity on."""
    _, plant = identified_plant(cfg)
    evo = replace(cfg.evolution, stage=PLASTICITY_ONLY)
    rng = _seed_rngs(seed, 2)
    next_id = _IdCounter(champion.genome_id + 1)
    pop = plastic_population(champion, evo, rng, next_id)
    evaluator = Evaluator(plant, True, cfg.episode, cfg.network)
    ex = _executor(cfg.workers)
    try:
        return evolve(pop, evaluator, evo, InnovationRegistry(), rng, ex, on_generation)
    finally:
        if ex is not None:
            ex.shutdown()


@dataclass
class RunPair:
    seed: int
    stage1: EvolutionResult
    stage2: EvolutionResult

    @property
    def fixed(self) -> Genome:
        return self.stage1.champion

    @property
    def plastic(self) -> Genome:
        return self.stage2.champion


def run_pair(cfg: ExperimentConfig, seed: int) -> RunPair:
    s1 = run_stage1(cfg, seed)
    s2 = run_stage2(s1.champion, cfg, seed)
    return RunPair(seed, s1, s2)


def best_pair(pairs: Sequence[RunPair]) -> RunPair:
    """The run whose plastic champion ranks best on its training (identified) plant."""
    if not pairs:
        raise ValueError("no runs to choose from")
    return min(pairs, key=lambda p: rank_key(p.plastic))


@dataclass
class TransferRow:
    seed: int
    fixed_identified: float
    plastic_identified: float
    fixed_truth: float
    plastic_truth: float
    fixed_feasible: bool
    plastic_feasible: bool


@dataclass
class TransferStudy:
    rows: list[TransferRow]
    u: float
    significant: bool

    @property
    def fixed_column(self) -> list[float]:
        return [r.fixed_truth for r in self.rows]

    @property
    def plastic_column(self) -> list[float]:
        return [r.plastic_truth for r in self.rows]

    @property
    def plastic_wins(self) -> int:
        return sum(r.plastic_truth > r.fixed_truth for r in self.rows)

    def table(self) -> str:
        lines = ["run,seed,fixed_identified,plastic_identified,fixed_truth,plastic_truth"]
        for i, r in enumerate(self.rows, 1):
            lines.append(f"{i},{r.seed},{r.fixed_identified:.4f},{r.plastic_identified:.4f},"
                         f"{r.fixed_truth:.4f},{r.plastic_truth:.4f}")
        lines.append(f"mean,,{column_mean([r.fixed_identified for r in self.rows]):.4f},"
                     f"{column_mean([r.plastic_identified for r in self.rows]):.4f},"
                     f"{column_mean(self.fixed_column):.4f},{column_mean(self.plastic_column):.4f}")
        return "\n".join(lines)


def transfer_study(pairs: Sequence[RunPair], cfg: ExperimentConfig) -> TransferStudy:
    """Fly each run's fixed and plastic champions on the truth plant and compare."""
    truth = Plant.truth(cfg.truth)
    _, ident = identified_plant(cfg)
    rows = []
    for p in pairs:
        fi = evaluate(p.fixed, ident, False, cfg.episode, cfg.network, keep_trace=False)
        pi = evaluate(p.plastic, ident, True, cfg.episode, cfg.network, keep_trace=False)
        ft = evaluate(p.fixed, truth, False, cfg.episode, cfg.network, keep_trace=False)
        pt = evaluate(p.plastic, truth, True, cfg.episode, cfg.network, keep_trace=False)
        rows.append(TransferRow(p.seed, fi.fitness, pi.fitness, ft.fitness, pt.fitness,
                                ft.feasible, pt.feasible))
    u, sig = mann_whitney_u([r.fixed_truth for r in rows], [r.plastic_truth for r in rows])
    return TransferStudy(rows, u, sig)


def plasticity_validation(genome: Genome, plant: Plant, cfg: ExperimentConfig | None = None,
                          n_episodes: int = 4, plastic: bool = True) -> list[FitnessReport]:
    """Fly the same course repeatedly, carrying live weights from one episode to the next.

    Neuron state and the plant are re-initialized per episode; only the
    synaptic weights persist.
    """
    cfg = cfg or ExperimentConfig()
    topo, state = build_network(genome, cfg.network)
    zref = reference_trace(cfg.episode)
    reports = []
    for _ in range(n_episodes):
        weights = state.weights.copy()
        reset_network(state, topo)
        state.weights[:] = weights
        r = run_network_episode(topo, state, plant, cfg.episode, plastic, zref)
        r.genome_id, r.genome_size = genome.genome_id, genome.size
        reports.append(r)
    return reports


def transplant_rule(source: Genome, target: Genome) -> Genome:
    """Copy Hebbian coefficients onto another genome, matching genes by innovation."""
    g = target.clone()
    for innov, c in g.conns.items():
        if innov in source.conns:
            c.k_m, c.k_c = source.conns[innov].k_m, source.conns[innov].k_c
    return g


@dataclass
class PIDComparison:
    mae_snn: float
    mae_pid: float
    snn: FitnessReport
    pid: FitnessReport
    pid_cfg: PIDConfig

    def table(self) -> str:
        return ("controller,mae_m,fitness,feasible\n"
                f"plastic_snn,{self.mae_snn:.4f},{self.snn.fitness:.4f},{int(self.snn.feasible)}\n"
                f"pid,{self.mae_pid:.4f},{self.pid.fitness:.4f},{int(self.pid.feasible)}")


def pid_controller(pid_cfg: PIDConfig, dt: float) -> Callable[[float, float], float]:
    state = PIDState()
    return lambda e, v: pid_step(state, e, v, dt, pid_cfg)


def pid_comparison(genome: Genome, cfg: ExperimentConfig | None = None,
                   pid_cfg: PIDConfig | None = None) -> PIDComparison:
    """Plastic SNN vs. a PID tuned directly on the truth plant, same course."""
    cfg = cfg or ExperimentConfig()
    truth = Plant.truth(cfg.truth)
    pid_cfg = pid_cfg or cfg.pid or tune_pid(truth.accel, cfg.episode.dt_control,
                                             cfg.truth.hover_thrust)
    snn = evaluate(genome, truth, True, cfg.episode, cfg.network)
    pid = run_controller_episode(pid_controller(pid_cfg, cfg.episode.dt_control), truth, cfg.episode)
    return PIDComparison(snn.mean_abs_error, pid.mean_abs_error, snn, pid, pid_cfg)
