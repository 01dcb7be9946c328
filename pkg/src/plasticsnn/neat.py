"""NEAT-style evolution: speciation, fitness sharing, crossover and mutation.

Two stages share the machinery. ``topology_and_weights`` grows structure and
tunes weights; ``plasticity_only`` freezes both and evolves only the
per-connection Hebbian coefficients.
"""
from __future__ import annotations

import copy
import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError
from .fitness import FitnessReport, rank_key
from .genome import ConnGene, Genome, InnovationRegistry, NodeGene, creates_cycle
from .plasticity import KC_BOUNDS, KM_BOUNDS

log = logging.getLogger(__name__)

TOPOLOGY_AND_WEIGHTS = "topology_and_weights"
PLASTICITY_ONLY = "plasticity_only"


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 100
    p_add_node: float = 0.005
    p_add_conn: float = 0.01
    survival_fraction: float = 0.2
    max_generations: int = 50
    stagnation_limit: int = 12
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 0.4
    compat_threshold: float = 3.0
    weight_perturb_rate: float = 0.8
    weight_sigma: float = 0.1
    weight_replace_rate: float = 0.02
    crossover_rate: float = 0.75
    reenable_prob: float = 0.25
    hebb_mutate_rate: float = 0.3
    km_init: float = 5e-4
    kc_init: float = 50.0
    km_sigma: float = 1e-4
    kc_sigma: float = 3.0
    elitism: int = 1
    stage: str = TOPOLOGY_AND_WEIGHTS

    def __post_init__(self):
        probs = ("p_add_node", "p_add_conn", "survival_fraction", "weight_perturb_rate",
                 "weight_replace_rate", "crossover_rate", "reenable_prob", "hebb_mutate_rate")
        for name in probs:
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be a probability")
        if self.weight_perturb_rate + self.weight_replace_rate > 1.0:
            raise ConfigError("weight perturb and replace rates exceed 1")
        if self.population_size < 10:
            raise ConfigError("population_size must be at least 10")
        if self.stage not in (TOPOLOGY_AND_WEIGHTS, PLASTICITY_ONLY):
            raise ConfigError(f"unknown stage {self.stage!r}")
        if not (0.0 <= self.km_init <= KM_BOUNDS[1] and 0.0 <= self.kc_init <= KC_BOUNDS[1]):
            raise ConfigError("Hebbian init half-widths must lie within the coefficient bounds")
        if self.km_sigma < 0 or self.kc_sigma < 0:
            raise ConfigError("Hebbian mutation sigmas must be non-negative")
        if self.elitism < 0 or self.elitism >= self.population_size:
            raise ConfigError("elitism must be in [0, population_size)")


@dataclass
class Species:
    species_id: int
    representative: Genome
    members: list[Genome] = field(default_factory=list)
    best_fitness: float = -math.inf
    stagnation: int = 0

    @property
    def size(self) -> int:
        return len(self.members)

    def total_shared_fitness(self) -> float:
        return sum(shared_fitness(g, self) for g in self.members)


class EvolutionError(RuntimeError):
    pass


def compatibility_distance(g1: Genome, g2: Genome, cfg: EvolutionConfig) -> float:
    """Weighted count of excess and disjoint genes plus mean matching-weight gap."""
    k1, k2 = set(g1.conns), set(g2.conns)
    if not k1 and not k2:
        return 0.0
    max1 = max(k1) if k1 else -1
    max2 = max(k2) if k2 else -1
    cutoff = min(max1, max2)
    unmatched = k1 ^ k2
    excess = sum(1 for k in unmatched if k > cutoff)
    disjoint = len(unmatched) - excess
    matching = k1 & k2
    w_bar = (sum(abs(g1.conns[k].weight - g2.conns[k].weight) for k in matching) / len(matching)
             if matching else 0.0)
    n = max(len(k1), len(k2), 1)
    return cfg.c1 * excess / n + cfg.c2 * disjoint / n + cfg.c3 * w_bar


def speciate(
    population: list[Genome],
    previous: list[Species] | None,
    cfg: EvolutionConfig,
    next_species_id: int = 0,
) -> list[Species]:
    """Greedy assignment to the first compatible species, else found a new one.

    Representatives come from the previous generation's species; species that
    attract no members disappear.
    """
    species = [Species(s.species_id, s.representative, [], s.best_fitness, s.stagnation)
               for s in (previous or [])]
    next_id = max([next_species_id] + [s.species_id + 1 for s in species])
    for g in population:
        for s in species:
            if compatibility_distance(g, s.representative, cfg) < cfg.compat_threshold:
                s.members.append(g)
                break
        else:
            species.append(Species(next_id, g, [g]))
            next_id += 1
    return [s for s in species if s.members]


def shared_fitness(genome: Genome, species: Species) -> float:
    return genome.fitness / species.size


def allocate_quotas(totals: list[float], n: int) -> list[int]:
    """Largest-remainder split of ``n`` offspring proportional to ``totals``."""
    if not totals:
        return []
    t = np.maximum(np.asarray(totals, dtype=float), 0.0)
    if t.sum() <= 0:
        t = np.ones_like(t)
    raw = t / t.sum() * n
    quotas = np.floor(raw).astype(int)
    remainder = n - int(quotas.sum())
    order = sorted(range(len(t)), key=lambda i: (-(raw[i] - quotas[i]), i))
    for i in order[:remainder]:
        quotas[i] += 1
    return [int(q) for q in quotas]


def crossover(parent_a: Genome, parent_b: Genome, rng: np.random.Generator,
              reenable_prob: float = 0.25) -> Genome:
    """Align genes by innovation; ``parent_a`` must be the fitter parent.

    Structure (nodes, endpoints, recurrence flags) comes from ``parent_a``.
    Matching genes take weight and plasticity coefficients from one parent
    chosen per gene.
    """
    child = Genome(-1, copy.deepcopy(parent_a.nodes))
    for innov in sorted(parent_a.conns):
        ga = parent_a.conns[innov]
        gb = parent_b.conns.get(innov)
        gene = ConnGene(**vars(ga))
        disabled = not ga.enabled
        if gb is not None:
            if rng.random() < 0.5:
                gene.weight, gene.k_m, gene.k_c = gb.weight, gb.k_m, gb.k_c
            disabled = disabled or not gb.enabled
        if disabled:
            gene.enabled = bool(rng.random() < reenable_prob)
        child.conns[innov] = gene
    return child


def _add_node(g: Genome, registry: InnovationRegistry, rng: np.random.Generator) -> bool:
    candidates = [c for c in g.sorted_conns() if c.enabled]
    if not candidates:
        return False
    old = candidates[rng.integers(len(candidates))]
    node = registry.split_node(old.innovation, set(g.nodes))
    g.nodes[node] = NodeGene(node, "hidden")
    old.enabled = False
    in_innov = registry.conn_innovation(old.src, node)
    g.conns[in_innov] = ConnGene(in_innov, old.src, node, 1.0, True, False, old.k_m, old.k_c)
    out_innov = registry.conn_innovation(node, old.dst)
    rec = creates_cycle(g, node, old.dst)
    g.conns[out_innov] = ConnGene(out_innov, node, old.dst, old.weight, True, rec, old.k_m, old.k_c)
    return True


def _add_connection(g: Genome, registry: InnovationRegistry, rng: np.random.Generator) -> bool:
    existing = {(c.src, c.dst) for c in g.conns.values()}
    sources = sorted(n for n, ng in g.nodes.items() if ng.layer in ("input", "bias", "hidden"))
    targets = sorted(n for n, ng in g.nodes.items() if ng.layer in ("hidden", "output"))
    options = []
    for s in sources:
        for t in targets:
            if (s, t) in existing:
                continue
            rec = creates_cycle(g, s, t)
            if rec and not (g.nodes[s].layer == g.nodes[t].layer == "hidden"):
                continue
            options.append((s, t, rec))
    if not options:
        return False
    s, t, rec = options[rng.integers(len(options))]
    innov = registry.conn_innovation(s, t)
    g.conns[innov] = ConnGene(innov, s, t, float(rng.uniform(-1.0, 1.0)), True, rec)
    return True


def _mutate_hebb(g: Genome, cfg: EvolutionConfig, rng: np.random.Generator) -> None:
    for c in g.sorted_conns():
        if rng.random() < cfg.hebb_mutate_rate:
            c.k_m = float(np.clip(c.k_m + rng.normal(0.0, cfg.km_sigma), *KM_BOUNDS))
            c.k_c = float(np.clip(c.k_c + rng.normal(0.0, cfg.kc_sigma), *KC_BOUNDS))


def mutate(genome: Genome, registry: InnovationRegistry, cfg: EvolutionConfig,
           rng: np.random.Generator) -> Genome:
    """Mutate in place (and return) according to the configured stage."""
    if cfg.stage == PLASTICITY_ONLY:
        _mutate_hebb(genome, cfg, rng)
        return genome
    if rng.random() < cfg.p_add_node:
        _add_node(genome, registry, rng)
    if rng.random() < cfg.p_add_conn:
        _add_connection(genome, registry, rng)
    for c in genome.sorted_conns():
        r = rng.random()
        if r < cfg.weight_perturb_rate:
            c.weight += rng.normal(0.0, cfg.weight_sigma)
        elif r < cfg.weight_perturb_rate + cfg.weight_replace_rate:
            c.weight = rng.uniform(-1.0, 1.0)
        c.weight = float(min(max(c.weight, -1.0), 1.0))
    return genome


class _IdCounter:
    def __init__(self, start: int):
        self.next = start

    def __call__(self) -> int:
        n = self.next
        self.next += 1
        return n


def reproduce(
    species: list[Species],
    cfg: EvolutionConfig,
    registry: InnovationRegistry,
    rng: np.random.Generator,
    next_id: Callable[[], int],
) -> list[Genome]:
    """Build the next generation; the previous one is discarded.

    Offspring are shared out by each species' total shared fitness, parents
    come from the top ``survival_fraction`` of each species, and the overall
    champion is carried over unchanged.
    """
    # stage two must not flip enabled flags, or crossover would edit the topology
    reenable = 0.0 if cfg.stage == PLASTICITY_ONLY else cfg.reenable_prob
    everyone = sorted((g for s in species for g in s.members), key=rank_key)
    children = [everyone[i].clone(next_id()) for i in range(min(cfg.elitism, len(everyone)))]
    quotas = allocate_quotas([s.total_shared_fitness() for s in species],
                             cfg.population_size - len(children))
    for s, quota in zip(species, quotas):
        ranked = sorted(s.members, key=rank_key)
        n_par = max(1, math.ceil(cfg.survival_fraction * len(ranked)))
        parents = ranked[:n_par]
        for _ in range(quota):
            if n_par > 1 and rng.random() < cfg.crossover_rate:
                i, j = sorted(rng.choice(n_par, size=2, replace=False))
                child = crossover(parents[i], parents[j], rng, reenable)
            else:
                child = parents[int(rng.integers(n_par))].clone()
            child.genome_id = next_id()
            child.fitness, child.feasible = 0.0, False
            children.append(mutate(child, registry, cfg, rng))
    return children


def plastic_population(champion: Genome, cfg: EvolutionConfig, rng: np.random.Generator,
                       next_id: Callable[[], int]) -> list[Genome]:
    """Stage-two seed: champion copies with random Hebbian coefficients.

    ``k_m`` is drawn from +-km_init and ``k_c`` from +-kc_init. The first
    member keeps every ``k_m`` at zero, which makes the rule inert,
    so the plastic search starts no worse than the fixed-weight champion.
    """
    pop = []
    for i in range(cfg.population_size):
        g = champion.clone(next_id())
        for c in g.sorted_conns():
            if i == 0:
                c.k_m, c.k_c = 0.0, 0.0
            else:
                c.k_m = float(rng.uniform(-cfg.km_init, cfg.km_init))
                c.k_c = float(rng.uniform(-cfg.kc_init, cfg.kc_init))
        g.fitness, g.feasible = 0.0, False
        pop.append(g)
    return pop


@dataclass
class GenerationStats:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_feasible: bool
    n_species: int
    best_ever_fitness: float
    best_ever_id: int


@dataclass
class EvolutionResult:
    champion: Genome
    history: list[GenerationStats]
    population: list[Genome]
    registry: InnovationRegistry
    generations: int


def _evaluate_all(population: list[Genome], evaluator: Callable[[Genome], FitnessReport],
                  executor: Executor | None) -> list[FitnessReport]:
    try:
        if executor is None:
            return [evaluator(g) for g in population]
        # map() yields in submission order, so parallel runs merge deterministically.
        return list(executor.map(evaluator, population, chunksize=max(1, len(population) // 16)))
    except Exception as exc:  # noqa: BLE001 - re-raised with context
        raise EvolutionError(f"evaluation failed: {exc!r}") from exc


def evolve(
    population: list[Genome],
    evaluator: Callable[[Genome], FitnessReport],
    cfg: EvolutionConfig,
    registry: InnovationRegistry,
    rng: np.random.Generator,
    executor: Executor | None = None,
    on_generation: Callable[[int, list[Genome], GenerationStats], None] | None = None,
) -> EvolutionResult:
    """Evaluate, speciate and reproduce until stagnation or the generation cap."""
    if len(population) != cfg.population_size:
        raise ConfigError(f"population has {len(population)} genomes, expected {cfg.population_size}")
    next_id = _IdCounter(max(g.genome_id for g in population) + 1)
    species: list[Species] = []
    history: list[GenerationStats] = []
    best_ever: Genome | None = None
    since_improvement = 0
    gen = 0
    while True:
        reports = _evaluate_all(population, evaluator, executor)
        for g, r in zip(population, reports):
            g.fitness, g.feasible = r.fitness, r.feasible
        species = speciate(population, species, cfg)
        for s in species:
            top = max(m.fitness for m in s.members)
            if top > s.best_fitness:
                s.best_fitness, s.stagnation = top, 0
            else:
                s.stagnation += 1
            s.representative = min(s.members, key=rank_key)

        gen_best = min(population, key=rank_key)
        if best_ever is None or rank_key(gen_best) < rank_key(best_ever):
            improved = best_ever is None or (gen_best.feasible, gen_best.fitness) != (
                best_ever.feasible, best_ever.fitness)
            best_ever = gen_best.clone()
            since_improvement = 0 if improved else since_improvement + 1
        else:
            since_improvement += 1
        stats = GenerationStats(
            generation=gen,
            best_fitness=gen_best.fitness,
            mean_fitness=float(np.mean([g.fitness for g in population])),
            best_feasible=gen_best.feasible,
            n_species=len(species),
            best_ever_fitness=best_ever.fitness,
            best_ever_id=best_ever.genome_id,
        )
        history.append(stats)
        log.info("gen %d best %.4f mean %.4f species %d", gen, stats.best_fitness,
                 stats.mean_fitness, stats.n_species)
        if on_generation is not None:
            on_generation(gen, population, stats)
        gen += 1
        if since_improvement >= cfg.stagnation_limit or gen >= cfg.max_generations:
            break
        population = reproduce(species, cfg, registry, rng, next_id)
    return EvolutionResult(best_ever, history, population, registry, gen)
