"""Process-pool evaluation must not change any result."""
from dataclasses import replace

from plasticsnn.archive import PopulationArchive, export_trace, serialize_population
from plasticsnn.harness import EpisodeConfig, ExperimentConfig, Plant, evaluate, run_pair
from plasticsnn.neat import EvolutionConfig

CFG = ExperimentConfig(episode=EpisodeConfig(duration=8.0, ref_period=2.0),
                       evolution=EvolutionConfig(population_size=12, max_generations=2))


def artifacts(cfg, tmp_path, tag):
    pair = run_pair(cfg, 11)
    texts = [serialize_population(PopulationArchive(11, len(r.history), r.population))
             for r in (pair.stage1, pair.stage2)]
    path = tmp_path / f"{tag}.csv"
    export_trace(evaluate(pair.plastic, Plant.truth(), True, cfg.episode, keep_trace=True), path)
    return texts, path.read_bytes()


def test_workers_do_not_change_results(tmp_path):
    serial = artifacts(CFG, tmp_path, "one")
    pooled = artifacts(replace(CFG, workers=2), tmp_path, "two")
    assert serial == pooled
