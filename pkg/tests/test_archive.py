import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plasticsnn.archive import (TRACE_HEADER, PopulationArchive, export_trace, parse_population,
                                read_champion, serialize_population, write_population)
from plasticsnn.errors import ArchiveParseError
from plasticsnn.genome import InnovationRegistry, minimal_genome
from plasticsnn.harness import Plant, evaluate
from plasticsnn.neat import PLASTICITY_ONLY, EvolutionConfig, crossover, mutate


def random_population(seed: int, n: int = 6) -> PopulationArchive:
    rng = np.random.default_rng(seed)
    reg = InnovationRegistry()
    cfg = EvolutionConfig(population_size=10, p_add_node=0.3, p_add_conn=0.3)
    hebb = EvolutionConfig(population_size=10, stage=PLASTICITY_ONLY, hebb_mutate_rate=1.0,
                           km_sigma=0.5, kc_sigma=10.0)
    pop = []
    for i in range(n):
        g = minimal_genome(i, reg, rng)
        for _ in range(int(rng.integers(0, 6))):
            mutate(g, reg, cfg, rng)
        mutate(g, reg, hebb, rng)
        g.fitness, g.feasible = float(rng.random()), bool(rng.random() < 0.5)
        pop.append(g)
    pop.append(crossover(pop[0], pop[1], rng))
    pop[-1].genome_id = n
    return PopulationArchive(seed=seed, generation=int(rng.integers(0, 50)), genomes=pop)


class TestPopulationArchive:
    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=40)
    def test_round_trip(self, seed):
        arch = random_population(seed)
        text = serialize_population(arch)
        back = parse_population(text)
        assert back == arch
        assert serialize_population(back) == text

    def test_minimal_genome_lines(self):
        g = minimal_genome(0, InnovationRegistry(), np.random.default_rng(0))
        lines = serialize_population(PopulationArchive(genomes=[g])).splitlines()
        assert sum(l.startswith("node ") for l in lines) == 8
        assert sum(l.startswith("conn ") for l in lines) == 17

    def test_empty_population(self):
        text = serialize_population(PopulationArchive(seed=3, generation=0))
        assert text == "format 1\nseed 3\ngeneration 0\n"
        assert parse_population(text) == PopulationArchive(seed=3)

    def test_extreme_floats_survive(self):
        g = minimal_genome(0, InnovationRegistry(), np.random.default_rng(0))
        g.fitness = 1 / 3
        g.sorted_conns()[0].weight = 5e-324
        g.sorted_conns()[1].k_c = -49.99999999999999
        arch = PopulationArchive(genomes=[g])
        assert parse_population(serialize_population(arch)) == arch

    def test_comments_and_blank_lines(self):
        text = "# saved run\nformat 1\n\nseed 2  # trailing\ngeneration 4\n"
        assert parse_population(text) == PopulationArchive(seed=2, generation=4)

    @pytest.mark.parametrize("text, lineno", [
        ("format 1\nseed x\n", 2),
        ("format 2\n", 1),
        ("format 1\nnode 0 input encoder\n", 2),
        ("format 1\ngenome 0 0.5 1\nconn 0 0 4 0.5 1 0\n", 3),
        ("format 1\ngenome 0 0.5 yes\n", 2),
        ("format 1\ngenome 0 0.5 1\nnode 0 middle encoder\n", 3),
        ("format 1\ngenome 0 0.5 1\nconn 0 0 4 0.5 1 0 0 0\nconn 0 1 4 0.5 1 0 0 0\n", 4),
        ("format 1\nbogus\n", 2),
        ("format 1\ngenome 0 0.5 1\nseed 3\n", 3),
    ])
    def test_parse_errors_carry_line(self, text, lineno):
        with pytest.raises(ArchiveParseError) as err:
            parse_population(text)
        assert err.value.lineno == lineno
        assert f"line {lineno}" in str(err.value)

    def test_missing_header(self):
        with pytest.raises(ArchiveParseError):
            parse_population("seed 1\n")

    def test_champion_file(self, tmp_path):
        arch = random_population(1, 2)
        write_population(tmp_path / "c.txt", arch)
        assert read_champion(tmp_path / "c.txt") == arch.genomes[0]
        write_population(tmp_path / "e.txt", PopulationArchive())
        with pytest.raises(ArchiveParseError):
            read_champion(tmp_path / "e.txt")


@pytest.fixture(scope="module")
def report():
    g = minimal_genome(0, InnovationRegistry(), np.random.default_rng(0))
    for c in g.conns.values():
        if c.dst == 3:
            c.weight = 0.5 if c.src == 2 else 0.0
    r = evaluate(g, Plant.truth(), False)
    assert r.feasible
    return r


class TestTraceExport:
    def test_layout(self, report, tmp_path):
        path = tmp_path / "trace.csv"
        export_trace(report, path)
        lines = path.read_text().splitlines()
        assert lines[0] == TRACE_HEADER
        assert len(lines) == 4001
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert np.all(np.isfinite(data))
        assert np.all(np.diff(data[:, 0]) > 0)
        assert np.array_equal(data, report.trace)

    def test_byte_identical(self, report, tmp_path):
        export_trace(report, tmp_path / "a.csv")
        export_trace(report, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_errors(self, report, tmp_path):
        with pytest.raises(OSError):
            export_trace(report, tmp_path / "missing" / "t.csv")
        report_no_trace = type(report)(True, 1.0, 0.0, 1, 1)
        with pytest.raises(ValueError):
            export_trace(report_no_trace, tmp_path / "t.csv")
