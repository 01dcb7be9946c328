"""Genome encoding with historical markings."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .plasticity import HebbianRule

EZ_NODE = 0
VZ_NODE = 1
BIAS_NODE = 2
OUTPUT_NODE = 3
FIRST_HIDDEN = 4

LAYER_KIND = {"input": "encoder", "hidden": "spiking", "output": "linear", "bias": "constant"}


@dataclass
class NodeGene:
    node_id: int
    layer: str
    kind: str = ""

    def __post_init__(self):
        if self.layer not in LAYER_KIND:
            raise ValueError(f"unknown layer {self.layer!r}")
        if not self.kind:
            self.kind = LAYER_KIND[self.layer]


@dataclass
class ConnGene:
    innovation: int
    src: int
    dst: int
    weight: float
    enabled: bool = True
    recurrent: bool = False
    k_m: float = 0.0
    k_c: float = 0.0

    def rule(self, base: HebbianRule | None = None) -> HebbianRule:
        base = base or HebbianRule()
        return HebbianRule(base.a_plus, base.a_minus, base.tau_plus, base.tau_minus, self.k_m, self.k_c)


@dataclass
class Genome:
    genome_id: int
    nodes: dict[int, NodeGene] = field(default_factory=dict)
    conns: dict[int, ConnGene] = field(default_factory=dict)
    fitness: float = 0.0
    feasible: bool = False

    @property
    def size(self) -> int:
        return len(self.nodes) + len(self.conns)

    def hidden_ids(self) -> list[int]:
        return sorted(n for n, g in self.nodes.items() if g.layer == "hidden")

    def sorted_conns(self) -> list[ConnGene]:
        return [self.conns[k] for k in sorted(self.conns)]

    def enabled_pairs(self) -> set[tuple[int, int]]:
        return {(c.src, c.dst) for c in self.conns.values() if c.enabled}

    def clone(self, genome_id: int | None = None) -> "Genome":
        g = copy.deepcopy(self)
        if genome_id is not None:
            g.genome_id = genome_id
        return g

    def structure_key(self) -> tuple:
        """Topology and weights, ignoring plasticity coefficients and fitness."""
        return tuple(
            (c.innovation, c.src, c.dst, c.weight, c.enabled, c.recurrent) for c in self.sorted_conns()
        )


class InnovationRegistry:
    """Run-global bookkeeping that hands out innovation numbers and node ids.

    The same structural change (a connection between the same endpoints, or
    a split of the same connection) always receives the same id.
    """

    def __init__(self):
        self._conn: dict[tuple[int, int], int] = {}
        self._split: dict[tuple[int, int], int] = {}
        self.next_innovation = 0
        self.next_node_id = FIRST_HIDDEN

    def conn_innovation(self, src: int, dst: int) -> int:
        key = (src, dst)
        if key not in self._conn:
            self._conn[key] = self.next_innovation
            self.next_innovation += 1
        return self._conn[key]

    def split_node(self, innovation: int, taken: set[int] | frozenset = frozenset()) -> int:
        # A genome can split the same gene again after re-enabling it; the
        # occurrence index keeps that second split distinct but still shared.
        occurrence = 0
        while True:
            key = (innovation, occurrence)
            if key not in self._split:
                self._split[key] = self.next_node_id
                self.next_node_id += 1
            node = self._split[key]
            if node not in taken:
                return node
            occurrence += 1

    def reserve_node(self, node_id: int) -> None:
        self.next_node_id = max(self.next_node_id, node_id + 1)

    def __len__(self) -> int:
        return len(self._conn) + len(self._split)


def minimal_genome(
    genome_id: int,
    registry: InnovationRegistry,
    rng: np.random.Generator,
    n_hidden: int = 4,
) -> Genome:
    """Fully connected feed-forward 2-n-1 network plus a bias feeding every hidden and output node."""
    g = Genome(genome_id)
    g.nodes[EZ_NODE] = NodeGene(EZ_NODE, "input")
    g.nodes[VZ_NODE] = NodeGene(VZ_NODE, "input")
    g.nodes[BIAS_NODE] = NodeGene(BIAS_NODE, "bias")
    g.nodes[OUTPUT_NODE] = NodeGene(OUTPUT_NODE, "output")
    hidden = list(range(FIRST_HIDDEN, FIRST_HIDDEN + n_hidden))
    for h in hidden:
        g.nodes[h] = NodeGene(h, "hidden")
        registry.reserve_node(h)
    pairs = [(i, h) for i in (EZ_NODE, VZ_NODE) for h in hidden]
    pairs += [(BIAS_NODE, h) for h in hidden]
    pairs += [(h, OUTPUT_NODE) for h in hidden]
    pairs.append((BIAS_NODE, OUTPUT_NODE))
    weights = rng.uniform(-1.0, 1.0, size=len(pairs))
    for (src, dst), w in zip(pairs, weights):
        innov = registry.conn_innovation(src, dst)
        g.conns[innov] = ConnGene(innov, src, dst, float(w))
    return g


def creates_cycle(genome: Genome, src: int, dst: int) -> bool:
    """Whether adding src->dst closes a loop among the non-recurrent links.

    All genes count, enabled or not, so re-enabling a gene can never create
    a feed-forward cycle.
    """
    if src == dst:
        return True
    adj: dict[int, list[int]] = {}
    for c in genome.conns.values():
        if not c.recurrent:
            adj.setdefault(c.src, []).append(c.dst)
    stack, seen = [dst], set()
    while stack:
        n = stack.pop()
        if n == src:
            return True
        if n in seen:
            continue
        seen.add(n)
        stack.extend(adj.get(n, ()))
    return False
