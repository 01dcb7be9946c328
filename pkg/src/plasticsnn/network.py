"""Phenotype construction and per-control-step evaluation of spiking controllers.

A genome compiles to flat arrays (``NetworkTopology``) that a compiled kernel
steps through. Node slots are ordered ``[e_z, v_z, bias, hidden..., output]``
with hidden neurons in feed-forward topological order, so a non-recurrent
hidden link always reads an activation already updated in the same substep
while recurrent links read the previous substep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigError, NumericDomainError, StructuralError
from .genome import Genome
from .plasticity import HebbianRule, hebb_rate
from .snn import EncoderConfig, IzhikevichParams, izh_update, membrane_fraction

# Layout of the packed parameter vector handed to the kernels.
P_A, P_B, P_C, P_D, P_VT = 0, 1, 2, 3, 4
P_IMAX = 5
P_EZ_MIN, P_EZ_MAX, P_VZ_MIN, P_VZ_MAX = 6, 7, 8, 9
P_DT_NEURON = 10
P_KMAX = 11
P_RATE_WINDOW = 12
P_RMAX = 13
P_AP, P_AM, P_TP, P_TM = 14, 15, 16, 17
P_DT_CONTROL = 18
N_PARAMS = 19

SLOT_EZ, SLOT_VZ, SLOT_BIAS = 0, 1, 2
FIRST_HIDDEN_SLOT = 3

LAYER_CODE = {"input": 0, "bias": 1, "hidden": 2, "output": 3}


@dataclass(frozen=True)
class NetworkConfig:
    izh: IzhikevichParams = field(default_factory=IzhikevichParams)
    ez_encoder: EncoderConfig = field(default_factory=lambda: EncoderConfig(-5.0, 5.0, 15.0))
    vz_encoder: EncoderConfig = field(default_factory=lambda: EncoderConfig(-3.0, 3.0, 15.0))
    dt_neuron_ms: float = 1.0
    dt_control: float = 0.02
    decode_window: float = 0.02
    k_max: int = 10
    rate_window: float = 0.1
    r_max: float = 100.0
    hebb: HebbianRule = field(default_factory=HebbianRule)

    def __post_init__(self):
        if not 0 < self.dt_neuron_ms <= 1.0:
            raise ConfigError("neuron step must lie in (0, 1] ms")
        if self.ez_encoder.i_max != self.vz_encoder.i_max:
            raise ConfigError("both encoders must share i_max")
        for name in ("dt_control", "decode_window", "rate_window"):
            steps = getattr(self, name) * 1000.0 / self.dt_neuron_ms
            if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
                raise ConfigError(f"{name} must be a whole number of neuron steps")
        if self.decode_steps > self.rate_steps:
            raise ConfigError("decode window cannot exceed the rate window")

    @property
    def substeps(self) -> int:
        return round(self.dt_control * 1000.0 / self.dt_neuron_ms)

    @property
    def decode_steps(self) -> int:
        return round(self.decode_window * 1000.0 / self.dt_neuron_ms)

    @property
    def rate_steps(self) -> int:
        return round(self.rate_window * 1000.0 / self.dt_neuron_ms)

    @property
    def i_max(self) -> float:
        return self.ez_encoder.i_max

    def packed(self) -> np.ndarray:
        p = np.zeros(N_PARAMS)
        iz = self.izh
        p[[P_A, P_B, P_C, P_D, P_VT]] = iz.a, iz.b_iz, iz.c, iz.d, iz.v_t
        p[P_IMAX] = self.i_max
        p[[P_EZ_MIN, P_EZ_MAX]] = self.ez_encoder.in_min, self.ez_encoder.in_max
        p[[P_VZ_MIN, P_VZ_MAX]] = self.vz_encoder.in_min, self.vz_encoder.in_max
        p[P_DT_NEURON] = self.dt_neuron_ms
        p[P_KMAX] = self.k_max
        p[P_RATE_WINDOW] = self.rate_window
        p[P_RMAX] = self.r_max
        h = self.hebb
        p[[P_AP, P_AM, P_TP, P_TM]] = h.a_plus, h.a_minus, h.tau_plus, h.tau_minus
        p[P_DT_CONTROL] = self.dt_control
        return p


@dataclass(eq=False)
class NetworkTopology:
    node_ids: np.ndarray  # genome node id per slot
    layers: np.ndarray  # LAYER_CODE per slot
    n_hidden: int
    conn_innov: np.ndarray
    conn_src: np.ndarray  # slot indices
    conn_dst: np.ndarray
    conn_weight: np.ndarray  # genome weights, the reset target for live weights
    conn_rec: np.ndarray
    conn_km: np.ndarray
    conn_kc: np.ndarray
    dst_start: np.ndarray  # conns feeding slot s live in [dst_start[s], dst_start[s+1])
    params: np.ndarray
    config: NetworkConfig

    @property
    def n_slots(self) -> int:
        return len(self.node_ids)

    @property
    def output_slot(self) -> int:
        return FIRST_HIDDEN_SLOT + self.n_hidden

    @property
    def n_conns(self) -> int:
        return len(self.conn_src)

    def slot_of(self, node_id: int) -> int:
        return int(np.flatnonzero(self.node_ids == node_id)[0])


@dataclass(eq=False)
class NetworkState:
    v: np.ndarray
    u: np.ndarray
    ring: np.ndarray  # (n_hidden, rate_steps) spike flags per neuron substep
    cnt_decode: np.ndarray
    cnt_rate: np.ndarray
    act: np.ndarray
    act_prev: np.ndarray
    weights: np.ndarray
    counters: np.ndarray  # [ring position, substeps run]
    w0: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, NetworkState):
            return NotImplemented
        names = ("v", "u", "ring", "cnt_decode", "cnt_rate", "act", "act_prev", "weights", "counters", "w0")
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in names)

    def copy(self) -> "NetworkState":
        return NetworkState(*(getattr(self, n).copy() for n in (
            "v", "u", "ring", "cnt_decode", "cnt_rate", "act", "act_prev", "weights", "counters", "w0")))


def _hidden_order(genome: Genome) -> list[int]:
    hidden = genome.hidden_ids()
    hidden_set = set(hidden)
    indeg = {h: 0 for h in hidden}
    succ: dict[int, list[int]] = {h: [] for h in hidden}
    for c in genome.sorted_conns():
        if c.enabled and not c.recurrent and c.src in hidden_set and c.dst in hidden_set:
            succ[c.src].append(c.dst)
            indeg[c.dst] += 1
    ready = sorted(h for h in hidden if indeg[h] == 0)
    order = []
    while ready:
        n = ready.pop(0)
        order.append(n)
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
                ready.sort()
    if len(order) != len(hidden):
        raise StructuralError(f"genome {genome.genome_id}: cycle among non-recurrent hidden links")
    return order


def _check_genome(genome: Genome) -> None:
    nodes = genome.nodes
    layers = [g.layer for g in nodes.values()]
    if layers.count("bias") != 1:
        raise StructuralError("a network needs exactly one bias node")
    if layers.count("output") != 1:
        raise StructuralError("a network needs exactly one output node")
    if layers.count("input") != 2:
        raise StructuralError("a network needs exactly two input nodes")
    seen = set()
    for c in genome.sorted_conns():
        if c.src not in nodes or c.dst not in nodes:
            raise StructuralError(f"connection {c.innovation} references a missing node")
        if not c.enabled:
            continue
        src_layer, dst_layer = nodes[c.src].layer, nodes[c.dst].layer
        if dst_layer in ("input", "bias"):
            raise StructuralError(f"connection {c.innovation} feeds an {dst_layer} node")
        if src_layer == "output":
            raise StructuralError(f"connection {c.innovation} leaves the output node")
        if c.recurrent and not (src_layer == dst_layer == "hidden"):
            raise StructuralError(f"recurrent connection {c.innovation} outside the hidden layer")
        if not -1.0 <= c.weight <= 1.0 or not math.isfinite(c.weight):
            raise StructuralError(f"connection {c.innovation} weight {c.weight} out of [-1, 1]")
        if (c.src, c.dst) in seen:
            raise StructuralError(f"duplicate enabled connection {c.src}->{c.dst}")
        seen.add((c.src, c.dst))


def compile_topology(genome: Genome, config: NetworkConfig | None = None) -> NetworkTopology:
    config = config or NetworkConfig()
    _check_genome(genome)
    by_layer = {layer: sorted(n for n, g in genome.nodes.items() if g.layer == layer)
                for layer in ("input", "bias", "output")}
    hidden = _hidden_order(genome)
    # Input order follows node ids: the lower id carries e_z, the higher v_z.
    slots = by_layer["input"] + by_layer["bias"] + hidden + by_layer["output"]
    slot = {n: i for i, n in enumerate(slots)}
    layers = np.array([LAYER_CODE[genome.nodes[n].layer] for n in slots], dtype=np.int64)

    enabled = [c for c in genome.sorted_conns() if c.enabled]
    enabled.sort(key=lambda c: (slot[c.dst], c.innovation))
    n_slots = len(slots)
    dst_start = np.zeros(n_slots + 1, dtype=np.int64)
    for c in enabled:
        dst_start[slot[c.dst] + 1] += 1
    dst_start = np.cumsum(dst_start)

    return NetworkTopology(
        node_ids=np.array(slots, dtype=np.int64),
        layers=layers,
        n_hidden=len(hidden),
        conn_innov=np.array([c.innovation for c in enabled], dtype=np.int64),
        conn_src=np.array([slot[c.src] for c in enabled], dtype=np.int64),
        conn_dst=np.array([slot[c.dst] for c in enabled], dtype=np.int64),
        conn_weight=np.array([c.weight for c in enabled], dtype=np.float64),
        conn_rec=np.array([c.recurrent for c in enabled], dtype=np.bool_),
        conn_km=np.array([c.k_m for c in enabled], dtype=np.float64),
        conn_kc=np.array([c.k_c for c in enabled], dtype=np.float64),
        dst_start=dst_start,
        params=config.packed(),
        config=config,
    )


def fresh_state(topo: NetworkTopology) -> NetworkState:
    h = topo.n_hidden
    cfg = topo.config
    state = NetworkState(
        v=np.empty(h),
        u=np.empty(h),
        ring=np.zeros((h, cfg.rate_steps), dtype=np.uint8),
        cnt_decode=np.zeros(h, dtype=np.int64),
        cnt_rate=np.zeros(h, dtype=np.int64),
        act=np.zeros(topo.n_slots),
        act_prev=np.zeros(topo.n_slots),
        weights=topo.conn_weight.copy(),
        counters=np.zeros(2, dtype=np.int64),
        w0=topo.conn_weight.copy(),
    )
    return reset_network(state, topo)


def reset_network(state: NetworkState, topo: NetworkTopology | None = None) -> NetworkState:
    """Fresh-episode state: neurons at reset potential, history cleared, genome weights restored."""
    if topo is not None:
        c, b = topo.config.izh.c, topo.config.izh.b_iz
    else:
        c, b = IzhikevichParams().c, IzhikevichParams().b_iz
    state.v[:] = c
    state.u[:] = b * c
    state.ring[:] = 0
    state.cnt_decode[:] = 0
    state.cnt_rate[:] = 0
    state.act[:] = 0.0
    state.act_prev[:] = 0.0
    state.weights[:] = state.w0
    state.counters[:] = 0
    if topo is not None:
        # Silent neurons still read a membrane fraction; it is zero at v = c.
        frac = membrane_fraction(c, c, topo.config.izh.v_t)
        state.act[FIRST_HIDDEN_SLOT:FIRST_HIDDEN_SLOT + topo.n_hidden] = frac / topo.config.k_max
    return state


def build_network(genome: Genome, config: NetworkConfig | None = None) -> tuple[NetworkTopology, NetworkState]:
    topo = compile_topology(genome, config)
    return topo, fresh_state(topo)


@njit(cache=True)
def _clamp01(x):
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


@njit(cache=True)
def control_step(params, n_hidden, layers, conn_src, conn_dst, conn_rec, conn_km, conn_kc, dst_start,
                 substeps, decode_steps, v, u, ring, cnt_decode, cnt_rate, act, act_prev,
                 weights, counters, e_z, v_z, plastic):
    """One control period: encode, integrate hidden neurons, read out thrust, adapt.

    Returns the thrust command, or NaN if the neuron integration blew up.
    """
    a = params[P_A]
    b = params[P_B]
    c = params[P_C]
    d = params[P_D]
    vt = params[P_VT]
    i_max = params[P_IMAX]
    dt_n = params[P_DT_NEURON]
    k_max = params[P_KMAX]
    rate_steps = ring.shape[1]

    act[SLOT_EZ] = _clamp01((e_z - params[P_EZ_MIN]) / (params[P_EZ_MAX] - params[P_EZ_MIN]))
    act[SLOT_VZ] = _clamp01((v_z - params[P_VZ_MIN]) / (params[P_VZ_MAX] - params[P_VZ_MIN]))
    act[SLOT_BIAS] = 1.0

    for _ in range(substeps):
        for s in range(act.shape[0]):
            act_prev[s] = act[s]
        pos = counters[0]
        leaving = (pos - decode_steps) % rate_steps
        for h in range(n_hidden):
            slot = FIRST_HIDDEN_SLOT + h
            drive = 0.0
            for k in range(dst_start[slot], dst_start[slot + 1]):
                if conn_rec[k]:
                    drive += weights[k] * act_prev[conn_src[k]]
                else:
                    drive += weights[k] * act[conn_src[k]]
            vn, un, fired = izh_update(v[h], u[h], drive * i_max, a, b, c, d, vt, dt_n)
            if not (np.isfinite(vn) and np.isfinite(un)):
                return np.nan
            v[h] = vn
            u[h] = un
            cnt_decode[h] -= ring[h, leaving]
            cnt_rate[h] -= ring[h, pos]
            flag = 1 if fired else 0
            ring[h, pos] = flag
            cnt_decode[h] += flag
            cnt_rate[h] += flag
            act[slot] = _clamp01((cnt_decode[h] + membrane_fraction(vn, c, vt)) / k_max)
        counters[0] = (pos + 1) % rate_steps
        counters[1] += 1

    out = FIRST_HIDDEN_SLOT + n_hidden
    total = 0.0
    for k in range(dst_start[out], dst_start[out + 1]):
        total += weights[k] * act[conn_src[k]]
    thrust = _clamp01(total)
    act[out] = thrust

    if plastic:
        r_max = params[P_RMAX]
        window = params[P_RATE_WINDOW]
        dt_c = params[P_DT_CONTROL]
        for k in range(conn_src.shape[0]):
            src = conn_src[k]
            lay = layers[src]
            if lay == 2:
                u_pre = cnt_rate[src - FIRST_HIDDEN_SLOT] / window
            else:
                # Encoders and bias expose a notional rate proportional to their drive.
                u_pre = act[src] * r_max
            dst = conn_dst[k]
            if dst == out:
                u_post = thrust * r_max
            else:
                u_post = cnt_rate[dst - FIRST_HIDDEN_SLOT] / window
            w = weights[k] + dt_c * hebb_rate(u_pre, u_post, params[P_AP], params[P_AM],
                                             params[P_TP], params[P_TM], conn_km[k], conn_kc[k])
            if w > 1.0:
                w = 1.0
            elif w < -1.0:
                w = -1.0
            weights[k] = w
    return thrust


def network_step(
    state: NetworkState,
    topo: NetworkTopology,
    inputs: tuple[float, float],
    dt_control: float | None = None,
    plastic: bool = False,
) -> float:
    """Advance the network by one control period and return the thrust command in [0, 1]."""
    cfg = topo.config
    if dt_control is not None and abs(dt_control - cfg.dt_control) > 1e-12:
        raise ConfigError(f"network configured for dt_control={cfg.dt_control}, got {dt_control}")
    e_z, v_z = inputs
    if not (math.isfinite(e_z) and math.isfinite(v_z)):
        raise NumericDomainError(f"non-finite network input ({e_z}, {v_z})")
    thrust = control_step(
        topo.params, topo.n_hidden, topo.layers, topo.conn_src, topo.conn_dst, topo.conn_rec, topo.conn_km,
        topo.conn_kc, topo.dst_start, cfg.substeps, cfg.decode_steps, state.v, state.u, state.ring,
        state.cnt_decode, state.cnt_rate, state.act, state.act_prev, state.weights, state.counters,
        float(e_z), float(v_z), bool(plastic),
    )
    if not math.isfinite(thrust):
        raise NumericDomainError("neuron integration blew up")
    return thrust
