"""Shared experiment drivers and recorded data columns for the test suite."""
from __future__ import annotations

import numpy as np

from plasticsnn.plasticity import HebbianRule, hebbian_update
from plasticsnn.snn import IzhikevichParams, NeuronState, decode_activation, neuron_step, window_rate

# Truth-plant fitness of ten fixed-weight / plastic controller pairs.
FIXED_COLUMN = [0.9188, 0.9074, 0.9261, 0.9280, 0.9053, 0.9046, 0.9174, 0.9188, 0.9219, 0.9210]
PLASTIC_COLUMN = [0.9350, 0.9271, 0.9396, 0.9465, 0.9162, 0.9166, 0.9338, 0.9256, 0.9366, 0.9207]


def two_neuron_run(w0: float, i_pre: float = 6.0, i_base: float = 5.0, duration: float = 60.0,
                   window: float = 1.0, rule: HebbianRule | None = None, i_max: float = 15.0):
    """Pre neuron under constant drive feeds a post neuron through one plastic synapse.

    The post neuron gets ``i_base + i_max * w * a_pre``; the weight follows the
    rate rule once per 20 ms using trailing-window rates. Returns arrays of
    (weight, pre rate, post rate) per control step.
    """
    rule = rule or HebbianRule(k_m=1.0, k_c=0.0)
    p = IzhikevichParams()
    pre, post = NeuronState.at_rest(p), NeuronState.at_rest(p)
    w = w0
    out = []
    for _ in range(int(round(duration / 0.02))):
        for _ in range(20):
            a_pre = decode_activation(pre, p)
            pre, _ = neuron_step(pre, p, i_pre)
            post, _ = neuron_step(post, p, i_base + i_max * w * a_pre)
            horizon = pre.t - 2 * window
            pre.spike_times = [t for t in pre.spike_times if t > horizon]
            post.spike_times = [t for t in post.spike_times if t > horizon]
        r_pre, r_post = window_rate(pre, window), window_rate(post, window)
        w = hebbian_update(w, r_pre, r_post, rule, 0.02)
        out.append((w, r_pre, r_post))
    return np.array(out)
