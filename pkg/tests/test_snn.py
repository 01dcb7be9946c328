import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from plasticsnn.errors import ConfigError, NumericDomainError
from plasticsnn.snn import (EncoderConfig, IzhikevichParams, NeuronState, decode_activation,
                            encode_current, neuron_step, spikes_in_window, window_rate)

P = IzhikevichParams()


def rate_at(current: float, ms: int = 1000) -> float:
    s = NeuronState.at_rest(P)
    n = 0
    for _ in range(ms):
        s, fired = neuron_step(s, P, current)
        n += fired
        s.spike_times.clear()
    return n / (ms * 1e-3)


class TestNeuronStep:
    def test_rest_no_input(self):
        s, fired = neuron_step(NeuronState(v=-65.0, u=-13.0), P, 0.0)
        assert s.v == pytest.approx(-68.0)
        assert s.u == pytest.approx(-13.0)
        assert not fired

    def test_positive_input(self):
        s, _ = neuron_step(NeuronState(v=-65.0, u=-13.0), P, 10.0)
        assert s.v == pytest.approx(-58.0)
        assert s.u == pytest.approx(-13.0)

    def test_reset_on_threshold(self):
        s, fired = neuron_step(NeuronState(v=29.0, u=0.0), P, 0.0)
        assert fired
        assert s.v == P.c
        # u integrates over the step and then gains d
        du = P.a * (P.b_iz * 29.0 - 0.0)
        assert s.u == pytest.approx(du + P.d)
        assert s.spike_times == [0.0]

    def test_time_advances_in_seconds(self):
        s, _ = neuron_step(NeuronState(), P, 0.0, dt=0.5)
        assert s.t == pytest.approx(0.5e-3)

    @pytest.mark.parametrize("dt", [0.0, -1.0, 1.5])
    def test_dt_domain(self, dt):
        with pytest.raises(ValueError):
            neuron_step(NeuronState(), P, 0.0, dt=dt)

    @pytest.mark.parametrize("bad", [dict(v=math.nan), dict(u=math.inf)])
    def test_non_finite_state(self, bad):
        with pytest.raises(NumericDomainError):
            neuron_step(NeuronState(**bad), P, 0.0)

    def test_non_finite_current(self):
        with pytest.raises(NumericDomainError):
            neuron_step(NeuronState(), P, math.nan)

    def test_step_current_onset(self):
        s = NeuronState.at_rest(P)
        pre = post = 0
        for k in range(400):
            s, fired = neuron_step(s, P, 0.0 if k < 100 else 10.0)
            if k < 100:
                pre += fired
            else:
                post += fired
        assert pre == 0
        assert post >= 5
        tail = s.spike_times[-6:]
        isi = [b - a for a, b in zip(tail, tail[1:])]
        assert max(isi) - min(isi) <= 2e-3  # periodic once adaptation settles

    def test_rate_monotone_in_current(self):
        rates = [rate_at(i) for i in range(0, 21, 2)]
        assert rates[0] == 0
        assert all(b >= a for a, b in zip(rates, rates[1:]))
        assert rates[-1] > 0

    def test_half_steps_converge(self):
        s0 = NeuronState(v=-60.0, u=-12.0)
        one, _ = neuron_step(s0, P, 5.0, dt=1.0)
        half, _ = neuron_step(s0, P, 5.0, dt=0.5)
        half, _ = neuron_step(half, P, 5.0, dt=0.5)
        quarter = s0
        for _ in range(4):
            quarter, _ = neuron_step(quarter, P, 5.0, dt=0.25)
        e1 = abs(one.v - quarter.v)
        e2 = abs(half.v - quarter.v)
        assert e2 < e1

    @given(v=st.floats(-80, 29.9), u=st.floats(-20, 10), i=st.floats(0, 20))
    def test_post_step_below_threshold(self, v, u, i):
        s, _ = neuron_step(NeuronState(v=v, u=u), P, i)
        assert s.v <= P.v_t
        assert s.window_rate >= 0


class TestParams:
    def test_invalid_params(self):
        with pytest.raises(ConfigError):
            IzhikevichParams(a=0.0)
        with pytest.raises(ConfigError):
            IzhikevichParams(c=40.0)


class TestEncoder:
    CFG = EncoderConfig(-5.0, 5.0, 15.0)

    def test_bounds_and_midpoint(self):
        assert encode_current(-5.0, self.CFG) == 0.0
        assert encode_current(5.0, self.CFG) == 15.0
        assert encode_current(0.0, self.CFG) == 7.5

    def test_clamps_out_of_range(self):
        assert encode_current(-50.0, self.CFG) == 0.0
        assert encode_current(50.0, self.CFG) == 15.0

    def test_degenerate_range(self):
        with pytest.raises(ConfigError):
            EncoderConfig(1.0, 1.0, 15.0)

    @given(x=st.floats(-100, 100))
    def test_range(self, x):
        assert 0.0 <= encode_current(x, self.CFG) <= 15.0


class TestDecoding:
    def test_silent_at_reset(self):
        assert decode_activation(NeuronState(v=P.c, t=1.0), P) == 0.0

    def test_saturates(self):
        s = NeuronState(v=0.0, t=1.0, spike_times=[1.0 - 0.001 * k for k in range(1, 11)])
        assert decode_activation(s, P) == 1.0

    def test_fractional_spike(self):
        mid = 0.5 * (P.c + P.v_t)
        s = NeuronState(v=mid, t=1.0, spike_times=[0.985, 0.99, 0.995])
        assert decode_activation(s, P) == pytest.approx(0.35)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            decode_activation(NeuronState(), P, window=0.0)
        with pytest.raises(ValueError):
            decode_activation(NeuronState(), P, k_max=0)

    @given(v=st.floats(-100, 30), k=st.integers(0, 15))
    def test_range_and_zero(self, v, k):
        s = NeuronState(v=v, t=1.0, spike_times=[1.0 - 0.001 * (j + 1) for j in range(k)])
        a = decode_activation(s, P)
        assert 0.0 <= a <= 1.0
        assert (a == 0.0) == (k == 0 and v <= P.c)


class TestWindowRate:
    def test_empty(self):
        assert window_rate(NeuronState(t=1.0), 0.1) == 0.0

    def test_two_spikes(self):
        assert window_rate(NeuronState(t=1.0, spike_times=[0.95, 0.99]), 0.1) == pytest.approx(20.0)

    def test_boundary_convention(self):
        # closed at now - window, open at now
        s = NeuronState(t=1.0, spike_times=[0.9, 1.0])
        assert spikes_in_window(s, 0.1) == 1
        s = NeuronState(t=1.0, spike_times=[0.9 - 1e-6])
        assert spikes_in_window(s, 0.1) == 0

    def test_invalid_window(self):
        with pytest.raises(ValueError):
            window_rate(NeuronState(), 0.0)
