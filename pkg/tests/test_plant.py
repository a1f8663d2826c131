import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurocoproc.plant import (
    MotorPlant, PlantError, SpikingNetwork, StdpParams, cortical_network, lif_rate,
    output_effect_map, plant_response, plant_step, spiking_step, stdp_update,
)


def scalar_plant(a=0.9, b=1.0, **kw):
    return MotorPlant([[a]], [[b]], **kw)


class TestMotorPlant:
    def test_zero_is_fixed_point(self):
        p = MotorPlant(np.diag([0.5, 0.2]), np.eye(2))
        for _ in range(10):
            x = plant_step(p, [0.0, 0.0])
        assert np.array_equal(x, [0.0, 0.0])

    def test_full_lesion_matches_zero_input(self):
        A = [[0.5, 0.1], [0.0, 0.3]]
        p1 = MotorPlant(A, np.eye(2), lesion_mask=[0, 0], state=[1.0, -1.0])
        p2 = MotorPlant(A, np.eye(2), lesion_mask=[0, 0], state=[1.0, -1.0])
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert np.array_equal(plant_step(p1, rng.normal(size=2)), plant_step(p2, [0, 0]))

    def test_geometric_series(self):
        p = scalar_plant()
        for _ in range(500):
            x = plant_step(p, [1.0])
        assert x[0] == pytest.approx(10.0, abs=1e-12)

    def test_gain_matches_response(self):
        p = MotorPlant(np.diag([0.5, 0.3]), [[1.0, 0.5, 0.2], [0.0, 1.0, -1.0]],
                       lesion_mask=[1, 0, 1])
        a = np.array([0.3, -2.0, 1.1])
        assert np.allclose(plant_response(p, a, steps=4), p.gain(4) @ a, atol=1e-14)

    def test_stim_count(self):
        p = scalar_plant()
        plant_response(p, [1.0], steps=3)
        assert p.stim_count == 3

    @pytest.mark.parametrize("kwargs, msg", [
        (dict(dynamics_matrix=[[1.0]], input_matrix=[[1.0]]), "spectral radius"),
        (dict(dynamics_matrix=[[0.5, 0.0]], input_matrix=[[1.0]]), "square"),
        (dict(dynamics_matrix=[[0.5]], input_matrix=[[1.0]], lesion_mask=[0.5]), "lesion"),
        (dict(dynamics_matrix=[[0.5]], input_matrix=[[1.0]], dt=0.0), "dt"),
    ])
    def test_invalid(self, kwargs, msg):
        with pytest.raises(PlantError, match=msg):
            MotorPlant(**kwargs)

    def test_step_errors(self):
        p = scalar_plant()
        with pytest.raises(PlantError):
            plant_step(p, [1.0, 2.0])
        with pytest.raises(PlantError):
            plant_step(p, [np.nan])

    def test_seeded_noise_is_reproducible(self):
        runs = []
        for _ in range(2):
            p = MotorPlant(np.diag([0.9, 0.8]), np.eye(2), process_noise_scale=0.3, seed=11)
            runs.append([plant_step(p, [1.0, 0.0]) for _ in range(50)])
        assert np.array_equal(runs[0], runs[1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.floats(-3, 3), st.floats(-3, 3))
def test_plant_increment_is_linear(u, v, alpha, beta):
    A = np.array([[0.4, 0.1], [-0.2, 0.3]])
    B = np.array([[1.0, 0.5, -0.3], [0.2, -1.0, 0.7]])
    x0 = np.array([0.7, -0.4])

    def incr(a):
        p = MotorPlant(A, B, state=x0)
        return plant_step(p, a) - A @ x0

    u, v = np.array(u), np.array(v)
    lhs = incr(alpha * u + beta * v)
    rhs = alpha * incr(u) + beta * incr(v)
    assert np.allclose(lhs, rhs, atol=1e-9)


class TestSpiking:
    def test_silent_without_input(self):
        net = SpikingNetwork(weights=np.zeros((3, 3)))
        assert not spiking_step(net, np.zeros(3), 1.0).any()

    def test_forced_spike(self):
        net = SpikingNetwork(weights=np.zeros((3, 3)))
        s = spiking_step(net, [0.0, 10.0, 0.0], 0.5)
        assert s.tolist() == [0, 1, 0]
        assert net.last_spike_times[1] == net.t
        assert net.membrane_potentials[1] == 0.0

    def test_nonpositive_dt(self):
        net = SpikingNetwork(weights=np.zeros((2, 2)))
        with pytest.raises(PlantError):
            spiking_step(net, np.zeros(2), 0.0)

    @pytest.mark.parametrize("current", [0.06, 0.1, 0.3])
    def test_lif_rate_oracle(self, current):
        net = SpikingNetwork(weights=np.zeros((1, 1)))
        dt, steps = 0.01, 200000
        count = sum(spiking_step(net, [current], dt)[0] for _ in range(steps))
        rate = count / (steps * dt / 1000.0)
        assert rate == pytest.approx(lif_rate(current, 20.0, 1.0), rel=0.05)

    def test_lif_rate_subthreshold(self):
        assert lif_rate(0.04, 20.0, 1.0) == 0.0


class TestStdp:
    def _net(self, w=0.5):
        W = np.full((2, 2), w)
        np.fill_diagonal(W, 0.0)
        return SpikingNetwork(weights=W, stdp_params=StdpParams(0.01, 0.012, 20, 20, 1.0))

    def test_simultaneous_spikes_ignored(self):
        net = self._net()
        assert stdp_update(net, 10.0, 10.0, 0, 1) == 0.5

    def test_potentiation_at_tau(self):
        net = self._net()
        assert stdp_update(net, 0.0, 20.0, 0, 1) == pytest.approx(0.5 + 0.01 * np.exp(-1))

    def test_depression(self):
        net = self._net()
        assert stdp_update(net, 20.0, 0.0, 0, 1) == pytest.approx(0.5 - 0.012 * np.exp(-1))

    def test_clamp_to_wmax(self):
        net = self._net(w=0.999)
        net.stdp_params = StdpParams(a_plus=0.5, w_max=1.0)
        assert stdp_update(net, 0.0, 1.0, 0, 1) == 1.0

    def test_same_neuron_rejected(self):
        with pytest.raises(PlantError):
            stdp_update(self._net(), 0.0, 1.0, 1, 1)

    def test_invalid_params(self):
        with pytest.raises(PlantError):
            StdpParams(tau_plus=0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.1, 2.0))
def test_weights_stay_bounded_under_random_protocols(seed, drive):
    rng = np.random.default_rng(seed)
    n = 6
    W = rng.uniform(0, 1, (n, n))
    np.fill_diagonal(W, 0.0)
    net = SpikingNetwork(weights=W, stdp_params=StdpParams(0.2, 0.2, 10, 10, 1.0),
                         plastic=np.ones((n, n), dtype=bool))
    for _ in range(200):
        spiking_step(net, drive * rng.exponential(1.0, n), 0.5, plastic=True)
    for _ in range(20):
        i, j = rng.choice(n, 2, replace=False)
        stdp_update(net, rng.uniform(0, 100), rng.uniform(0, 100), i, j)
    assert np.all(net.weights >= 0) and np.all(net.weights <= 1.0)
    assert np.all(np.diag(net.weights) == 0)


class TestOutputEffect:
    def test_no_outgoing_weights(self):
        net = cortical_network(w_pool=0.0, w_cross=0.0)
        eff = output_effect_map(net, "rec", n_trials=10)
        assert np.allclose(eff.mean_vector, 0.0)

    def test_deterministic(self):
        net = cortical_network()
        a = output_effect_map(net, "stim", n_trials=10, seed=3)
        b = output_effect_map(net, "stim", n_trials=10, seed=3)
        assert np.array_equal(a.mean_vector, b.mean_vector)

    def test_direction_follows_wiring(self):
        net = cortical_network(directions={"rec": 90.0, "stim": 0.0, "ctrl": 180.0})
        v = output_effect_map(net, "rec", n_trials=20).mean_vector
        angle = np.degrees(np.arctan2(v[1], v[0]))
        assert abs(angle - 90.0) < 5.0

    def test_unknown_site(self):
        with pytest.raises(PlantError):
            output_effect_map(cortical_network(), "nowhere")

    def test_probe_does_not_modify_net(self):
        net = cortical_network()
        before = net.weights.copy()
        output_effect_map(net, "rec", n_trials=3)
        assert np.array_equal(net.weights, before) and net.t == 0.0
