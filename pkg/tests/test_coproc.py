import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurocoproc import coproc
from neurocoproc.coproc import (
    CoprocError, LayeredNet, ReachTask, RlConfig, TrainConfig, coadapt_loop,
    composite_loss_grad, flat_grad, identity_coprocessor, make_net, net_forward,
    net_gradients, policy_gradient, train_cpn_rl, train_cpn_supervised, train_cpn_through_en,
    train_en,
)
from neurocoproc.harness.config import default_config
from neurocoproc.harness.scenarios import coadaptation_setup
from neurocoproc.plant import MotorPlant, SpikingNetwork, cortical_network


def naive_forward(net, u):
    h = list(u)
    for W, b, act in zip(net.weights, net.biases, net.activations):
        out = []
        for i in range(W.shape[0]):
            z = b[i]
            for j in range(W.shape[1]):
                z += W[i, j] * h[j]
            if act == "sigmoid":
                z = 1.0 / (1.0 + np.exp(-z))
            elif act == "relu":
                z = max(z, 0.0)
            out.append(z)
        h = out
    return np.array(h)


def fd_check(net, loss_fn, analytic, h=1e-6):
    theta = net.params()
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        net.set_params(theta + e)
        up = loss_fn()
        net.set_params(theta - e)
        down = loss_fn()
        fd = (up - down) / (2 * h)
        assert abs(fd - analytic[i]) <= 1e-4 * max(1.0, abs(fd)), (i, fd, analytic[i])
    net.set_params(theta)


class TestForward:
    def test_zero_weights_sigmoid(self):
        net = LayeredNet([np.zeros((5, 3)), np.zeros((2, 5))], "sigmoid")
        assert np.array_equal(net_forward(net, [1.0, -2.0, 3.0]), [0.5, 0.5])

    def test_identity(self):
        net = LayeredNet([np.eye(3), np.eye(3)], "identity")
        assert np.array_equal(net_forward(net, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])

    def test_naive_oracle(self, rng):
        net = make_net([4, 8, 3], ["relu", "sigmoid"], seed=2)
        net.biases = [rng.standard_normal(8), rng.standard_normal(3)]
        for u in rng.standard_normal((10, 4)):
            assert np.allclose(net_forward(net, u), naive_forward(net, u), atol=1e-12, rtol=0)

    def test_batch_matches_rows(self, rng):
        net = make_net([3, 4, 2], seed=0)
        U = rng.standard_normal((6, 3))
        assert np.allclose(net_forward(net, U), [net_forward(net, u) for u in U])

    def test_errors(self):
        net = make_net([3, 2])
        with pytest.raises(CoprocError):
            net_forward(net, [1.0, 2.0])
        with pytest.raises(CoprocError):
            net_forward(net, [1.0, np.nan, 0.0])
        with pytest.raises(CoprocError):
            LayeredNet([np.ones((2, 3)), np.ones((2, 4))], "identity")
        with pytest.raises(CoprocError):
            LayeredNet([np.ones((2, 3))], "tanh")
        with pytest.raises(CoprocError):
            LayeredNet([], "identity")

    def test_glorot_bounds(self):
        net = make_net([10, 30], seed=5)
        assert np.abs(net.weights[0]).max() <= np.sqrt(6 / 40)


class TestGradients:
    def test_zero_at_target(self):
        net = make_net([3, 4, 2], seed=1)
        u = np.array([0.1, 0.2, 0.3])
        loss, grads = net_gradients(net, u, net_forward(net, u))
        assert loss == 0.0
        assert np.all(flat_grad(net, grads) == 0)

    def test_hand_derived_linear_chain(self):
        v, w, u, d = 0.7, -1.3, 2.0, 0.5
        net = LayeredNet([[[v]], [[w]]], "identity", use_bias=False)
        _, grads = net_gradients(net, [u], [d])
        err = w * v * u - d
        assert grads.weights[0][0, 0] == pytest.approx(err * w * u, rel=1e-14)
        assert grads.weights[1][0, 0] == pytest.approx(err * v * u, rel=1e-14)

    def test_composite_vs_finite_differences(self, rng):
        cpn = make_net([3, 5, 4], ["sigmoid", "identity"], seed=3)
        en = make_net([4, 6, 2], ["relu", "sigmoid"], seed=4)
        X, Z = rng.standard_normal((7, 3)), rng.uniform(0, 1, (7, 2))
        _, grads = composite_loss_grad(cpn, en, X, Z)
        fd_check(cpn, lambda: composite_loss_grad(cpn, en, X, Z)[0], flat_grad(cpn, grads))

    def test_seam_mismatch(self):
        with pytest.raises(CoprocError, match="EN expects"):
            composite_loss_grad(make_net([2, 3]), make_net([4, 1]), np.zeros((1, 2)),
                                np.zeros((1, 1)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.lists(st.integers(1, 5), min_size=2, max_size=4),
       st.sampled_from(["sigmoid", "identity"]), st.booleans())
def test_gradients_match_finite_differences(seed, sizes, act, bias):
    rng = np.random.default_rng(seed)
    net = make_net(sizes, act, seed=seed, use_bias=bias)
    if bias:
        net.biases = [rng.standard_normal(b.size) for b in net.biases]
    U, T = rng.standard_normal((3, sizes[0])), rng.standard_normal((3, sizes[-1]))
    _, grads = net_gradients(net, U, T)
    fd_check(net, lambda: net_gradients(net, U, T)[0], flat_grad(net, grads))


def linear_data(n, noise, seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((2, 4))
    S = rng.standard_normal((n, 4))
    return G, S, S @ G.T + noise * rng.standard_normal((n, 2))


class TestTrainEn:
    def test_noise_floor(self):
        _, S, B = linear_data(3000, 0.3, 0)
        en = make_net([4, 2], "identity", seed=0, use_bias=False)
        res = train_en(en, S, B, TrainConfig(0.5, 500, batch_size=10 ** 9))
        assert res.loss <= 1.1 * 0.3 ** 2

    def test_constant_behavior(self, rng):
        en = make_net([3, 2], "identity", seed=0)
        res = train_en(en, rng.standard_normal((100, 3)), np.tile([0.4, -1.0], (100, 1)),
                       TrainConfig(0.5, 2000, batch_size=10 ** 9))
        assert res.loss < 1e-8

    def test_full_batch_monotone(self):
        _, S, B = linear_data(200, 0.1, 1)
        en = make_net([4, 6, 2], ["sigmoid", "identity"], seed=1)
        res = train_en(en, S, B, TrainConfig(1.0, 200, batch_size=10 ** 9))
        assert np.all(np.diff(res.history) <= 0)

    def test_minibatch_reduces_loss(self):
        _, S, B = linear_data(400, 0.1, 2)
        en = make_net([4, 2], "identity", seed=2)
        res = train_en(en, S, B, TrainConfig(0.05, 30, batch_size=16))
        assert res.history[-1] < 0.5 * res.history[0]

    def test_empty(self):
        with pytest.raises(CoprocError):
            train_en(make_net([2, 1]), np.zeros((0, 2)), np.zeros((0, 1)), TrainConfig())

    def test_original_untouched(self):
        _, S, B = linear_data(50, 0.1, 3)
        en = make_net([4, 2], "identity")
        before = en.digest()
        train_en(en, S, B, TrainConfig(0.1, 5))
        assert en.digest() == before


class TestSupervisedCpn:
    def test_linear_realizable(self, rng):
        M = rng.standard_normal((3, 5))
        X = rng.standard_normal((100, 5))
        res = train_cpn_supervised(make_net([5, 3], "identity", seed=0), X, X @ M.T,
                                   TrainConfig(0.5, 2000, batch_size=10 ** 9))
        assert np.mean((net_forward(res.net, X) - X @ M.T) ** 2) < 1e-6

    def test_memorize_single_pair(self):
        x, d = np.array([[0.3, -0.7]]), np.array([[0.2, 0.9, 0.5]])
        res = train_cpn_supervised(make_net([2, 4, 3], "sigmoid", seed=1), x, d,
                                   TrainConfig(1.0, 5000, batch_size=1))
        assert np.allclose(net_forward(res.net, x), d, atol=1e-6)

    def test_seizure_toy(self):
        rng = np.random.default_rng(8)
        labels = rng.integers(0, 2, 300)
        frames = rng.standard_normal((300, 4)) * 0.5 + labels[:, None] * np.array([2, 2, 0, 0])
        pattern = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
        targets = labels[:, None] * pattern
        res = train_cpn_supervised(make_net([4, 6, 5], "sigmoid", seed=2), frames, targets,
                                   TrainConfig(2.0, 3000, batch_size=10 ** 9))
        out = net_forward(res.net, frames)
        fired = np.all((out > 0.5) == pattern.astype(bool), axis=1)
        silent = np.all(out < 0.5, axis=1)
        assert np.all(np.where(labels == 1, fired, silent))

    def test_dimension_mismatch(self):
        with pytest.raises(CoprocError):
            train_cpn_supervised(make_net([2, 3]), np.zeros((4, 2)), np.zeros((4, 2)),
                                 TrainConfig())


class TestThroughEn:
    def setup_nets(self):
        rng = np.random.default_rng(0)
        G = rng.standard_normal((2, 3))
        en = LayeredNet([G], "identity", use_bias=False)
        cpn = make_net([4, 3], "identity", seed=1, use_bias=False)
        X = rng.standard_normal((80, 4))
        Z = X[:, :2]
        return cpn, en, X, Z

    def test_en_frozen_and_cpn_changes(self):
        cpn, en, X, Z = self.setup_nets()
        before = en.digest()
        res = train_cpn_through_en(cpn, en, X, Z, TrainConfig(0.1, 50, batch_size=8))
        assert en.digest() == before
        assert res.net.digest() != cpn.digest()

    def test_full_batch_loss_nonincreasing(self):
        cpn, en, X, Z = self.setup_nets()
        res = train_cpn_through_en(cpn, en, X, Z, TrainConfig(1.0, 100, batch_size=10 ** 9))
        assert np.all(np.diff(res.history) <= 0)

    def test_freeze_flag(self):
        cpn, en, X, Z = self.setup_nets()
        res = train_cpn_through_en(cpn, en, X, Z,
                                   TrainConfig(0.1, 20, freeze={"cpn": True}))
        assert res.net.digest() == cpn.digest()

    def test_freeze_en_in_train_en(self):
        _, S, B = linear_data(30, 0.1, 0)
        en = make_net([4, 2], "identity")
        assert train_en(en, S, B, TrainConfig(freeze={"en": True})).net.digest() == en.digest()

    def test_seam_error(self):
        cpn, en, X, Z = self.setup_nets()
        with pytest.raises(CoprocError):
            train_cpn_through_en(make_net([4, 2]), en, X, Z, TrainConfig())

    def test_deterministic(self):
        cpn, en, X, Z = self.setup_nets()
        cfg = TrainConfig(0.1, 30, batch_size=8, seed=4)
        a = train_cpn_through_en(cpn, en, X, Z, cfg).net
        b = train_cpn_through_en(cpn, en, X, Z, cfg).net
        assert a.digest() == b.digest()


class TestRl:
    def test_constant_reward_zero_gradient(self):
        cpn = make_net([2, 3], "identity", seed=0)
        en = make_net([3, 1], "identity", seed=1)
        rl = RlConfig(horizon=4, rollouts_per_update=16, reward="constant", updates=100)
        X = np.random.default_rng(0).standard_normal((50, 2))
        g, _ = policy_gradient(cpn, en, coproc.REWARDS["constant"], X[:16], np.zeros((16, 1)),
                               rl, np.random.default_rng(1))
        assert np.all(g == 0)
        res = train_cpn_rl(cpn, en, "constant", rl, TrainConfig(0.5), X, np.zeros((50, 1)))
        assert np.abs(res.net.params() - cpn.params()).max() < 1e-12

    def test_improves_return_without_plant(self):
        rng = np.random.default_rng(3)
        en = LayeredNet([[[1.5]]], "identity", use_bias=False)
        cpn = LayeredNet([[[0.0]]], "identity", use_bias=False)
        X = rng.standard_normal((200, 1))
        Z = X.copy()
        rl = RlConfig(discount=0.9, horizon=3, rollouts_per_update=64, updates=300)
        start = np.mean(coproc.rollout_returns(cpn, en, coproc.reach_reward, X, Z, rl))
        res = train_cpn_rl(cpn, en, "reach", rl, TrainConfig(0.02, seed=1), X, Z)
        assert -res.loss > start
        assert res.net.weights[0][0, 0] == pytest.approx(1 / 1.5, abs=0.05)

    @pytest.mark.parametrize("kwargs", [dict(horizon=0), dict(rollouts_per_update=0),
                                        dict(discount=1.5), dict(exploration_std=-1)])
    def test_invalid_config(self, kwargs):
        with pytest.raises(CoprocError):
            RlConfig(**kwargs)


class TestIdentityCoprocessor:
    def test_silent_rec_site(self):
        W = np.zeros((4, 4))
        net = SpikingNetwork(weights=W, sites={"rec": [0], "stim": [1], "ctrl": [2, 3]})
        log = identity_coprocessor(net, "rec", "stim", 3.0, 200.0, 0, background_hz=0.0)
        assert log.pulses == [] and log.spikes_detected == 0

    def test_one_pulse_per_spike(self):
        log = identity_coprocessor(cortical_network(), "rec", "stim", 7.5, 2000.0, seed=1)
        assert len(log.pulses) == log.spikes_detected > 0
        assert all(p - s == pytest.approx(7.5) for s, p in log.pulses)

    def test_input_not_modified(self):
        net = cortical_network()
        before = net.weights.copy()
        log = identity_coprocessor(net, "rec", "stim", 3.0, 1000.0, seed=2)
        assert np.array_equal(net.weights, before)
        assert not np.array_equal(log.net.weights, before)

    def test_errors(self):
        with pytest.raises(CoprocError):
            identity_coprocessor(cortical_network(), "rec", "stim", -1.0, 10.0, 0)
        with pytest.raises(Exception):
            identity_coprocessor(cortical_network(), "nowhere", "stim", 1.0, 10.0, 0)


def coadapt_fixture(sessions, **schedule):
    cfg = default_config("coadaptation", seed=0)
    arm, task, cpn, en = coadaptation_setup(cfg)
    C = cfg.coprocessor
    train = TrainConfig(C["learning_rate"], C["epochs"], batch_size=10 ** 9, seed=0)
    sched = {"sessions": sessions, "en_refresh_every": 1, **schedule}
    return coadapt_loop(cpn, en, arm, sched, train, task, seed=0), arm


class TestCoadapt:
    def test_zero_sessions(self):
        (metrics, _, _), arm = coadapt_fixture(0)
        assert metrics == [] and arm.stim_count == 0

    def test_stationary_plant(self):
        (metrics, _, _), _ = coadapt_fixture(6)
        errs = [m["behavioral_mse"] for m in metrics]
        for prev, cur in zip(errs[2:], errs[3:]):
            assert cur <= 1.5 * prev
        assert errs[-1] < 0.1 * errs[0]

    def test_perturbation_recovery(self):
        (metrics, _, _), _ = coadapt_fixture(8, perturb_session=4, perturb_scale=0.1)
        errs = [m["behavioral_mse"] for m in metrics]
        assert errs[4] > errs[3]
        assert min(errs[5:8]) <= 1.5 * errs[3]

    def test_deterministic(self):
        (m1, c1, e1), _ = coadapt_fixture(3)
        (m2, c2, e2), _ = coadapt_fixture(3)
        assert m1 == m2 and c1.digest() == c2.digest() and e1.digest() == e2.digest()

    def test_bad_schedule(self):
        cfg = default_config("coadaptation")
        arm, task, cpn, en = coadaptation_setup(cfg)
        with pytest.raises(CoprocError):
            coadapt_loop(cpn, en, arm, {"sessions": 2, "en_refresh_every": 0},
                         TrainConfig(), task)
