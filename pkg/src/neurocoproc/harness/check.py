"""Fast oracle self-tests run by ``neurocoproc check``."""
from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from .. import coproc, decoders, encoders, mimo, plant
from . import persist
from .metrics import compute_roc, mi_from_counts


def _fes():
    assert encoders.fes_flexor(29) == 4.0
    assert encoders.fes_flexor(36.5) == 10.0
    assert encoders.fes_extensor(2) == 6.0


def _riccati():
    a, b, q, r = 0.95, 1.0, 0.1, 0.5
    p = 1.0
    for _ in range(10000):
        p_prior = a * a * p + q
        p = p_prior - p_prior * b * b * p_prior / (b * b * p_prior + r)
    k_star = (a * a * p + q) * b / (b * b * (a * a * p + q) + r)
    model = decoders.KalmanModel.create(a, b, q, r)
    for _ in range(2000):
        mean, cov, k = decoders.kalman_step(model, [0.0], return_gain=True)
        model = decoders.KalmanModel(model.A, model.B, model.Q, model.R, mean, cov)
    assert abs(k[0, 0] - k_star) < 1e-10


def _geometric_plant():
    p = plant.MotorPlant([[0.9]], [[1.0]])
    for _ in range(400):
        x = plant.plant_step(p, [1.0])
    assert abs(x[0] - 10.0) < 1e-12


def _lif():
    net = plant.SpikingNetwork(weights=np.zeros((1, 1)))
    dt, current = 0.01, 0.2
    spikes = sum(plant.spiking_step(net, [current], dt)[0] for _ in range(100000))
    rate = spikes / (100000 * dt / 1000.0)
    assert abs(rate / plant.lif_rate(current, 20.0, 1.0) - 1) < 0.05


def _roc_mi():
    assert compute_roc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]).auc == 0.75
    p = np.array([[4, 1], [1, 4]]) / 10
    hand = sum(p[i, j] * np.log2(p[i, j] / 0.25) for i in range(2) for j in range(2))
    assert abs(mi_from_counts([[4, 1], [1, 4]]) - hand) < 1e-10


def _gradients():
    rng = np.random.default_rng(0)
    net = coproc.make_net([3, 4, 2], "sigmoid", seed=1)
    u, t = rng.standard_normal(3), rng.standard_normal(2)
    _, grads = coproc.net_gradients(net, u, t)
    g = coproc.flat_grad(net, grads)
    theta = net.params()
    h = 1e-6
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        net.set_params(theta + e)
        up = coproc.net_gradients(net, u, t)[0]
        net.set_params(theta - e)
        down = coproc.net_gradients(net, u, t)[0]
        fd = (up - down) / (2 * h)
        assert abs(fd - g[i]) <= 1e-4 * max(1.0, abs(fd))
    net.set_params(theta)


def _spike_prob():
    m = mimo.MisoModel(np.zeros((1, 1)), np.zeros(1), theta=0.3)
    rng = np.random.default_rng(0)
    mc = np.mean(0.5 + 0.2 + rng.standard_normal(200000) >= 0.3)
    assert abs(mc - float(mimo.miso_spike_prob(m, 0.5, 0.2))) < 5e-3


def _persistence():
    net = coproc.make_net([3, 5, 2], ["relu", "identity"], seed=4)
    with tempfile.TemporaryDirectory() as tmp:
        path = persist.persist_weights(net, Path(tmp) / "w.json")
        back = persist.load_weights(path)
    assert all(np.array_equal(a, b) for a, b in zip(net.weights, back.weights))
    assert all(np.array_equal(a, b) for a, b in zip(net.biases, back.biases))


CHECKS = [
    ("fes formulas", _fes),
    ("kalman gain vs riccati fixed point", _riccati),
    ("plant geometric series", _geometric_plant),
    ("lif rate vs closed form", _lif),
    ("roc and mutual information hand cases", _roc_mi),
    ("network finite-difference gradients", _gradients),
    ("probit spike probability vs monte carlo", _spike_prob),
    ("weight file round trip", _persistence),
]


def run_checks():
    """``[(name, passed, detail)]`` for every self-test."""
    results = []
    for name, fn in CHECKS:
        try:
            fn()
            results.append((name, True, ""))
        except Exception as exc:  # report every failure, keep going
            results.append((name, False, f"{type(exc).__name__}: {exc}"))
    return results
