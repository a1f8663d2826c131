"""Neural co-processor machinery.

A co-processor network (CPN) maps recorded activity to stimulation; an
emulator network (EN) stands in for the biological path from stimulation to
behavior. Both are :class:`LayeredNet` instances. The CPN can be trained
directly against known stimulation targets, by backpropagating behavioral
error through a frozen EN, or by model-based policy gradient on EN rollouts.

Losses follow the squared-error form ``0.5 * sum_i (target_i - v_i)^2`` per
sample; training averages it over samples.
"""
from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import plant as plant_mod


class CoprocError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Layered networks
# ---------------------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# activation, derivative expressed through the layer output
ACTIVATIONS = {
    "sigmoid": (_sigmoid, lambda out: out * (1.0 - out)),
    "relu": (lambda z: np.maximum(z, 0.0), lambda out: (out > 0).astype(float)),
    "identity": (lambda z: z, lambda out: np.ones_like(out)),
}


@dataclass
class LayeredNet:
    """Feedforward net; layer ``l`` computes ``g_l(W_l h + b_l)``.

    ``weights[l]`` has shape (out, in). With ``use_bias=False`` the biases
    stay zero and the three-layer case is exactly
    ``v_i = g(sum_j W_ij g(sum_k V_jk u_k))``.
    """

    weights: list
    activations: list
    biases: list | None = None
    use_bias: bool = True

    def __post_init__(self):
        if not self.weights:
            raise CoprocError("a LayeredNet needs at least one layer")
        self.weights = [np.array(w, dtype=float, ndmin=2) for w in self.weights]
        if isinstance(self.activations, str):
            self.activations = [self.activations] * len(self.weights)
        self.activations = list(self.activations)
        if len(self.activations) != len(self.weights):
            raise CoprocError("one activation per layer is required")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise CoprocError(f"unknown activation {a!r}")
        if self.biases is None:
            self.biases = [np.zeros(w.shape[0]) for w in self.weights]
        self.biases = [np.array(b, dtype=float).reshape(-1) for b in self.biases]
        for l in range(len(self.weights)):
            if self.biases[l].shape != (self.weights[l].shape[0],):
                raise CoprocError(f"bias {l} does not match layer output size")
            if l and self.weights[l].shape[1] != self.weights[l - 1].shape[0]:
                raise CoprocError(f"layer {l} input size does not chain")
        if not all(np.all(np.isfinite(p)) for p in self.weights + self.biases):
            raise CoprocError("weights must be finite")

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    @property
    def shapes(self):
        return [w.shape for w in self.weights]

    def copy(self):
        return copy.deepcopy(self)

    def params(self):
        """Flat parameter vector (weights then biases, layer by layer)."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            if self.use_bias:
                parts.append(b)
        return np.concatenate(parts)

    def set_params(self, vec):
        i = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = vec[i:i + w.size].reshape(w.shape)
            i += w.size
            if self.use_bias:
                b[...] = vec[i:i + b.size]
                i += b.size

    def digest(self):
        """SHA-256 over the raw bytes of every parameter array."""
        h = hashlib.sha256()
        for p in self.weights + self.biases:
            h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()


def make_net(sizes, activations="sigmoid", seed=0, use_bias=True) -> LayeredNet:
    """Net with layer sizes ``[in, hidden..., out]``; weights uniform in
    ``+-sqrt(6 / (fan_in + fan_out))``, zero biases."""
    if len(sizes) < 2:
        raise CoprocError("sizes must list input and output dimensions")
    rng = np.random.default_rng(seed)
    weights = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
    return LayeredNet(weights, activations, use_bias=use_bias)


def _check_input(net, u):
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != net.in_dim or u.ndim > 2:
        raise CoprocError(f"input has shape {u.shape}, net expects {net.in_dim} features")
    if not np.all(np.isfinite(u)):
        raise CoprocError("input contains non-finite values")
    return u


def _forward_all(net, U):
    """Layer outputs for a batch ``U`` (n, in); element 0 is the input."""
    outs = [U]
    for w, b, act in zip(net.weights, net.biases, net.activations):
        outs.append(ACTIVATIONS[act][0](outs[-1] @ w.T + b))
    return outs


def net_forward(net: LayeredNet, u) -> np.ndarray:
    """Forward pass for one input vector or a batch of row vectors."""
    u = _check_input(net, u)
    return _forward_all(net, np.atleast_2d(u))[-1].reshape(
        u.shape[:-1] + (net.out_dim,))


class Gradients(NamedTuple):
    weights: list
    biases: list


def _backward(net, outs, d_out):
    """Reverse-mode pass from ``dL/dv``; returns parameter grads and ``dL/du``."""
    gW = [None] * len(net.weights)
    gb = [None] * len(net.weights)
    delta = d_out
    for l in range(len(net.weights) - 1, -1, -1):
        delta = delta * ACTIVATIONS[net.activations[l]][1](outs[l + 1])
        gW[l] = delta.T @ outs[l]
        gb[l] = delta.sum(axis=0) if net.use_bias else np.zeros_like(net.biases[l])
        delta = delta @ net.weights[l]
    return Gradients(gW, gb), delta


def net_gradients(net: LayeredNet, u, target):
    """Loss ``0.5 * sum (target - v)^2`` (summed over a batch) and its exact
    gradient with respect to every weight and bias."""
    u = _check_input(net, u)
    U = np.atleast_2d(u)
    T = np.atleast_2d(np.asarray(target, dtype=float))
    if T.shape != (U.shape[0], net.out_dim):
        raise CoprocError("target shape does not match the net output")
    outs = _forward_all(net, U)
    err = outs[-1] - T
    grads, _ = _backward(net, outs, err)
    return 0.5 * float(np.sum(err ** 2)), grads


def flat_grad(net, grads: Gradients):
    parts = []
    for gw, gb in zip(grads.weights, grads.biases):
        parts.append(gw.ravel())
        if net.use_bias:
            parts.append(gb)
    return np.concatenate(parts)


def composite_loss_grad(cpn: LayeredNet, en: LayeredNet, X, Z_target):
    """Loss ``0.5 * sum (Z_target - EN(CPN(X)))^2`` summed over the batch,
    and its gradient with respect to the CPN parameters only."""
    X = np.atleast_2d(_check_input(cpn, X))
    Z = np.atleast_2d(np.asarray(Z_target, dtype=float))
    if cpn.out_dim != en.in_dim:
        raise CoprocError(
            f"CPN outputs {cpn.out_dim} channels but EN expects {en.in_dim}")
    c_outs = _forward_all(cpn, X)
    e_outs = _forward_all(en, c_outs[-1])
    err = e_outs[-1] - Z
    # EN parameter gradients are discarded; only the input sensitivity flows on
    _, d_stim = _backward(en, e_outs, err)
    grads, _ = _backward(cpn, c_outs, d_stim)
    return 0.5 * float(np.sum(err ** 2)), grads


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 200
    batch_size: int = 64
    seed: int = 0
    gradient_clip: float | None = None
    freeze: dict = field(default_factory=dict)
    line_search: bool = True
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise CoprocError("need learning_rate > 0, epochs >= 1, batch_size >= 1")


class TrainResult(NamedTuple):
    net: LayeredNet
    loss: float
    history: list


def _clip(g, limit):
    if limit is None:
        return g
    norm = np.linalg.norm(g)
    return g * (limit / norm) if norm > limit else g


def _descend(net, loss_grad, n, cfg: TrainConfig):
    """Minimize ``loss_grad(net, idx) -> (mean loss, flat grad)`` over ``net``.

    Full-batch runs (``batch_size >= n``) use backtracking so the loss
    sequence never increases; otherwise plain shuffled minibatch descent.
    Returns the full-data loss after every epoch.
    """
    rng = np.random.default_rng(cfg.seed)
    everything = np.arange(n)
    history = []
    if cfg.batch_size >= n:
        step = cfg.learning_rate
        loss, g = loss_grad(net, everything)
        for _ in range(cfg.epochs):
            g = _clip(g, cfg.gradient_clip)
            theta = net.params()
            while True:
                net.set_params(theta - step * g)
                new_loss, new_g = loss_grad(net, everything)
                if new_loss <= loss or not cfg.line_search or step < 1e-20:
                    break
                step *= 0.5
            if cfg.line_search and new_loss > loss:
                net.set_params(theta)
                history.append(loss)
                break
            loss, g = new_loss, new_g
            history.append(loss)
            if cfg.line_search:
                step = min(step * 1.5, 1e6)
        return history
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            _, g = loss_grad(net, order[start:start + cfg.batch_size])
            net.set_params(net.params() - cfg.learning_rate * _clip(g, cfg.gradient_clip))
        history.append(loss_grad(net, everything)[0])
    return history


def _supervised_loss_grad(inputs, targets):
    def fn(net, idx):
        loss, grads = net_gradients(net, inputs[idx], targets[idx])
        return loss / len(idx), flat_grad(net, grads) / len(idx)
    return fn


def _paired(inputs, targets, net):
    U = np.atleast_2d(np.asarray(inputs, dtype=float))
    T = np.atleast_2d(np.asarray(targets, dtype=float))
    if U.shape[0] == 0 or U.size == 0:
        raise CoprocError("training data are empty")
    if U.shape[0] != T.shape[0]:
        raise CoprocError("inputs and targets must be paired")
    if U.shape[1] != net.in_dim or T.shape[1] != net.out_dim:
        raise CoprocError("data dimensions do not match the network")
    return U, T


def train_en(en: LayeredNet, stim_samples, behaviors, cfg: TrainConfig) -> TrainResult:
    """Fit the emulator to (stimulation, behavior) pairs.

    A seeded ``val_fraction`` of the pairs is held out; ``loss`` in the
    result is the held-out mean squared error per output element.
    """
    U, B = _paired(stim_samples, behaviors, en)
    if cfg.freeze.get("en"):
        return TrainResult(en, _mse(en, U, B), [])
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(U))
    n_val = int(round(cfg.val_fraction * len(U)))
    if n_val >= len(U):
        n_val = 0
    val, train = order[:n_val], order[n_val:]
    net = en.copy()
    history = _descend(net, _supervised_loss_grad(U[train], B[train]), len(train), cfg)
    val_loss = _mse(net, U[val], B[val]) if n_val else _mse(net, U, B)
    return TrainResult(net, val_loss, history)


def _mse(net, U, T):
    return float(np.mean((net_forward(net, U) - T) ** 2))


def train_cpn_supervised(cpn: LayeredNet, inputs, target_stims, cfg: TrainConfig) -> TrainResult:
    """Special case without an emulator: regress the CPN output onto known
    target stimulation patterns."""
    U, D = _paired(inputs, target_stims, cpn)
    if cfg.freeze.get("cpn"):
        return TrainResult(cpn, _mse(cpn, U, D), [])
    net = cpn.copy()
    history = _descend(net, _supervised_loss_grad(U, D), len(U), cfg)
    return TrainResult(net, history[-1] if history else _mse(net, U, D), history)


def train_cpn_through_en(cpn: LayeredNet, en: LayeredNet, intentions, targets,
                         cfg: TrainConfig) -> TrainResult:
    """Backpropagate behavioral error through the concatenated CPN-EN net,
    updating only the CPN. The EN is never written to."""
    X = np.atleast_2d(np.asarray(intentions, dtype=float))
    Z = np.atleast_2d(np.asarray(targets, dtype=float))
    if cpn.out_dim != en.in_dim:
        raise CoprocError(
            f"CPN outputs {cpn.out_dim} channels but EN expects {en.in_dim}")
    if X.shape[0] == 0 or X.shape[0] != Z.shape[0]:
        raise CoprocError("intentions and targets must be paired and non-empty")
    if X.shape[1] != cpn.in_dim or Z.shape[1] != en.out_dim:
        raise CoprocError("data dimensions do not match the networks")
    before = en.digest()

    def fn(net, idx):
        loss, grads = composite_loss_grad(net, en, X[idx], Z[idx])
        return loss / len(idx), flat_grad(net, grads) / len(idx)

    net = cpn.copy()
    history = [] if cfg.freeze.get("cpn") else _descend(net, fn, len(X), cfg)
    if en.digest() != before:
        raise CoprocError("emulator weights changed during CPN training")
    return TrainResult(net, history[-1] if history else fn(net, np.arange(len(X)))[0],
                       history)


# ---------------------------------------------------------------------------
# Model-based reinforcement learning
# ---------------------------------------------------------------------------

@dataclass
class RlConfig:
    discount: float = 0.9
    horizon: int = 5
    rollouts_per_update: int = 64
    reward: str = "reach"
    exploration_std: float = 0.2
    updates: int = 500

    def __post_init__(self):
        if not 0 <= self.discount <= 1:
            raise CoprocError("discount must lie in [0, 1]")
        if self.horizon < 1:
            raise CoprocError("horizon must be >= 1")
        if self.rollouts_per_update < 1:
            raise CoprocError("rollouts_per_update must be >= 1")
        if self.exploration_std < 0:
            raise CoprocError("exploration_std must be >= 0")


def reach_reward(z, target):
    """Negative squared distance to the target, per sample."""
    return -np.sum((np.atleast_2d(z) - np.atleast_2d(target)) ** 2, axis=1)


REWARDS = {"reach": reach_reward, "constant": lambda z, target: np.ones(len(np.atleast_2d(z)))}


def rollout_returns(cpn, en, reward_fn, X, targets, rl: RlConfig, rng=None):
    """Discounted return of every episode simulated on the emulator.

    Without ``rng`` the policy is deterministic (no exploration noise).
    """
    mu = net_forward(cpn, X)
    total = np.zeros(len(X))
    for t in range(rl.horizon):
        act = mu if rng is None else mu + rl.exploration_std * rng.standard_normal(mu.shape)
        total += rl.discount ** t * reward_fn(net_forward(en, act), targets)
    return total


def policy_gradient(cpn, en, reward_fn, X, targets, rl: RlConfig, rng):
    """REINFORCE estimate of the gradient of the expected return.

    Gaussian exploration on the CPN outputs, reward-to-go per step and a
    per-step baseline equal to the mean reward-to-go across rollouts.
    Returns the flat gradient of the *negative* return (a descent direction
    for the loss) and the mean sampled return.
    """
    if rl.exploration_std <= 0:
        raise CoprocError("policy gradient needs exploration_std > 0")
    outs = _forward_all(cpn, X)
    mu = outs[-1]
    R = len(X)
    noise, rewards = [], []
    for t in range(rl.horizon):
        eps = rng.standard_normal(mu.shape)
        noise.append(eps)
        z = net_forward(en, mu + rl.exploration_std * eps)
        rewards.append(reward_fn(z, targets))
    rewards = np.array(rewards)  # (H, R)
    disc = rl.discount ** np.arange(rl.horizon)
    togo = np.zeros_like(rewards)
    acc = np.zeros(R)
    for t in range(rl.horizon - 1, -1, -1):
        acc = rewards[t] + rl.discount * acc
        togo[t] = acc
    adv = togo - togo.mean(axis=1, keepdims=True)
    # grad log pi(a|x) wrt mu = eps / std; weight each step by gamma^t
    score = sum(disc[t] * adv[t][:, None] * noise[t] for t in range(rl.horizon))
    d_mu = -score / (rl.exploration_std * R)
    grads, _ = _backward(cpn, outs, d_mu)
    return flat_grad(cpn, grads), float(np.mean(disc @ rewards))


def train_cpn_rl(cpn: LayeredNet, en: LayeredNet, reward_fn, rl: RlConfig,
                 cfg: TrainConfig, intentions, targets) -> TrainResult:
    """Model-based policy-gradient training of the CPN.

    Every rollout runs on the emulator, so the true plant receives no
    stimulation. Each update samples ``rollouts_per_update`` episodes from
    the (intention, target) pool. ``loss`` in the result is the negative
    mean deterministic EN return after training; ``history`` holds the mean
    sampled return per update.
    """
    if rl.rollouts_per_update < 1:
        raise CoprocError("zero rollouts")
    if rl.horizon < 1:
        raise CoprocError("horizon must be >= 1")
    if isinstance(reward_fn, str):
        reward_fn = REWARDS[reward_fn]
    X = np.atleast_2d(np.asarray(intentions, dtype=float))
    Z = np.atleast_2d(np.asarray(targets, dtype=float))
    if cpn.out_dim != en.in_dim:
        raise CoprocError("CPN output does not match EN input")
    before = en.digest()
    rng = np.random.default_rng(cfg.seed)
    net = cpn.copy()
    history = []
    if not cfg.freeze.get("cpn"):
        for _ in range(rl.updates):
            idx = rng.integers(0, len(X), size=rl.rollouts_per_update)
            g, ret = policy_gradient(net, en, reward_fn, X[idx], Z[idx], rl, rng)
            net.set_params(net.params() - cfg.learning_rate * _clip(g, cfg.gradient_clip))
            history.append(ret)
    if en.digest() != before:
        raise CoprocError("emulator weights changed during RL training")
    final = float(np.mean(rollout_returns(net, en, reward_fn, X, Z, rl)))
    return TrainResult(net, -final, history)


# ---------------------------------------------------------------------------
# Reach task shared by the supervised, RL and co-adaptation paths
# ---------------------------------------------------------------------------

@dataclass
class ReachTask:
    """Intentions ``x = C z* + noise`` for unit-variance targets ``z*``;
    behavior is the plant state after holding the stimulation ``steps`` steps."""

    encoding: np.ndarray  # (intention dim, behavior dim)
    intention_noise: float = 0.1
    steps: int = 1

    def sample(self, n, rng):
        C = np.atleast_2d(self.encoding)
        Z = rng.standard_normal((n, C.shape[1]))
        X = Z @ C.T + self.intention_noise * rng.standard_normal((n, C.shape[0]))
        return X, Z

    def behave(self, plant, stims):
        return plant_mod.plant_responses(plant, stims, self.steps)


def behavioral_mse(cpn, plant, task: ReachTask, X, Z):
    """Mean squared behavioral error per dimension on the true plant."""
    stims = net_forward(cpn, X)
    return float(np.mean((task.behave(plant, stims) - Z) ** 2))


def optimal_linear_map(G, X, Z):
    """Minimum-norm ``W`` minimizing ``|Z - X W^T G^T|_F`` via the normal
    equations ``G^T G W X^T X = G^T Z^T X``."""
    G = np.atleast_2d(G)
    lhs = np.kron(X.T @ X, G.T @ G)
    rhs = (G.T @ Z.T @ X).ravel(order="F")
    vec = np.linalg.pinv(lhs) @ rhs
    return vec.reshape((G.shape[1], X.shape[1]), order="F")


# ---------------------------------------------------------------------------
# Spike-triggered (1-to-1) co-processor
# ---------------------------------------------------------------------------

@dataclass
class ConditioningLog:
    pulses: list  # (spike_ms, pulse_ms)
    times: list
    weights: dict  # pathway name -> mean weight at each time
    net: plant_mod.SpikingNetwork = field(repr=False)
    spikes_detected: int = 0

    header = ("time_ms", "conditioned_weight", "control_weight")


def identity_coprocessor(net: plant_mod.SpikingNetwork, rec_site, stim_site,
                         delay_ms, duration, seed, control_site="ctrl", dt=0.5,
                         background_hz=5.0, record_every_ms=1000.0) -> ConditioningLog:
    """Spike-triggered stimulation: every spike at ``rec_site`` schedules one
    pulse to all neurons of ``stim_site`` ``delay_ms`` later, with STDP on.

    Cortical sites receive independent Poisson background kicks at
    ``background_hz``. ``net`` is copied, not modified; the conditioned
    network is returned in the log. Tracks the mean ``rec -> stim`` and
    ``control -> stim`` weights.
    """
    if delay_ms < 0:
        raise CoprocError("delay_ms must be >= 0")
    net = net.copy()
    rec = net.site(rec_site)
    stim = net.site(stim_site)
    ctrl = net.site(control_site) if control_site in net.sites else None
    cortical = np.concatenate([net.site(s) for s in net.sites if not s.endswith("_pool")])
    rng = np.random.default_rng(seed)
    kick = 2.0 * net.threshold / dt
    p_bg = background_hz * dt / 1000.0
    n_steps = int(round(duration / dt))
    delay_steps = int(round(delay_ms / dt))
    every = max(1, int(round(record_every_ms / dt)))
    pending = {}
    pulses, times = [], []
    w_cond, w_ctrl = [], []
    detected = 0

    def snapshot(t):
        times.append(t)
        w_cond.append(float(net.weights[np.ix_(rec, stim)].mean()))
        w_ctrl.append(float(net.weights[np.ix_(ctrl, stim)].mean()) if ctrl is not None
                      else float("nan"))

    snapshot(0.0)
    for step in range(n_steps):
        current = np.zeros(net.n)
        bg = cortical[rng.random(cortical.size) < p_bg]
        current[bg] = kick
        due = pending.pop(step, 0)
        if due:
            current[stim] = kick
        spikes = plant_mod.spiking_step(net, current, dt, plastic=True)
        n_rec = int(np.count_nonzero(spikes[rec]))
        if n_rec:
            detected += n_rec
            t_spike = (step + 1) * dt
            target = step + 1 + delay_steps
            pending[target] = pending.get(target, 0) + n_rec
            pulses.extend([(t_spike, t_spike + delay_steps * dt)] * n_rec)
        if (step + 1) % every == 0:
            snapshot((step + 1) * dt)
    return ConditioningLog(pulses, times, {"conditioned": w_cond, "control": w_ctrl},
                           net, detected)


# ---------------------------------------------------------------------------
# Co-adaptation
# ---------------------------------------------------------------------------

def perturb_plant(plant, scale, seed):
    """Scale every input gain by ``1 + scale * s`` with random signs ``s``."""
    rng = np.random.default_rng(seed)
    signs = rng.choice([-1.0, 1.0], size=plant.input_matrix.shape)
    plant.input_matrix = plant.input_matrix * (1.0 + scale * signs)


def coadapt_loop(cpn: LayeredNet, en: LayeredNet, plant, schedule: dict,
                 cfg: TrainConfig, task: ReachTask, en_cfg: TrainConfig | None = None,
                 trials_per_session=400, probe_noise=0.5, seed=0):
    """Alternate true-plant sessions, EN refreshes and CPN retraining.

    Each session samples intentions, runs half the trials with the current
    CPN (scored as the session's behavioral error) and half with probe
    noise added to the stimulation. Every ``en_refresh_every`` sessions the
    EN is refit on the pairs aggregated since the previous refresh, and the
    CPN is retrained through the current EN after every session.
    ``schedule`` may carry ``perturb_session``/``perturb_scale`` to alter
    the plant gains at the start of that session. Returns one metrics dict
    per session plus the final nets.
    """
    sessions = int(schedule.get("sessions", 0))
    every = int(schedule.get("en_refresh_every", 1))
    if sessions < 0 or every < 1:
        raise CoprocError("schedule needs sessions >= 0 and en_refresh_every >= 1")
    en_cfg = en_cfg or cfg
    rng = np.random.default_rng(seed)
    metrics = []
    buf_stims, buf_behavior = [], []
    for s in range(sessions):
        if schedule.get("perturb_session") == s:
            perturb_plant(plant, schedule.get("perturb_scale", 0.1), seed + 7919)
        X, Z = task.sample(trials_per_session, rng)
        half = trials_per_session // 2
        stims = net_forward(cpn, X)
        stims[half:] += probe_noise * rng.standard_normal(stims[half:].shape)
        before = plant.stim_count
        behavior = task.behave(plant, stims)
        err = float(np.mean((behavior[:half] - Z[:half]) ** 2))
        buf_stims.append(stims)
        buf_behavior.append(behavior)
        en_loss = float("nan")
        if s % every == 0:
            res = train_en(en, np.vstack(buf_stims), np.vstack(buf_behavior), en_cfg)
            en, en_loss = res.net, res.loss
            buf_stims, buf_behavior = [], []
        res = train_cpn_through_en(cpn, en, X, Z, cfg)
        cpn = res.net
        metrics.append({
            "session": s,
            "behavioral_mse": err,
            "en_val_mse": en_loss,
            "cpn_loss": res.loss,
            "plant_trials": plant.stim_count - before,
        })
    return metrics, cpn, en
