"""Simulated biological plants that the decoders, encoders and co-processors
close the loop around.

Two plants live here:

* :class:`MotorPlant`, a discrete-time linear sensorimotor system whose input
  channels can be severed by a lesion mask. Its state is the behavioral
  output (hand position/velocity) that an emulator network learns to predict.
* :class:`SpikingNetwork`, a small leaky integrate-and-fire network with an
  exponential STDP window, used for the spike-triggered plasticity protocols.

All randomness flows from explicit seeds.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np


class PlantError(ValueError):
    """Raised for malformed plant parameters or inputs."""


def _as_finite(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise PlantError(f"{name} contains non-finite values")
    return arr


# ---------------------------------------------------------------------------
# Linear motor plant
# ---------------------------------------------------------------------------

@dataclass
class MotorPlant:
    """Discrete-time linear plant ``x <- A x + B (mask * a) + noise``.

    ``stim_count`` counts every call to :func:`plant_step`; model-based
    training uses it to prove the true plant was never stimulated.
    """

    dynamics_matrix: np.ndarray
    input_matrix: np.ndarray
    lesion_mask: np.ndarray | None = None
    process_noise_scale: float = 0.0
    dt: float = 0.01
    seed: int = 0
    state: np.ndarray | None = None
    stim_count: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        A = _as_finite(np.atleast_2d(self.dynamics_matrix), "dynamics_matrix")
        B = _as_finite(np.atleast_2d(self.input_matrix), "input_matrix")
        if A.shape[0] != A.shape[1]:
            raise PlantError(f"dynamics_matrix must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise PlantError(
                f"input_matrix has {B.shape[0]} rows, state dim is {A.shape[0]}")
        if np.max(np.abs(np.linalg.eigvals(A))) >= 1.0:
            raise PlantError("dynamics_matrix spectral radius must be < 1")
        mask = np.ones(B.shape[1]) if self.lesion_mask is None else np.asarray(
            self.lesion_mask, dtype=float)
        if mask.shape != (B.shape[1],) or not np.all((mask == 0) | (mask == 1)):
            raise PlantError("lesion_mask must be a 0/1 vector, one entry per input")
        if self.process_noise_scale < 0:
            raise PlantError("process_noise_scale must be nonnegative")
        if not self.dt > 0:
            raise PlantError("dt must be > 0")
        self.dynamics_matrix, self.input_matrix, self.lesion_mask = A, B, mask
        self.state = (np.zeros(A.shape[0]) if self.state is None
                      else _as_finite(self.state, "state").copy())
        if self.state.shape != (A.shape[0],):
            raise PlantError("state dimension does not match dynamics_matrix")
        self.rng = np.random.default_rng(self.seed)

    @property
    def n_inputs(self):
        return self.input_matrix.shape[1]

    @property
    def n_states(self):
        return self.dynamics_matrix.shape[0]

    def copy(self):
        return copy.deepcopy(self)

    def reset(self, state=None):
        self.state = np.zeros(self.n_states) if state is None else np.asarray(
            state, dtype=float).copy()

    def gain(self, steps):
        """Noise-free map from a held activation to the state after ``steps``
        steps from rest: ``sum_k A^k B diag(mask)``."""
        G = np.zeros_like(self.input_matrix)
        Ak = np.eye(self.n_states)
        for _ in range(steps):
            G += Ak @ self.input_matrix
            Ak = self.dynamics_matrix @ Ak
        return G * self.lesion_mask


def plant_step(plant: MotorPlant, activation) -> np.ndarray:
    """Advance ``plant`` one step under ``activation``; returns the new state."""
    a = _as_finite(activation, "activation")
    if a.shape != (plant.n_inputs,):
        raise PlantError(
            f"activation has shape {a.shape}, plant expects ({plant.n_inputs},)")
    noise = 0.0
    if plant.process_noise_scale > 0:
        noise = plant.process_noise_scale * plant.rng.standard_normal(plant.n_states)
    plant.state = (plant.dynamics_matrix @ plant.state
                   + plant.input_matrix @ (plant.lesion_mask * a) + noise)
    plant.stim_count += 1
    return plant.state.copy()


def plant_response(plant: MotorPlant, activation, steps=1) -> np.ndarray:
    """Trial-endpoint behavior: reset to rest, hold ``activation`` for
    ``steps`` steps and return the final state."""
    plant.reset()
    for _ in range(steps):
        state = plant_step(plant, activation)
    return state


def plant_responses(plant: MotorPlant, activations, steps=1) -> np.ndarray:
    """Row-wise :func:`plant_response` for a batch of activations."""
    return np.array([plant_response(plant, a, steps) for a in np.atleast_2d(activations)])


# ---------------------------------------------------------------------------
# Spiking network with STDP
# ---------------------------------------------------------------------------

@dataclass
class StdpParams:
    a_plus: float = 0.005
    a_minus: float = 0.006
    tau_plus: float = 20.0
    tau_minus: float = 20.0
    w_max: float = 1.0

    def __post_init__(self):
        if self.tau_plus <= 0 or self.tau_minus <= 0:
            raise PlantError("STDP time constants must be > 0")
        if self.w_max <= 0:
            raise PlantError("w_max must be > 0")


@dataclass
class SpikingNetwork:
    """Leaky integrate-and-fire population.

    ``weights[i, j]`` is the synapse from neuron ``i`` to neuron ``j``; a
    presynaptic spike adds ``weights[i, j]`` to the membrane potential of
    ``j`` on the following step. ``plastic`` marks synapses STDP may touch.
    ``sites`` names neuron groups and ``readout`` (2 x N) projects spike
    counts to a torque vector.
    """

    weights: np.ndarray
    stdp_params: StdpParams = field(default_factory=StdpParams)
    leak_tau: float = 20.0
    threshold: float = 1.0
    rng_seed: int = 0
    membrane_potentials: np.ndarray | None = None
    last_spike_times: np.ndarray | None = None
    plastic: np.ndarray | None = None
    sites: dict = field(default_factory=dict)
    readout: np.ndarray | None = None
    t: float = 0.0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        W = _as_finite(self.weights, "weights").copy()
        n = W.shape[0]
        if W.shape != (n, n):
            raise PlantError("weights must be square")
        if self.leak_tau <= 0:
            raise PlantError("leak_tau must be > 0")
        np.fill_diagonal(W, 0.0)
        if np.any(W < 0) or np.any(W > self.stdp_params.w_max):
            raise PlantError("weights must lie in [0, w_max]")
        self.weights = W
        if self.membrane_potentials is None:
            self.membrane_potentials = np.zeros(n)
        if self.last_spike_times is None:
            self.last_spike_times = np.full(n, -np.inf)
        if self.plastic is None:
            self.plastic = ~np.eye(n, dtype=bool)
        self.plastic = np.asarray(self.plastic, dtype=bool) & ~np.eye(n, dtype=bool)
        if self.readout is None:
            self.readout = np.zeros((2, n))
        self.rng = np.random.default_rng(self.rng_seed)

    @property
    def n(self):
        return self.weights.shape[0]

    def copy(self):
        return copy.deepcopy(self)

    def site(self, name):
        try:
            return np.asarray(self.sites[name], dtype=int)
        except KeyError:
            raise PlantError(f"unknown site {name!r}") from None


def spiking_step(net: SpikingNetwork, input_current, dt: float, plastic=False) -> np.ndarray:
    """One forward-Euler LIF step of length ``dt`` ms.

    ``v <- v + dt (-v / leak_tau + I)``; neurons at or above threshold spike
    and reset to zero. Spikes from the previous step arrive as synaptic jumps
    before integration. With ``plastic=True`` the pair-based nearest-spike
    STDP rule is applied to every plastic synapse touching a spiking neuron.
    Returns a boolean spike vector.
    """
    if not dt > 0:
        raise PlantError("dt must be > 0")
    current = _as_finite(input_current, "input_current")
    if current.shape != (net.n,):
        raise PlantError(f"input_current must have shape ({net.n},)")

    v = net.membrane_potentials
    v += dt * (-v / net.leak_tau + current)
    spikes = v >= net.threshold
    v[spikes] = 0.0
    net.t += dt
    if spikes.any():
        if plastic:
            _stdp_on_spikes(net, spikes)
        net.last_spike_times[spikes] = net.t
        # synaptic jumps delivered to targets for the next step
        v += net.weights[spikes].sum(axis=0)
        v[spikes] = 0.0
    return spikes


def _stdp_on_spikes(net, spikes):
    p = net.stdp_params
    t = net.t
    last = net.last_spike_times
    W = net.weights
    idx = np.flatnonzero(spikes)
    # time since each neuron's most recent spike; spiking-now neurons are
    # simultaneous with every other spike this step and get no update
    lag = t - last
    lag[spikes] = 0.0
    earlier = lag > 0
    pot = np.zeros(net.n)
    dep = np.zeros(net.n)
    pot[earlier] = p.a_plus * np.exp(-lag[earlier] / p.tau_plus)
    dep[earlier] = p.a_minus * np.exp(-lag[earlier] / p.tau_minus)
    # post spikes now: potentiate synapses from earlier presynaptic spikes
    W[:, idx] += pot[:, None] * net.plastic[:, idx]
    # pre spikes now: depress synapses onto neurons that fired earlier
    W[idx, :] -= dep[None, :] * net.plastic[idx, :]
    np.clip(W, 0.0, p.w_max, out=W)


def stdp_update(net: SpikingNetwork, pre_spike_time, post_spike_time, pre, post) -> float:
    """Apply the exponential STDP window to the single synapse ``pre -> post``.

    Simultaneous spikes leave the weight unchanged. Returns the new weight.
    """
    if pre == post:
        raise PlantError("pre and post must differ (no self-synapses)")
    p = net.stdp_params
    lag = post_spike_time - pre_spike_time
    w = net.weights[pre, post]
    if lag > 0:
        w += p.a_plus * np.exp(-lag / p.tau_plus)
    elif lag < 0:
        w -= p.a_minus * np.exp(lag / p.tau_minus)
    w = min(max(w, 0.0), p.w_max)
    net.weights[pre, post] = w
    return w


def lif_rate(current, leak_tau, threshold):
    """Closed-form firing rate (Hz) of a LIF neuron under constant drive,
    with reset to zero and no refractory period; ``current`` in units/ms."""
    drive = current * leak_tau
    if drive <= threshold:
        return 0.0
    isi_ms = -leak_tau * np.log(1.0 - threshold / drive)
    return 1000.0 / isi_ms


# ---------------------------------------------------------------------------
# Output effect of site stimulation
# ---------------------------------------------------------------------------

@dataclass
class OutputEffect:
    site: str
    mean_vector: np.ndarray
    n_trials: int

    def __post_init__(self):
        if self.n_trials < 1:
            raise PlantError("n_trials must be >= 1")
        if not np.all(np.isfinite(self.mean_vector)):
            raise PlantError("mean_vector must be finite")


def output_effect_map(net: SpikingNetwork, site, probe_pattern=None, n_trials=20,
                      seed=0, dt=0.5, response_ms=15.0, v0_max=0.5) -> OutputEffect:
    """Mean downstream torque evoked by stimulating ``site``.

    Each trial starts from membrane potentials drawn uniformly in
    ``[0, v0_max * threshold)``, drives every neuron of the site above
    threshold, then counts spikes of all other neurons over ``response_ms``.
    Counts project through ``net.readout``. ``probe_pattern`` may carry an
    ``amplitudes`` (or ``amplitude``) whose maximum is the per-neuron kick; the default is 2x threshold.
    STDP is off during probing; ``net`` is not modified.
    """
    if n_trials < 1:
        raise PlantError("n_trials must be >= 1")
    members = net.site(site)
    kick = 2.0 * net.threshold
    if probe_pattern is not None:
        amp = getattr(probe_pattern, "amplitudes", getattr(probe_pattern, "amplitude", None))
        if amp is not None and np.max(amp) > 0:
            kick = float(np.max(amp))
    rng = np.random.default_rng(seed)
    downstream = np.ones(net.n, dtype=bool)
    downstream[members] = False
    n_steps = int(round(response_ms / dt))
    total = np.zeros(2)
    for _ in range(n_trials):
        probe = net.copy()
        probe.membrane_potentials = rng.uniform(0.0, v0_max * net.threshold, net.n)
        counts = np.zeros(net.n)
        current = np.zeros(net.n)
        current[members] = kick / dt
        counts += spiking_step(probe, current, dt)
        zero = np.zeros(net.n)
        for _ in range(n_steps):
            counts += spiking_step(probe, zero, dt)
        total += net.readout @ (counts * downstream)
    return OutputEffect(site=site, mean_vector=total / n_trials, n_trials=n_trials)


def cortical_network(n_per_site=5, n_pool=5, w_cross=0.05, w_pool=1.0,
                     directions=None, stdp=None, seed=0) -> SpikingNetwork:
    """Three cortical sites (``rec``, ``stim``, ``ctrl``) each projecting to
    its own output pool with a fixed torque direction.

    ``rec -> stim`` and ``ctrl -> stim`` start weak (``w_cross``) and are the
    only plastic synapses; they form the conditioned and control pathways.
    """
    if directions is None:
        directions = {"rec": 0.0, "stim": 90.0, "ctrl": 225.0}
    names = ("rec", "stim", "ctrl")
    n = len(names) * (n_per_site + n_pool)
    W = np.zeros((n, n))
    plastic = np.zeros((n, n), dtype=bool)
    readout = np.zeros((2, n))
    sites = {}
    for s, name in enumerate(names):
        base = s * (n_per_site + n_pool)
        cortex = np.arange(base, base + n_per_site)
        pool = np.arange(base + n_per_site, base + n_per_site + n_pool)
        sites[name] = cortex.tolist()
        sites[name + "_pool"] = pool.tolist()
        W[np.ix_(cortex, pool)] = w_pool
        angle = np.deg2rad(directions[name])
        readout[:, pool] = np.array([[np.cos(angle)], [np.sin(angle)]])
    stim = sites["stim"]
    for src in ("rec", "ctrl"):
        W[np.ix_(sites[src], stim)] = w_cross
        plastic[np.ix_(sites[src], stim)] = True
    params = stdp or StdpParams(w_max=max(1.0, w_pool))
    return SpikingNetwork(weights=W, stdp_params=params, plastic=plastic,
                          sites=sites, readout=readout, rng_seed=seed)
