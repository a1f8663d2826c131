"""Multi-input single-output probit-Volterra spike models and the MIMO bank.

A MISO neuron computes a pre-threshold potential

    w(t) = u(t) + a(t) + eps,   eps ~ N(0, sigma^2)
    u(t) = sum_i sum_{tau=1..M_k} k_i(tau) x_i(t - tau)
    a(t) = sum_{tau=1..M_h} h(tau) y(t - tau)

and spikes when ``w >= theta``. The feedforward series is truncated at first
order. Kernels are stored lag-major: ``k[i, tau - 1]`` and ``h[tau - 1]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri


class MimoError(ValueError):
    pass


@dataclass
class MisoModel:
    k: np.ndarray  # (n_inputs, M_k)
    h: np.ndarray  # (M_h,)
    theta: float
    sigma: float = 1.0
    bin_ms: float = 2.0
    fit_info: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.k = np.atleast_2d(np.asarray(self.k, dtype=float))
        self.h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if self.sigma <= 0:
            raise MimoError("sigma must be > 0")
        if self.k.shape[1] < 1 or self.h.size < 1:
            raise MimoError("kernel memories M_k and M_h must be >= 1")
        if not (np.all(np.isfinite(self.k)) and np.all(np.isfinite(self.h))
                and np.isfinite(self.theta)):
            raise MimoError("kernels and threshold must be finite")

    @property
    def n_inputs(self):
        return self.k.shape[0]

    @property
    def M_k(self):
        return self.k.shape[1]

    @property
    def M_h(self):
        return self.h.size


def miso_potential(m: MisoModel, x_history, y_history):
    """``(u, a)`` at time ``t`` from histories whose last column is ``t - 1``."""
    x = np.atleast_2d(np.asarray(x_history, dtype=float))
    y = np.asarray(y_history, dtype=float).ravel()
    if x.shape[0] != m.n_inputs:
        raise MimoError(f"expected {m.n_inputs} input channels, got {x.shape[0]}")
    if x.shape[1] < m.M_k or y.size < m.M_h:
        raise MimoError("history is shorter than the kernel memory")
    # column -tau holds x(t - tau)
    u = float(np.sum(m.k * x[:, ::-1][:, :m.M_k]))
    a = float(np.dot(m.h, y[::-1][:m.M_h]))
    return u, a


def miso_spike_prob(m: MisoModel, u, a):
    """``P(u + a + eps >= theta) = Phi((u + a - theta) / sigma)``."""
    if m.sigma <= 0:
        raise MimoError("sigma must be > 0")
    return ndtr((np.asarray(u) + np.asarray(a) - m.theta) / m.sigma)


def lagged(x, M):
    """Design block of lags 1..M: ``out[t, i * M + tau - 1] = x[i, t - tau]``
    with zeros before the start of the record."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, T = x.shape
    out = np.zeros((T, n * M))
    for i in range(n):
        for tau in range(1, M + 1):
            out[tau:, i * M + tau - 1] = x[i, :T - tau]
    return out


def feedforward_drive(m: MisoModel, x):
    """``u(t)`` for every bin of the input record ``x`` (n_inputs, T)."""
    return lagged(x, m.M_k) @ m.k.ravel()


def miso_simulate(m: MisoModel, x, seed=0, y_prefix=None) -> np.ndarray:
    """Simulate the output spike train for inputs ``x`` (n_inputs, T).

    Bins covered by ``y_prefix`` are taken as given; each later bin draws a
    fresh ``eps`` and spikes iff ``u + a + eps >= theta``. Emitted spikes
    feed the after-potential of subsequent bins.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] != m.n_inputs:
        raise MimoError(f"expected {m.n_inputs} input channels, got {x.shape[0]}")
    T = x.shape[1]
    u = feedforward_drive(m, x)
    y = np.zeros(T)
    start = 0
    if y_prefix is not None:
        prefix = np.asarray(y_prefix, dtype=float).ravel()
        start = prefix.size
        y[:start] = prefix
    rng = np.random.default_rng(seed)
    eps = m.sigma * rng.standard_normal(T - start)
    h = m.h
    for t in range(start, T):
        lo = max(0, t - m.M_h)
        a = np.dot(h[:t - lo], y[lo:t][::-1])
        y[t] = 1.0 if u[t] + a + eps[t - start] >= m.theta else 0.0
    return y


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------

def design_matrix(x, y, M_k, M_h):
    """Columns: input lags, output lags, then a ``-1`` column for theta."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    return np.hstack([lagged(x, M_k), lagged(y[None, :], M_h), -np.ones((y.size, 1))])


def probit_loglik(beta, X, y):
    """``sum_t y log Phi(s) + (1 - y) log Phi(-s)`` with ``s = X beta``."""
    s = X @ beta
    return float(np.sum(y * log_ndtr(s) + (1 - y) * log_ndtr(-s)))


def _mills(s):
    """``phi(s) / Phi(s)`` computed in log space."""
    return np.exp(-0.5 * s * s - 0.5 * np.log(2 * np.pi) - log_ndtr(s))


def probit_grad(beta, X, y):
    s = X @ beta
    r = y * _mills(s) - (1 - y) * _mills(-s)
    return X.T @ r


def probit_fisher(beta, X):
    s = X @ beta
    w = _mills(s) * _mills(-s)
    return X.T @ (X * w[:, None])


def miso_fit(x, y, M_k, M_h, bin_ms=2.0, tol=1e-6, max_iter=500, method="fisher"):
    """Maximum-likelihood MISO fit with ``sigma`` fixed at 1.

    Ascent directions are the gradient preconditioned by the Fisher
    information (``method="fisher"``) or the raw gradient
    (``method="gradient"``); every step is accepted only after backtracking
    finds an increase of the log-likelihood. Stops when the gradient
    infinity-norm drops below ``tol``.
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.min() == y.max():
        raise MimoError(
            f"degenerate output: all bins are {int(y[0])}; the threshold is unidentifiable")
    X = design_matrix(x, y, M_k, M_h)
    n_in = np.atleast_2d(x).shape[0]
    beta = np.zeros(X.shape[1])
    beta[-1] = -float(ndtri(y.mean()))  # no drive: P(spike) = Phi(-theta)
    ll = probit_loglik(beta, X, y)
    trace = [ll]
    converged = False
    for it in range(max_iter):
        g = probit_grad(beta, X, y)
        if np.max(np.abs(g)) < tol:
            converged = True
            break
        if method == "fisher":
            F = probit_fisher(beta, X)
            direction = np.linalg.solve(F + 1e-10 * np.eye(len(F)), g)
        else:
            direction = g / max(1.0, np.linalg.norm(g))
        step = 1.0
        while step > 1e-12:
            cand = beta + step * direction
            cand_ll = probit_loglik(cand, X, y)
            if cand_ll >= ll:
                break
            step *= 0.5
        else:
            break
        beta, ll = cand, cand_ll
        trace.append(ll)
    F = probit_fisher(beta, X)
    stderr = np.sqrt(np.diag(np.linalg.pinv(F)))
    nk = n_in * M_k
    model = MisoModel(beta[:nk].reshape(n_in, M_k), beta[nk:nk + M_h], beta[-1],
                      sigma=1.0, bin_ms=bin_ms)
    model.fit_info = {
        "loglik_trace": trace,
        "converged": converged,
        "iterations": len(trace) - 1,
        "k_stderr": stderr[:nk].reshape(n_in, M_k),
        "h_stderr": stderr[nk:nk + M_h],
        "theta_stderr": stderr[-1],
    }
    return model


def mimo_fit(x, y, M_k, M_h, **kwargs) -> list:
    """Fit one MISO model per output channel of ``y`` (n_outputs, T)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[1] != y.shape[1]:
        raise MimoError("input and output trains must be aligned")
    bank = []
    for j, yj in enumerate(y):
        try:
            bank.append(miso_fit(x, yj, M_k, M_h, **kwargs))
        except MimoError as exc:
            raise MimoError(f"output channel {j}: {exc}") from None
    return bank


def mimo_predict(bank, x, seed=0) -> np.ndarray:
    """Simulate every MISO model of the bank on ``x``; one seed per channel."""
    ss = np.random.SeedSequence(seed).spawn(len(bank))
    return np.array([miso_simulate(m, x, seed=s) for m, s in zip(bank, ss)])


# ---------------------------------------------------------------------------
# Stimulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PulseCommand:
    time_ms: float
    channel: int
    amplitude: float
    pulse_width: float
    biphasic: bool = True


def mimo_stim_encode(predicted, channel_map: dict, bin_ms=2.0, amplitude=1.0,
                     pulse_width=200.0) -> list:
    """One biphasic pulse per predicted spike, timed at the bin centre and
    routed through ``channel_map[output_channel] -> electrode``."""
    y = np.atleast_2d(np.asarray(predicted))
    if not np.all((y == 0) | (y == 1)):
        raise MimoError("predicted spike train must be binary")
    unmapped = [j for j in range(y.shape[0]) if y[j].any() and j not in channel_map]
    if unmapped:
        raise MimoError(f"output channels {unmapped} have no electrode mapping")
    cmds = []
    # bin-major so commands come out in time order
    for t, j in zip(*np.nonzero(y.T)):
        cmds.append(PulseCommand((t + 0.5) * bin_ms, channel_map[j], amplitude,
                                 pulse_width, True))
    return cmds
