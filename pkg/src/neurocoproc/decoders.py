"""Read-out algorithms: Kalman filtering, linear velocity decoding, band-power
and burst detection, LDA event decoding, one-vs-rest hinge classification and
operant single-neuron rate decoding.

Ties between class scores always resolve to the lowest class index.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import hilbert

COND_CAP = 1e12
COV_EPS = 1e-8
FOOT_STRIKE, FOOT_OFF = 0, 1


class DecoderError(ValueError):
    """Raised on degenerate data or numerically singular systems."""


def _argmax_low(scores, rtol=1e-12):
    """Index of the maximum score; near-equal scores tie to the lowest index."""
    scores = np.asarray(scores, dtype=float)
    top = scores.max()
    tol = rtol * max(1.0, abs(top))
    return int(np.flatnonzero(scores >= top - tol)[0])


# ---------------------------------------------------------------------------
# Kalman filter
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KalmanModel:
    """Linear-Gaussian state space ``x_t = A x_{t-1} + n_t``,
    ``y_t = B x_t + m_t`` with ``n ~ N(0, Q)``, ``m ~ N(0, R)``."""

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        d = self.A.shape[0]
        if self.A.shape != (d, d) or self.B.shape[1] != d:
            raise DecoderError("A must be square and B must have state-dim columns")
        if self.Q.shape != (d, d) or self.cov.shape != (d, d) or self.mean.shape != (d,):
            raise DecoderError("Q, cov and mean must match the state dimension")
        p = self.B.shape[0]
        if self.R.shape != (p, p):
            raise DecoderError("R must match the observation dimension")

    @classmethod
    def create(cls, A, B, Q, R, mean=None, cov=None):
        A, B, Q, R = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (A, B, Q, R))
        d = A.shape[0]
        mean = np.zeros(d) if mean is None else np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.eye(d) if cov is None else np.atleast_2d(np.asarray(cov, dtype=float))
        return cls(A, B, Q, R, mean, cov)


def kalman_step(model: KalmanModel, y_t, return_gain=False):
    """One predict/update cycle. Returns ``(mean, cov)`` or, with
    ``return_gain``, ``(mean, cov, K)``.

    The innovation covariance is inverted via a linear solve; a condition
    number above ``COND_CAP`` raises :class:`DecoderError`.
    """
    y = np.atleast_1d(np.asarray(y_t, dtype=float))
    A, B = model.A, model.B
    if y.shape != (B.shape[0],):
        raise DecoderError(f"observation has shape {y.shape}, expected ({B.shape[0]},)")
    mean = A @ model.mean
    cov = A @ model.cov @ A.T + model.Q
    S = B @ cov @ B.T + model.R
    S = 0.5 * (S + S.T)
    if np.linalg.cond(S) > COND_CAP:
        raise DecoderError("innovation covariance is numerically singular")
    K = np.linalg.solve(S, B @ cov).T
    mean = mean + K @ (y - B @ mean)
    # Joseph form keeps the posterior covariance PSD
    I_KB = np.eye(len(mean)) - K @ B
    cov = I_KB @ cov @ I_KB.T + K @ model.R @ K.T
    cov = 0.5 * (cov + cov.T)
    if return_gain:
        return mean, cov, K
    return mean, cov


def kalman_predict(model: KalmanModel):
    """Predict-only step for frames without a valid observation."""
    mean = model.A @ model.mean
    cov = model.A @ model.cov @ model.A.T + model.Q
    return mean, 0.5 * (cov + cov.T)


def kalman_filter(model: KalmanModel, observations):
    """Run :func:`kalman_step` over a sequence; returns stacked means and covs."""
    means, covs = [], []
    for y in observations:
        mean, cov = kalman_step(model, y)
        model = replace(model, mean=mean, cov=cov)
        means.append(mean)
        covs.append(cov)
    return np.array(means), np.array(covs)


def fit_kalman(states, frames) -> KalmanModel:
    """Least-squares fit of ``A``, ``B`` and residual covariances ``Q``, ``R``.

    ``states`` is (T, d) and ``frames`` is (T, p), aligned in time.
    """
    X = np.asarray(states, dtype=float)
    Y = np.asarray(frames, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    T, d = X.shape
    if Y.shape[0] != T:
        raise DecoderError("states and frames must be aligned")
    if T < d + 1:
        raise DecoderError(f"need at least {d + 1} samples, got {T}")
    prev, nxt = X[:-1], X[1:]
    if np.linalg.matrix_rank(prev) < d or np.linalg.matrix_rank(X) < d:
        raise DecoderError("state regressors are rank deficient")
    A = np.linalg.lstsq(prev, nxt, rcond=None)[0].T
    B = np.linalg.lstsq(X, Y, rcond=None)[0].T
    dyn_res = nxt - prev @ A.T
    obs_res = Y - X @ B.T
    Q = dyn_res.T @ dyn_res / len(dyn_res)
    R = obs_res.T @ obs_res / T
    Q = 0.5 * (Q + Q.T)
    R = 0.5 * (R + R.T)
    return KalmanModel.create(A, B, Q, R, mean=X[0], cov=np.cov(X.T).reshape(d, d))


# ---------------------------------------------------------------------------
# Linear velocity decoder f = B v
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearDecoder:
    B: np.ndarray  # (rate channels, velocity dims)


def decode_velocity(dec: LinearDecoder, f) -> np.ndarray:
    """Least-squares inversion ``v = (B^T B)^{-1} B^T f``."""
    B = dec.B
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != B.shape[0]:
        raise DecoderError(f"rate vector length {f.shape[-1]} != {B.shape[0]} channels")
    gram = B.T @ B
    if np.linalg.cond(gram) > COND_CAP:
        raise DecoderError("B^T B is singular")
    return np.linalg.solve(gram, B.T @ f.T).T


def _fit_B(rates, velocities):
    V = np.atleast_2d(np.asarray(velocities, dtype=float))
    F = np.atleast_2d(np.asarray(rates, dtype=float))
    if V.shape[0] != F.shape[0]:
        raise DecoderError("rates and velocities must be paired")
    if V.shape[0] < V.shape[1] or np.linalg.matrix_rank(V) < V.shape[1]:
        raise DecoderError("velocity regressors are rank deficient")
    return np.linalg.lstsq(V, F, rcond=None)[0].T


def fit_linear_decoder(observe_rates, observe_velocities, assist_rounds=0,
                       closed_loop=None, alpha=0.5) -> LinearDecoder:
    """Two-phase fit of ``f = B v``.

    Phase 1 regresses observation-period rates on the observed velocities.
    Phase 2 runs ``assist_rounds`` of computer-assisted control: each round
    calls ``closed_loop(decoder, round)`` for ``(rates, intended)`` collected
    while the current decoder is in the loop, relabels the data with the
    assisted velocity ``alpha * intended + (1 - alpha) * decoded`` and refits.
    Without ``closed_loop`` the observation data are replayed.
    """
    dec = LinearDecoder(_fit_B(observe_rates, observe_velocities))
    for r in range(assist_rounds):
        if closed_loop is None:
            rates, intended = observe_rates, observe_velocities
        else:
            rates, intended = closed_loop(dec, r)
        rates = np.asarray(rates, dtype=float)
        decoded = decode_velocity(dec, rates)
        assisted = alpha * np.asarray(intended, dtype=float) + (1 - alpha) * decoded
        dec = LinearDecoder(_fit_B(rates, assisted))
    return dec


# ---------------------------------------------------------------------------
# Band power and burst detection
# ---------------------------------------------------------------------------

def band_power(signal, fs, band_lo, band_hi) -> float:
    """In-band share of the signal's mean-square power from a plain DFT.

    One-sided bins inside ``[band_lo, band_hi]`` are summed with Parseval
    weighting, so a unit-amplitude sinusoid on a bin yields 0.5.
    """
    x = np.asarray(signal, dtype=float)
    if x.size == 0:
        raise DecoderError("empty signal")
    if not 0 < band_lo < band_hi < fs / 2:
        raise DecoderError(f"band [{band_lo}, {band_hi}] must lie inside (0, {fs / 2})")
    n = x.size
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    weight = np.full(freqs.shape, 2.0)
    weight[0] = 1.0
    if n % 2 == 0:
        weight[-1] = 1.0
    sel = (freqs >= band_lo) & (freqs <= band_hi)
    return float(np.sum(weight[sel] * np.abs(spec[sel]) ** 2) / n ** 2)


@dataclass(frozen=True)
class BandPowerDecoder:
    band_lo: float = 8.0
    band_hi: float = 12.0
    window: int = 256
    baseline_power: float = 1.0
    drop_fraction: float = 0.3
    fs: float = 256.0

    def __post_init__(self):
        if not 0 < self.band_lo < self.band_hi < self.fs / 2:
            raise DecoderError("band must satisfy 0 < lo < hi < Nyquist")
        if not 0 < self.drop_fraction < 1:
            raise DecoderError("drop_fraction must lie in (0, 1)")


def detect_intention(dec: BandPowerDecoder, window) -> bool:
    """True iff in-band power falls strictly below
    ``(1 - drop_fraction) * baseline_power``."""
    if dec.baseline_power <= 0:
        raise DecoderError("baseline_power must be > 0")
    x = np.asarray(window, dtype=float)
    if x.size != dec.window:
        raise DecoderError(f"window has {x.size} samples, decoder expects {dec.window}")
    p = band_power(x, dec.fs, dec.band_lo, dec.band_hi)
    return bool(p < (1.0 - dec.drop_fraction) * dec.baseline_power)


def band_envelope(window, fs, band, smooth=None):
    """Rectified, moving-average-smoothed analytic envelope of the
    FFT band-passed signal."""
    x = np.asarray(window, dtype=float)
    lo, hi = band
    if smooth is None:
        smooth = max(1, int(round(fs / lo)))
    if x.size < smooth:
        raise DecoderError(f"need at least {smooth} samples for smoothing, got {x.size}")
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, d=1.0 / fs)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    env = np.abs(hilbert(np.fft.irfft(spec, n=x.size)))
    kernel = np.ones(smooth) / smooth
    return np.convolve(env, kernel, mode="same"), smooth


def _running_stats(env, warm):
    csum = np.cumsum(env)
    csq = np.cumsum(env ** 2)
    n = np.arange(1, env.size + 1)
    mean = csum / n
    var = np.maximum(csq / n - mean ** 2, 0.0)
    # statistics over samples strictly before index i
    return mean[warm - 1:-1], np.sqrt(var[warm - 1:-1])


def burst_score(window, fs, band, smooth=None) -> float:
    """Largest envelope excursion above the running mean, in running
    standard deviations; a graded version of :func:`detect_burst`."""
    env, smooth = band_envelope(window, fs, band, smooth)
    warm = 4 * smooth
    if env.size <= warm:
        return 0.0
    mu_prev, sd_prev = _running_stats(env, warm)
    z = (env[warm:] - mu_prev) / np.maximum(sd_prev, 1e-300)
    return float(np.max(z))


def detect_burst(window, fs, band, k_sigma, smooth=None) -> bool:
    """Burst (spindle) detector.

    True iff some envelope sample exceeds the running mean plus ``k_sigma``
    running standard deviations of all envelope samples before it. Running
    statistics start after a warm-up of four smoothing lengths.
    """
    if k_sigma <= 0:
        raise DecoderError("k_sigma must be > 0")
    if np.asarray(window).size == 0:
        raise DecoderError("empty window")
    env, smooth = band_envelope(window, fs, band, smooth)
    warm = 4 * smooth
    if env.size <= warm:
        return False
    mu_prev, sd_prev = _running_stats(env, warm)
    return bool(np.any(env[warm:] > mu_prev + k_sigma * sd_prev))


# ---------------------------------------------------------------------------
# Linear discriminant analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LdaModel:
    class_means: np.ndarray  # (2, d)
    shared_cov: np.ndarray
    priors: np.ndarray


def lda_fit(samples, labels, priors=None) -> LdaModel:
    """Two-class LDA with pooled covariance; labels are 0 (foot strike) and
    1 (foot off). A singular pooled covariance is regularized by
    ``COV_EPS * I`` before giving up."""
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    y = np.asarray(labels, dtype=int)
    if set(np.unique(y)) != {0, 1}:
        raise DecoderError("both classes 0 and 1 must be present")
    means = np.array([X[y == c].mean(axis=0) for c in (0, 1)])
    centered = X - means[y]
    dof = max(len(X) - 2, 1)
    cov = centered.T @ centered / dof
    cov = _regularize(cov)
    if priors is None:
        priors = np.array([np.mean(y == 0), np.mean(y == 1)])
    priors = np.asarray(priors, dtype=float)
    if not (np.all((priors > 0) & (priors < 1)) and np.isclose(priors.sum(), 1.0)):
        raise DecoderError("priors must lie in (0, 1) and sum to 1")
    return LdaModel(means, cov, priors)


def _regularize(cov):
    if np.linalg.cond(cov) < COND_CAP:
        return cov
    cov = cov + COV_EPS * np.eye(len(cov))
    if np.linalg.cond(cov) >= COND_CAP:
        raise DecoderError("pooled covariance is singular even after regularization")
    return cov


def lda_scores(model: LdaModel, x) -> np.ndarray:
    prec_mu = np.linalg.solve(model.shared_cov, model.class_means.T)  # (d, 2)
    const = -0.5 * np.sum(model.class_means.T * prec_mu, axis=0) + np.log(model.priors)
    return np.asarray(x, dtype=float) @ prec_mu + const


def lda_predict(model: LdaModel, x) -> int:
    return _argmax_low(lda_scores(model, x))


# ---------------------------------------------------------------------------
# One-vs-rest hinge classifier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HingeClassifier:
    weights: np.ndarray  # (n_classes, d)
    biases: np.ndarray
    classes: np.ndarray = field(default_factory=lambda: np.arange(1, 7))
    lam: float = 1e-3


def hinge_fit(features, labels, lam=1e-3, epochs=500, lr=0.5) -> HingeClassifier:
    """Full-batch subgradient descent on the regularized one-vs-rest hinge
    loss ``lam |w|^2 + mean(max(0, 1 - y (w.x + b)))`` per class, with step
    ``lr / sqrt(t)``."""
    X = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(labels)
    classes = np.unique(y)
    if classes.size < 2:
        raise DecoderError("training data must contain at least two classes")
    if lam <= 0:
        raise DecoderError("lam must be > 0")
    n, d = X.shape
    targets = np.where(y[None, :] == classes[:, None], 1.0, -1.0)  # (C, n)
    W = np.zeros((classes.size, d))
    b = np.zeros(classes.size)
    for t in range(1, epochs + 1):
        margins = targets * (W @ X.T + b[:, None])
        active = (margins < 1.0) * targets
        gW = 2 * lam * W - active @ X / n
        gb = -active.sum(axis=1) / n
        step = lr / np.sqrt(t)
        W -= step * gW
        b -= step * gb
    return HingeClassifier(W, b, classes, lam)


def hinge_predict(clf: HingeClassifier, x):
    scores = clf.weights @ np.asarray(x, dtype=float) + clf.biases
    return clf.classes[_argmax_low(scores)].item()


# ---------------------------------------------------------------------------
# Operant rate decoding
# ---------------------------------------------------------------------------

def operant_rate(spike_times, window, now=None) -> float:
    """Firing rate (Hz) from spikes in the trailing window ``[now - window, now]``
    (ms). ``now`` defaults to ``window``."""
    if window <= 0:
        raise DecoderError("window must be > 0")
    t = np.asarray(spike_times, dtype=float)
    now = window if now is None else now
    count = np.count_nonzero((t >= now - window) & (t <= now))
    return 1000.0 * count / window
