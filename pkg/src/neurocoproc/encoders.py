"""Write-side algorithms: FES current laws, pulse-train encodings, torque
feedback, percent activation, spinal hotspot patterns, piecewise-linear
intensity and interleaved record/stimulate scheduling.

Every encoder is a pure function of its inputs and configuration.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class EncoderError(ValueError):
    pass


@dataclass(frozen=True)
class PulseTrain:
    frequency: float  # Hz
    amplitude: float = 1.0
    pulse_width: float = 200.0  # us
    packet_rate: float = 0.0  # Hz, 0 = continuous
    duration: float = 0.0  # ms
    biphasic: bool = True
    channels: tuple = ()

    def __post_init__(self):
        if self.frequency < 0 or self.amplitude < 0 or self.duration < 0:
            raise EncoderError("frequency, amplitude and duration must be >= 0")
        if not 0 <= self.packet_rate <= self.frequency:
            raise EncoderError("packet_rate must lie in [0, frequency]")


@dataclass(frozen=True)
class StimPattern:
    """Multichannel stimulation command with per-channel amplitudes."""

    amplitudes: np.ndarray
    frequency: float = 50.0
    pulse_width: float = 500.0
    packet_rate: float = 0.0
    duration: float = 0.0
    label: str = ""

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float)
        if amps.ndim != 1 or np.any(amps < 0) or not np.all(np.isfinite(amps)):
            raise EncoderError("amplitudes must be a finite nonnegative vector")
        if self.frequency < 0 or not 0 <= self.packet_rate <= self.frequency:
            raise EncoderError("need frequency >= 0 and 0 <= packet_rate <= frequency")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def channels(self):
        return tuple(np.flatnonzero(self.amplitudes).tolist())


def pulse_times(train: PulseTrain) -> np.ndarray:
    """Pulse onset times (ms) over the train's duration.

    With a nonzero packet rate, pulses are gated on during the first half of
    each packet period (50% duty).
    """
    if train.frequency == 0 or train.duration == 0:
        return np.empty(0)
    t = np.arange(0.0, train.duration, 1000.0 / train.frequency)
    if train.packet_rate > 0:
        period = 1000.0 / train.packet_rate
        t = t[np.mod(t, period) < 0.5 * period]
    return t


# -- FES ---------------------------------------------------------------------

@dataclass(frozen=True)
class FesParams:
    flexor_gain: float = 0.8  # mA s
    flexor_threshold: float = 24.0  # Hz
    extensor_gain: float = 0.6
    extensor_threshold: float = 12.0
    max_current: float = 10.0  # mA

    def __post_init__(self):
        if self.flexor_gain <= 0 or self.extensor_gain <= 0 or self.max_current <= 0:
            raise EncoderError("gains and max_current must be > 0")


def fes_flexor(rate, p: FesParams = FesParams()) -> float:
    """Flexor current ``0.8 (rate - 24)`` mA, clamped to ``[0, 10]``."""
    if rate < 0:
        raise EncoderError("firing rate must be >= 0")
    return min(max(0.0, p.flexor_gain * (rate - p.flexor_threshold)), p.max_current)


def fes_extensor(rate, p: FesParams = FesParams()) -> float:
    """Extensor current ``0.6 (12 - rate)`` mA, clamped to ``[0, 10]``."""
    if rate < 0:
        raise EncoderError("firing rate must be >= 0")
    return min(max(0.0, p.extensor_gain * (p.extensor_threshold - rate)), p.max_current)


# -- pulse-train encodings -----------------------------------------------------

def tactile_encode(rewarded: bool, amplitude=1.0, duration=1000.0) -> PulseTrain:
    """Artificial texture: 200 Hz in 10 Hz packets for the rewarded object,
    400 Hz in 5 Hz packets otherwise."""
    if rewarded:
        return PulseTrain(200.0, amplitude, packet_rate=10.0, duration=duration)
    return PulseTrain(400.0, amplitude, packet_rate=5.0, duration=duration)


HOLD_LIMIT_MS = 1000.0


def hold_encode(holding: bool, elapsed, electrodes=(0, 1, 2), amplitude=1.0):
    """300 Hz biphasic train on three electrodes while the object is held,
    for ``elapsed`` in ``[0, 1000)`` ms; otherwise ``None``."""
    if elapsed < 0:
        raise EncoderError("elapsed must be >= 0")
    if not holding or elapsed >= HOLD_LIMIT_MS:
        return None
    return PulseTrain(300.0, amplitude, duration=HOLD_LIMIT_MS - elapsed,
                      biphasic=True, channels=tuple(electrodes))


@dataclass(frozen=True)
class TorqueChannel:
    electrode: int
    gain: float
    max_amplitude: float


def torque_feedback_encode(torques, mapping: dict, n_channels=None,
                           frequency=100.0, pulse_width=200.0) -> StimPattern:
    """Linear torque-to-amplitude map.

    ``mapping[i]`` is the :class:`TorqueChannel` whose electrode previously
    evoked a percept on the finger of torque sensor ``i``.
    """
    tau = np.asarray(torques, dtype=float)
    if np.any(tau < 0):
        raise EncoderError("torques must be >= 0")
    missing = [i for i in range(tau.size) if i not in mapping]
    if missing:
        raise EncoderError(f"torque channels {missing} have no electrode mapping")
    if n_channels is None:
        n_channels = max(ch.electrode for ch in mapping.values()) + 1
    amps = np.zeros(n_channels)
    for i, t in enumerate(tau):
        ch = mapping[i]
        amps[ch.electrode] += min(ch.gain * t, ch.max_amplitude)
    return StimPattern(amps, frequency=frequency, pulse_width=pulse_width)


def intensity_piecewise(decoder_output, knots) -> float:
    """Piecewise-linear map from decoder output in [0, 1] to intensity."""
    k = np.asarray(knots, dtype=float)
    if k.ndim != 2 or k.shape[1] != 2 or len(k) < 2:
        raise EncoderError("knots must be a list of (x, y) pairs")
    xs, ys = k[:, 0], k[:, 1]
    if np.any(np.diff(xs) <= 0) or xs[0] != 0.0 or xs[-1] != 1.0:
        raise EncoderError("knot x-values must increase strictly from 0 to 1")
    if not 0.0 <= decoder_output <= 1.0:
        raise EncoderError("decoder output must lie in [0, 1]")
    return float(np.interp(decoder_output, xs, ys))


def percent_activation_encode(percents: dict, patterns: dict, max_amplitude=None,
                              frequency=50.0, pulse_width=500.0) -> StimPattern:
    """Channelwise sum of percent-scaled library patterns, clipped after the
    sum at ``max_amplitude`` (scalar or per channel)."""
    missing = [m for m in percents if m not in patterns]
    if missing:
        raise EncoderError(f"no stimulation pattern for movements {missing}")
    if not patterns:
        raise EncoderError("empty pattern library")
    n = len(next(iter(patterns.values())).amplitudes)
    total = np.zeros(n)
    for movement, pct in percents.items():
        if not 0.0 <= pct <= 1.0:
            raise EncoderError(f"percent for {movement!r} must lie in [0, 1]")
        total += pct * patterns[movement].amplitudes
    if max_amplitude is not None:
        total = np.minimum(total, max_amplitude)
    return StimPattern(total, frequency=frequency, pulse_width=pulse_width)


def motion_pattern_table(n_channels=12, n_motions=6, amplitude=5.0):
    """Synthetic calibrated pattern per motion (1..n): two adjacent
    electrodes each, monophasic 50 Hz / 500 us."""
    table = {}
    for m in range(1, n_motions + 1):
        amps = np.zeros(n_channels)
        amps[[(2 * (m - 1)) % n_channels, (2 * (m - 1) + 1) % n_channels]] = amplitude
        table[m] = StimPattern(amps, frequency=50.0, pulse_width=500.0, label=f"motion{m}")
    return table


# -- spinal hotspots -------------------------------------------------------------

@dataclass(frozen=True)
class HotspotConfig:
    n_channels: int = 8
    extension: tuple = (0, 1, 2)
    flexion: tuple = (4, 5, 6)
    amplitude: float = 1.0
    frequency: float = 40.0


def spinal_event_encode(event, cfg: HotspotConfig = HotspotConfig()) -> StimPattern:
    """Foot strike activates the extension hotspot, foot off the flexion one.
    ``event`` is ``"foot_strike"``/``"foot_off"`` or the LDA class 0/1."""
    if isinstance(event, (int, np.integer)) and not isinstance(event, bool):
        event = {0: "foot_strike", 1: "foot_off"}.get(int(event), event)
    if event == "foot_strike":
        sites, label = cfg.extension, "extension"
    elif event == "foot_off":
        sites, label = cfg.flexion, "flexion"
    else:
        raise EncoderError(f"unknown gait event {event!r}")
    amps = np.zeros(cfg.n_channels)
    amps[list(sites)] = cfg.amplitude
    return StimPattern(amps, frequency=cfg.frequency, label=label)


# -- interleaved scheduling --------------------------------------------------------

class Gate(str, enum.Enum):
    RECORD_VALID = "record_valid"
    RECORD_BLANKED = "record_blanked"
    STIMULATE = "stimulate"


@dataclass(frozen=True)
class InterleaveSchedule:
    record_ms: float = 50.0
    stim_ms: float = 50.0
    blank_ms: float = 7.5

    def __post_init__(self):
        if self.record_ms <= 0 or self.stim_ms <= 0:
            raise EncoderError("record_ms and stim_ms must be > 0")
        if not 0 <= self.blank_ms <= self.record_ms:
            raise EncoderError("blank_ms must lie in [0, record_ms]")

    @property
    def period(self):
        return self.record_ms + self.stim_ms


def interleave_gate(t, s: InterleaveSchedule = InterleaveSchedule()) -> Gate:
    """Phase of the alternating record/stimulate cycle at time ``t`` (ms).
    The first ``blank_ms`` of each record window are masked by artifacts."""
    if t < 0:
        raise EncoderError("t must be >= 0")
    phase = np.mod(t, s.period)
    if phase < s.record_ms:
        return Gate.RECORD_BLANKED if phase < s.blank_ms else Gate.RECORD_VALID
    return Gate.STIMULATE


def defer_pulse(t, s: InterleaveSchedule = InterleaveSchedule()) -> float:
    """Delivery time of a pulse requested at ``t``: immediate inside a stim
    window, otherwise the start of the next stim window."""
    if interleave_gate(t, s) is Gate.STIMULATE:
        return float(t)
    return float(t - np.mod(t, s.period) + s.record_ms)


@dataclass
class PulseLog:
    """Delivered pulse commands; rows serialize to the run log CSV."""

    rows: list = field(default_factory=list)

    def add(self, requested, delivered, channel, amplitude, pulse_width, biphasic=True):
        self.rows.append((float(requested), float(delivered), int(channel),
                          float(amplitude), float(pulse_width), bool(biphasic)))

    header = ("requested_ms", "delivered_ms", "channel", "amplitude",
              "pulse_width_us", "biphasic")
