"""Scenario configuration: JSON documents (``"schema": 1``) merged over
per-scenario defaults and validated with field-path diagnostics."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

SCENARIOS = ("prosthetic_control", "limb_reanimation", "plasticity_induction",
             "memory_bridge", "seizure_suppression", "coadaptation")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""

    def __init__(self, path, msg):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


DEFAULTS = {
    "prosthetic_control": {
        "sessions": 4,
        "plant": {"decay": 0.999, "dt": 0.01, "noise": 0.002,
                  "actuator_gains": [[0.3, 0.0, 1.0, 0.0], [0.0, 0.3, 0.0, 1.0]],
                  "lesion_mask": [1, 1, 0, 0]},
        "decoder": {"units": 24, "tuning": 8.0, "baseline_rate": 20.0, "rate_noise": 3.0,
                    "train_steps": 4000},
        "encoder": {"torque_gain": 20.0, "max_amplitude": 80.0, "pulse_width": 200.0,
                    "record_ms": 50.0, "stim_ms": 50.0, "blank_ms": 7.5},
        "coprocessor": {"trials_per_session": 8, "steps_per_trial": 200, "reach_gain": 4.0,
                        "max_speed": 2.0, "success_radius": 0.1},
    },
    "limb_reanimation": {
        "sessions": 3,
        "plant": {"decay": 0.9, "gain": 0.02, "dt_ms": 10.0},
        "decoder": {"rate_window_ms": 250.0, "svm_channels": 16, "svm_trials_per_class": 30,
                    "svm_lambda": 0.001, "lda_features": 6, "lda_trials": 200,
                    "percent_units": 20, "percent_trials": 300},
        "encoder": {"knots": [[0.0, 0.0], [0.3, 0.0], [0.6, 0.7], [1.0, 1.0]],
                    "motion_amplitude": 5.0},
        "coprocessor": {"fes_steps": 400, "track_gain": 6.0},
    },
    "plasticity_induction": {
        "sessions": 3,
        "plant": {"n_per_site": 5, "n_pool": 5, "w_cross": 0.05, "w_pool": 1.0,
                  "a_plus": 0.005, "a_minus": 0.006, "tau_plus": 20.0, "tau_minus": 20.0},
        "decoder": {"background_hz": 5.0},
        "encoder": {"delay_ms": 3.0, "dt_ms": 0.5},
        "coprocessor": {"duration_ms": 20000.0, "probe_trials": 50},
    },
    "memory_bridge": {
        "sessions": 1,
        "plant": {"n_inputs": 2, "n_outputs": 2, "input_rate": 0.2, "bin_ms": 2.0},
        "decoder": {"M_k": 8, "M_h": 4, "train_bins": 20000, "test_bins": 5000},
        "encoder": {"amplitude": 1.0, "pulse_width": 200.0},
        "coprocessor": {},
    },
    "seizure_suppression": {
        "sessions": 3,
        "plant": {"fs": 256.0, "window": 512, "burst_prob": 0.3, "burst_amplitude": 4.0,
                  "burst_hz": 12.0, "imagery_prob": 0.5, "mu_amplitude": 1.0},
        "decoder": {"band": [10.0, 14.0], "k_sigma": 4.0, "mu_band": [8.0, 12.0],
                    "drop_fraction": 0.3},
        "encoder": {"pattern": [1.0, 0.0, 1.0, 0.0, 1.0, 0.0]},
        "coprocessor": {"windows": 200, "hidden": 8, "epochs": 300, "learning_rate": 1.0},
    },
    "coadaptation": {
        "sessions": 3,
        "plant": {"dynamics": [[0.5, 0.0], [0.0, 0.4]],
                  "input_matrix": [[1.0, 0.2, 0.8, -0.3], [-0.1, 0.9, 0.4, 0.7]],
                  "lesion_mask": [1, 1, 0, 0], "noise": 0.05, "steps": 1},
        "decoder": {"intention_dim": 6, "intention_noise": 0.1},
        "encoder": {"probe_noise": 0.5},
        "coprocessor": {"hidden": 8, "en_refresh_every": 1, "trials_per_session": 400,
                        "epochs": 300, "learning_rate": 0.5, "perturb_session": None,
                        "perturb_scale": 0.1},
    },
}


@dataclass
class ScenarioConfig:
    scenario: str
    seed: int
    sessions: int
    output_dir: str
    plant: dict
    decoder: dict
    encoder: dict
    coprocessor: dict

    def to_dict(self):
        return {"schema": 1, "scenario": self.scenario, "seed": self.seed,
                "sessions": self.sessions, "output_dir": self.output_dir,
                "plant": self.plant, "decoder": self.decoder,
                "encoder": self.encoder, "coprocessor": self.coprocessor}


def _merge(defaults, given, path):
    out = copy.deepcopy(defaults)
    if not isinstance(given, dict):
        raise ConfigError(path, "must be an object")
    for key, val in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(where, "unknown field")
        ref = defaults[key]
        if isinstance(ref, dict):
            out[key] = _merge(ref, val, where)
        elif ref is None:
            out[key] = val
        elif isinstance(ref, bool):
            if not isinstance(val, bool):
                raise ConfigError(where, "must be a boolean")
            out[key] = val
        elif isinstance(ref, (int, float)):
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(where, "must be a number")
            if isinstance(ref, int) and not isinstance(ref, bool) and int(val) != val:
                raise ConfigError(where, "must be an integer")
            out[key] = type(ref)(val)
        elif isinstance(ref, list):
            if not isinstance(val, list):
                raise ConfigError(where, "must be a list")
            out[key] = val
        else:
            out[key] = val
    return out


def _positive(cfg, section, keys):
    for k in keys:
        if not cfg[section][k] > 0:
            raise ConfigError(f"{section}.{k}", "must be > 0")


def _mask(values, path):
    for i, v in enumerate(values):
        if v not in (0, 1):
            raise ConfigError(f"{path}[{i}]", "must be 0 or 1")


def validate(doc) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("", "configuration must be a JSON object")
    if doc.get("schema") != 1:
        raise ConfigError("schema", f"unsupported schema {doc.get('schema')!r} (expected 1)")
    scenario = doc.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError("scenario", f"must be one of {', '.join(SCENARIOS)}")
    if "seed" not in doc:
        raise ConfigError("seed", "required (no implicit entropy)")
    seed = doc["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", "must be a nonnegative integer")
    extra = set(doc) - {"schema", "scenario", "seed", "sessions", "output_dir",
                        "plant", "decoder", "encoder", "coprocessor"}
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown field")
    defaults = DEFAULTS[scenario]
    body = {k: doc[k] for k in ("sessions", "plant", "decoder", "encoder", "coprocessor")
            if k in doc}
    merged = _merge(defaults, body, "")
    if merged["sessions"] < 0:
        raise ConfigError("sessions", "must be >= 0")
    out_dir = doc.get("output_dir", f"runs/{scenario}")
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("output_dir", "must be a non-empty string")
    _check_scenario(scenario, merged)
    return ScenarioConfig(scenario, seed, merged["sessions"], out_dir, merged["plant"],
                          merged["decoder"], merged["encoder"], merged["coprocessor"])


def _check_scenario(scenario, c):
    if scenario == "prosthetic_control":
        _positive(c, "plant", ["dt"])
        if not 0 < c["plant"]["decay"] < 1:
            raise ConfigError("plant.decay", "must lie in (0, 1) for a stable plant")
        gains = c["plant"]["actuator_gains"]
        _mask(c["plant"]["lesion_mask"], "plant.lesion_mask")
        if len(c["plant"]["lesion_mask"]) != len(gains[0]):
            raise ConfigError("plant.lesion_mask", "needs one entry per actuator channel")
        _positive(c, "decoder", ["units", "train_steps"])
        _positive(c, "coprocessor", ["trials_per_session", "steps_per_trial"])
        enc = c["encoder"]
        if not 0 <= enc["blank_ms"] <= enc["record_ms"]:
            raise ConfigError("encoder.blank_ms", "must lie in [0, record_ms]")
    elif scenario == "limb_reanimation":
        if not 0 < c["plant"]["decay"] < 1:
            raise ConfigError("plant.decay", "must lie in (0, 1)")
        _positive(c, "decoder", ["rate_window_ms", "svm_channels", "svm_trials_per_class",
                                 "svm_lambda", "lda_trials"])
    elif scenario == "plasticity_induction":
        if c["encoder"]["delay_ms"] < 0:
            raise ConfigError("encoder.delay_ms", "must be >= 0")
        _positive(c, "encoder", ["dt_ms"])
        _positive(c, "plant", ["tau_plus", "tau_minus", "n_per_site", "n_pool"])
        _positive(c, "coprocessor", ["duration_ms", "probe_trials"])
    elif scenario == "memory_bridge":
        _positive(c, "decoder", ["M_k", "M_h", "train_bins", "test_bins"])
        if not 0 < c["plant"]["input_rate"] < 1:
            raise ConfigError("plant.input_rate", "must lie in (0, 1)")
    elif scenario == "seizure_suppression":
        lo, hi = c["decoder"]["band"]
        if not 0 < lo < hi < c["plant"]["fs"] / 2:
            raise ConfigError("decoder.band", "must satisfy 0 < lo < hi < fs/2")
        if not 0 < c["decoder"]["drop_fraction"] < 1:
            raise ConfigError("decoder.drop_fraction", "must lie in (0, 1)")
        _positive(c, "decoder", ["k_sigma"])
        _positive(c, "coprocessor", ["windows"])
    elif scenario == "coadaptation":
        _mask(c["plant"]["lesion_mask"], "plant.lesion_mask")
        _positive(c, "coprocessor", ["en_refresh_every", "trials_per_session"])


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path}: invalid JSON ({exc})") from None
    return validate(doc)


def default_config(scenario, seed=0, output_dir=None) -> ScenarioConfig:
    doc = {"schema": 1, "scenario": scenario, "seed": seed}
    if output_dir is not None:
        doc["output_dir"] = str(output_dir)
    return validate(doc)


def default_suite(seed=0, root="runs"):
    return [default_config(s, seed, Path(root) / s) for s in SCENARIOS]
