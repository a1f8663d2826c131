"""Scenario orchestration, metrics, persistence and the command-line interface."""
from .config import SCENARIOS, ConfigError, ScenarioConfig, default_config, default_suite, load_config, validate
from .metrics import compute_roc, entropy_bits, mutual_information
from .persist import SchemaError, UnsupportedVersion, load_weights, persist_weights
from .scenarios import RunArtifact, ScenarioError, run_scenario

__all__ = [
    "SCENARIOS", "ConfigError", "ScenarioConfig", "default_config", "default_suite",
    "load_config", "validate", "compute_roc", "entropy_bits", "mutual_information",
    "SchemaError", "UnsupportedVersion", "load_weights", "persist_weights",
    "RunArtifact", "ScenarioError", "run_scenario",
]
