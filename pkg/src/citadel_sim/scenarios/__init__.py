"""Scenario harness: testbeds, the honest lifecycle and the threat cases."""
from .cases import (
    SCENARIOS,
    run_honest_lifecycle,
    run_suite,
    run_threat_counterfeit,
    run_threat_recycling,
    run_threat_reverse_engineering,
)
from .config import ConfigError, IpConfig, SocConfig, builtin_config, load_config
from .harness import Scenario, Verdict, derive_seed

__all__ = [
    "SCENARIOS",
    "ConfigError",
    "IpConfig",
    "Scenario",
    "SocConfig",
    "Verdict",
    "builtin_config",
    "derive_seed",
    "load_config",
    "run_honest_lifecycle",
    "run_suite",
    "run_threat_counterfeit",
    "run_threat_recycling",
    "run_threat_reverse_engineering",
]
