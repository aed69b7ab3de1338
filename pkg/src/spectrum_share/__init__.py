"""Distributed channel selection and AP association for database-assisted white-space networks."""

from .model import (
    ApConfig,
    ContentionModel,
    InvalidInput,
    InvariantViolation,
    Scenario,
    UserConfig,
    UserPopulation,
    contention_success,
    per_ap_throughput,
    potential_phi,
    system_throughput,
    throughput,
    user_rate,
)

__version__ = "0.1.0"
