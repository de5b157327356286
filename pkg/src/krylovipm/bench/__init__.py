"""Synthetic workloads, dense reference oracles and the benchmark suite."""
from .generator import PRESETS, GeneratorSpec, generate, preset
from .oracles import (
    OracleError,
    OracleSolution,
    active_set_oracle,
    dense_doubly_augmented,
    dense_newton_oracle,
    dense_reduced_system,
    newton_relative_residual,
)
from .suite import SuiteConfig, run_suite

__all__ = [
    "PRESETS", "GeneratorSpec", "generate", "preset", "OracleError", "OracleSolution",
    "active_set_oracle", "dense_doubly_augmented", "dense_newton_oracle", "dense_reduced_system",
    "newton_relative_residual", "SuiteConfig", "run_suite",
]
