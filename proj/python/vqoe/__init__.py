"""Flow-level video QoE engine: analytic starvation model, fluid simulator,
viewing-time fitting and inference."""

from ._core import (
    DomainError,
    Error,
    IoError,
    NumericalError,
    SystemConfig,
    class_posterior,
    default_config_text,
    fit_viewing_times,
    generator_mc1,
    reference_config,
    sample_hyperexp,
    simulate,
    simulate_csv,
    solve_csv,
    solve_qoe,
    stationary_distribution,
    with_load,
)

__all__ = [
    "DomainError",
    "Error",
    "IoError",
    "NumericalError",
    "SystemConfig",
    "class_posterior",
    "default_config_text",
    "fit_viewing_times",
    "generator_mc1",
    "reference_config",
    "sample_hyperexp",
    "simulate",
    "simulate_csv",
    "solve_csv",
    "solve_qoe",
    "stationary_distribution",
    "with_load",
]
