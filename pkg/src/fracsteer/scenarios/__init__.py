"""Scenario configuration and the built-in heat example."""

from .config import (
    CONTROL_KINDS,
    KERNEL_KINDS,
    PROFILES,
    Diagnostic,
    KernelSpec,
    ScenarioConfig,
    build_problem,
    build_section5,
    kernel_function,
    kernel_matrix,
    list_shipped,
    load_scenario,
    save_scenario,
    validate_scenario,
)

__all__ = [
    "CONTROL_KINDS",
    "KERNEL_KINDS",
    "PROFILES",
    "Diagnostic",
    "KernelSpec",
    "ScenarioConfig",
    "build_problem",
    "build_section5",
    "kernel_function",
    "kernel_matrix",
    "list_shipped",
    "load_scenario",
    "save_scenario",
    "validate_scenario",
]
