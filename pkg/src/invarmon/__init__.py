"""Deterministic simulator of hypervisor-side invariance enforcement.

A simulated guest kernel registers its invariant objects with an isolated
monitor at boot; the monitor checksums rotating subsets of them on every
control-register-write trap, detecting and repairing illegal modifications.
"""

__version__ = "0.1.0"

from .guest import GuestSpec, ObjectGroup, ObjectKind, boot
from .harness import MonitorSpec, ScenarioConfig, reference_scenario, run
from .monitor import (
    MonitorState,
    OrderingMode,
    compute_digest,
    memory_overhead,
    worst_case_latency_switches,
)

__all__ = [
    "GuestSpec",
    "ObjectGroup",
    "ObjectKind",
    "boot",
    "MonitorSpec",
    "ScenarioConfig",
    "reference_scenario",
    "run",
    "MonitorState",
    "OrderingMode",
    "compute_digest",
    "memory_overhead",
    "worst_case_latency_switches",
    "__version__",
]
