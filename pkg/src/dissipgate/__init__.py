"""Simulation of dissipative OR, NOR and XOR gates on emitter-cavity systems."""

from .gates import (
    HARDWARE_DEFAULTS,
    GateSchedule,
    GateSystem,
    SystemParams,
    build,
    build_nor,
    build_or_hybrid,
    build_or_oscillator,
    build_or_spontaneous,
    build_xor,
    with_ground_noise,
)
from .hilbert import Space
from .lindblad import DimensionError, IntegrationError, LindbladModel, Schedule, evolve, propagate

__version__ = "0.1.0"

__all__ = [
    "HARDWARE_DEFAULTS",
    "DimensionError",
    "GateSchedule",
    "GateSystem",
    "IntegrationError",
    "LindbladModel",
    "Schedule",
    "Space",
    "SystemParams",
    "build",
    "build_nor",
    "build_or_hybrid",
    "build_or_oscillator",
    "build_or_spontaneous",
    "build_xor",
    "evolve",
    "propagate",
    "with_ground_noise",
]
