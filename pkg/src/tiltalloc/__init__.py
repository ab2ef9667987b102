"""Fault-tolerant control allocation and flight simulation for a quad tiltrotor VTOL."""

from .allocator import (AllocationRequest, AllocationResult, EffectivenessMatrix, Failure,
                        SaturationError, allocate, effectiveness, jacobian)
from .model import AeroState, RigidBodyState, Wrench, total_wrench, wrench_terms
from .params import ACTUATOR_NAMES, ActuatorBounds, RotorGeometry, VehicleParams
from .trim import NoTrimError, TrimPoint, cruise_trim, find_trim, hover_trim

__version__ = "0.1.0"
