"""Closed-loop 6-DOF simulation of the tiltrotor with failure injection."""

from .controller import Controller, ControllerGains, Setpoint
from .dynamics import SimulationDiverged, actuator_lag, lag_time_constants, step
from .phases import FIXED_WING, MULTIROTOR, PHASES, TRANSITION_FW, TRANSITION_MC, phase_machine
from .scenario import (TRACE_COLUMNS, FailureSpec, RunResult, Scenario, ScenarioError, Summary,
                       Trace, run_scenario)
