"""VTOL flight-phase state machine."""

import numpy as np

MULTIROTOR = "multirotor"
TRANSITION_FW = "transition_fw"
FIXED_WING = "fixed_wing"
TRANSITION_MC = "transition_mc"
PHASES = (MULTIROTOR, TRANSITION_FW, FIXED_WING, TRANSITION_MC)

TILT_TOL = np.deg2rad(2.0)


def phase_machine(phase, airspeed, tilts, command=None, v_trans=14.0, v_back=3.0):
    """Next phase given the current one, airspeed, rotor tilts and the most
    recent transition command (``"fixed_wing"``, ``"multirotor"`` or None)."""
    if phase not in PHASES:
        raise ValueError(f"unknown phase {phase!r}")
    tilts = np.asarray(tilts, dtype=float)
    if phase == MULTIROTOR:
        return TRANSITION_FW if command == FIXED_WING else MULTIROTOR
    if phase == TRANSITION_FW:
        if command == MULTIROTOR:
            return TRANSITION_MC
        done = airspeed >= v_trans and np.all(np.abs(tilts - np.pi / 2) <= TILT_TOL)
        return FIXED_WING if done else TRANSITION_FW
    if phase == FIXED_WING:
        return TRANSITION_MC if command == MULTIROTOR else FIXED_WING
    if command == FIXED_WING:
        return TRANSITION_FW
    done = airspeed <= v_back and np.all(np.abs(tilts) <= TILT_TOL)
    return MULTIROTOR if done else TRANSITION_MC
