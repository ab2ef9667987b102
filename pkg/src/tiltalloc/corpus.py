"""The shipped failure-case corpus: one scenario file per case and variant."""

from importlib import resources

from .config import parse_config

# Table of failure cases: (case name, flight phase, failure description)
CASES = (
    ("hover_tilt_lock", "multirotor", "Lock of one tilt in hover"),
    ("hover_motor_failure", "multirotor", "Single motor failure in hover"),
    ("cruise_motor_failure", "fixed_wing", "Single motor failure in cruise"),
    ("cruise_elevator_lock", "fixed_wing", "Lock of one elevator in cruise"),
    ("cruise_aileron_lock", "fixed_wing", "Lock of one aileron in cruise"),
)
VARIANTS = ("informed", "uninformed")
EXTRA = ("hover_tilt_lock_pos90_informed", "hover_tilt_lock_neg90_informed")


def suite_names():
    """The ten table scenarios, case-major, informed first."""
    return [f"{case}_{v}" for case, _, _ in CASES for v in VARIANTS]


def all_names():
    return suite_names() + list(EXTRA)


def case_path(name):
    return resources.files("tiltalloc").joinpath("cases").joinpath(f"{name}.cfg")


def load_case(name):
    """Parse the shipped scenario ``name``."""
    if name not in all_names():
        raise KeyError(f"unknown case {name!r}; valid: {', '.join(all_names())}")
    path = case_path(name)
    return parse_config(path.read_text(), source=f"cases/{name}.cfg")
