import dataclasses

import numpy as np
import pytest

from tiltalloc.config import ConfigError, load_config, parse_config, save_config, serialize_config
from tiltalloc.params import ActuatorBounds, RotorGeometry, VehicleParams
from tiltalloc.sim.controller import ControllerGains
from tiltalloc.sim.scenario import FailureSpec, Scenario


def roundtrip(scn):
    text = serialize_config(scn)
    again = serialize_config(parse_config(text))
    assert again == text
    return text


def test_defaults():
    scn = parse_config("")
    assert scn == Scenario()
    assert scn.params == VehicleParams()
    assert serialize_config(scn) == 'scenario.name = "scenario"\n'


def test_roundtrip_rich_scenario():
    scn = Scenario(
        name="rich", start_phase="fixed_wing", airspeed=22.0, duration=12.5, seed=4,
        failures=(FailureSpec(10, 0.1, 2.0, True), FailureSpec(2, 300.0, 3.0, False)),
        transitions=((5.0, "multirotor"),), wind=(1.0, -0.5, 0.0), relinearize_every=5,
        weights=tuple(np.linspace(1, 2, 12)), slew_rates=tuple([3.0] * 12),
        params=dataclasses.replace(VehicleParams(), mass=5.0, inertia=(0.5, 0.5, 0.8)),
        geometry=RotorGeometry(spin_directions=(1, 0, 0, 1)),
        bounds=ActuatorBounds().with_omega_max(1100.0),
        gains=dataclasses.replace(ControllerGains(), att_p=(5.0, 5.0, 2.5)),
    )
    text = roundtrip(scn)
    back = parse_config(text)
    assert back == scn
    assert "vehicle.mass = 5.0" in text
    assert "geometry.arm_positions" not in text  # defaults are omitted


def test_save_and_load(tmp_path):
    scn = Scenario(name="disk", failures=(FailureSpec(4, 1.0, 1.0),))
    path = tmp_path / "disk.cfg"
    save_config(scn, path)
    assert load_config(path) == scn


def test_comments_and_names():
    text = """
    # a comment
    scenario.name = "x"
    scenario.failures = [{"actuator": "aileron1", "value": 0.2, "time": 1.0}]
    """
    scn = parse_config(text)
    assert scn.failures == (FailureSpec(8, 0.2, 1.0, True),)


@pytest.mark.parametrize("text, line, field", [
    ("scenario.name = \"a\"\nscenario.colour = 1", 2, "scenario.colour"),
    ("wing.area = 1", 1, "wing.area"),
    ("scenario.duration = 1\nscenario.duration = 2", 2, "scenario.duration"),
    ("scenario.duration = ten", 1, "scenario.duration"),
    ("scenario.seed = 1.5", 1, "scenario.seed"),
    ("just words", 1, None),
    ("noseparator = 3", 1, "noseparator"),
    ("vehicle.mass = -1.0", 1, "vehicle"),
    ("scenario.failures = [{\"actuator\": \"flap\", \"value\": 0}]", 1, "scenario.failures"),
    ("scenario.failures = [{\"actuator\": 0, \"value\": 0, \"time\": 99}]", 1, "scenario"),
    ("allocator.weights = [1, 2]", 1, "allocator.weights"),
    ("vehicle.inertia = [1, 2]", 1, "vehicle.inertia"),
])
def test_errors_carry_line_and_field(text, line, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text, source="t.cfg")
    err = info.value
    assert err.line == line and err.field == field
    assert str(err).startswith(f"t.cfg:{line}: ")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.cfg")


def test_unknown_key_lists_valid():
    with pytest.raises(ConfigError, match="valid: .*mass"):
        parse_config("vehicle.weight = 3")
