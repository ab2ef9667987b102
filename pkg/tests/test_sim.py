import dataclasses

import numpy as np
import pytest

from tiltalloc.model import RigidBodyState, quat_from_euler
from tiltalloc.params import RotorGeometry, VehicleParams
from tiltalloc.sim.controller import Controller, ControllerGains, Setpoint, attitude_error
from tiltalloc.sim.dynamics import actuator_lag, lag_time_constants, step
from tiltalloc.sim.phases import (FIXED_WING, MULTIROTOR, TRANSITION_FW, TRANSITION_MC,
                                  phase_machine)
from tiltalloc.sim.scenario import (TRACE_COLUMNS, FailureSpec, Scenario, ScenarioError,
                                    run_scenario)
from tiltalloc.trim import find_trim

P = VehicleParams()
G = RotorGeometry()
DT = 0.004
HALF_PI = np.full(4, np.pi / 2)


def level(position=(0.0, 0.0, -10.0), velocity=(0.0, 0.0, 0.0), rates=(0.0, 0.0, 0.0), q=None):
    q = quat_from_euler(0.0, 0.0, 0.0) if q is None else q
    return RigidBodyState(position=np.array(position, float), velocity=np.array(velocity, float),
                          attitude=q, rates=np.array(rates, float))


class TestStep:
    def test_free_fall(self):
        airless = dataclasses.replace(P, air_density=1e-300)
        s = level()
        for k in range(1, 6):
            s = step(s, np.zeros(12), DT, G, airless)
            assert s.velocity[2] == pytest.approx(k * P.gravity * DT, rel=1e-12)
        np.testing.assert_allclose(s.velocity[:2], 0.0, atol=1e-12)

    def test_hover_trim_drift(self):
        trim = find_trim("hover")
        s = level()
        for _ in range(int(10.0 / DT)):
            s = step(s, trim.u0, DT, G, P)
        assert np.linalg.norm(s.position - [0.0, 0.0, -10.0]) <= 1e-3

    def test_energy_without_forces(self):
        params = dataclasses.replace(P, gravity=0.0)
        v = np.array([3.0, -1.0, 0.5])
        s = level(velocity=v, rates=(0.4, -0.3, 0.9))
        inertia = params.inertia_matrix

        def energy(st):
            return 0.5 * params.mass * st.velocity @ st.velocity + 0.5 * st.rates @ inertia @ st.rates

        e0 = energy(s)
        for _ in range(1000):
            # wind equal to the ground velocity removes the airflow
            s = step(s, np.zeros(12), DT, G, params, wind=v)
        assert abs(energy(s) - e0) <= 1e-9 * e0

    def test_dt_limit(self):
        with pytest.raises(ValueError):
            step(level(), np.zeros(12), 0.02, G, P)

    def test_actuator_lag(self):
        tau = lag_time_constants()
        u = actuator_lag(np.zeros(12), np.ones(12), 0.05, tau)
        assert u[0] == pytest.approx(1 - np.exp(-1.0))
        assert u[4] == pytest.approx(1 - np.exp(-0.25))


class TestPhaseMachine:
    def test_start(self):
        assert phase_machine(MULTIROTOR, 0.0, np.zeros(4)) == MULTIROTOR

    def test_threshold(self):
        assert phase_machine(TRANSITION_FW, 14.0 - 1e-9, HALF_PI) == TRANSITION_FW
        assert phase_machine(TRANSITION_FW, 14.0, HALF_PI) == FIXED_WING
        # airspeed alone is not enough, the tilts must be within 2 degrees
        assert phase_machine(TRANSITION_FW, 20.0, HALF_PI - np.deg2rad(3.0)) == TRANSITION_FW

    def test_commands(self):
        assert phase_machine(MULTIROTOR, 0.0, np.zeros(4), FIXED_WING) == TRANSITION_FW
        assert phase_machine(FIXED_WING, 20.0, HALF_PI, MULTIROTOR) == TRANSITION_MC
        assert phase_machine(TRANSITION_MC, 10.0, np.zeros(4)) == TRANSITION_MC
        assert phase_machine(TRANSITION_MC, 2.0, np.zeros(4)) == MULTIROTOR
        assert phase_machine(TRANSITION_MC, 10.0, np.zeros(4), FIXED_WING) == TRANSITION_FW

    def test_unknown(self):
        with pytest.raises(ValueError):
            phase_machine("gliding", 0.0, np.zeros(4))


class TestController:
    def test_at_setpoint(self):
        ctrl = Controller(P)
        s = level()
        out = ctrl(s, Setpoint(position=s.position.copy()), MULTIROTOR)
        np.testing.assert_allclose(out.wrench, 0.0, atol=1e-12)

    def test_altitude_error(self):
        ctrl = Controller(P)
        s = level()
        out = ctrl(s, Setpoint(position=s.position - [0.0, 0.0, 1.0]), MULTIROTOR)
        assert out.wrench[5] < 0
        np.testing.assert_allclose(out.wrench[:3], 0.0, atol=1e-12)
        g = ControllerGains()
        expected = -P.mass * g.vel_p * (g.pos_p + g.pos_i * DT) * 1.0
        assert out.wrench[5] == pytest.approx(expected, rel=1e-12)

    def test_roll_error(self):
        ctrl = Controller(P, dt=DT)
        s = level()
        err = np.deg2rad(10.0)
        sp = Setpoint(position=s.position.copy(), attitude=quat_from_euler(err, 0.0, 0.0))
        out = ctrl(s, sp, MULTIROTOR)
        g = ControllerGains()
        rate_sp = g.att_p[0] * err
        expected = P.inertia[0] * (g.rate_p[0] * rate_sp + g.rate_i[0] * rate_sp * DT)
        assert out.wrench[0] == pytest.approx(expected, rel=1e-9)
        np.testing.assert_allclose(out.wrench[1:3], 0.0, atol=1e-12)

    def test_attitude_error_small_angle(self):
        q = quat_from_euler(0.0, 0.0, 0.0)
        np.testing.assert_allclose(attitude_error(q, quat_from_euler(0.0, 0.1, 0.0)),
                                   [0.0, 0.1, 0.0], atol=1e-12)


def short(**kw):
    base = dict(name="short", duration=1.0)
    base.update(kw)
    return Scenario(**base)


class TestScenario:
    def test_validation(self):
        with pytest.raises(ScenarioError):
            Scenario(dt=0.0)
        with pytest.raises(ScenarioError):
            Scenario(failures=(FailureSpec(0, 2000.0),))
        with pytest.raises(ScenarioError):
            Scenario(failures=(FailureSpec(0, 0.0, 40.0),), duration=30.0)
        with pytest.raises(ScenarioError):
            Scenario(failures=(FailureSpec(0, 0.0), FailureSpec(0, 100.0)))

    def test_trace_layout(self, tmp_path):
        r = run_scenario(short(duration=0.1))
        assert len(r.trace) == 25
        path = r.trace.to_csv(tmp_path / "t.csv")
        lines = open(path).read().splitlines()
        assert lines[0] == ",".join(TRACE_COLUMNS)
        assert len(lines) == 26
        assert lines[1].split(",")[TRACE_COLUMNS.index("phase")] == MULTIROTOR

    @pytest.mark.parametrize("informed", [True, False])
    def test_failure_clamp(self, informed):
        f = FailureSpec(0, 0.0, 0.5, informed)
        r = run_scenario(short(failures=(f,)))
        t = r.trace.column("t")
        u = r.trace.column("u_eff_0")
        assert np.all(u[t >= 0.5] == 0.0)
        assert np.all(u[t < 0.5] > 0.0)

    def test_determinism(self):
        scn = short(perturbation=0.05, seed=7, failures=(FailureSpec(5, 0.5, 0.2),))
        a, b = run_scenario(scn), run_scenario(scn)
        np.testing.assert_array_equal(a.trace.data, b.trace.data)
        c = run_scenario(dataclasses.replace(scn, seed=8))
        assert not np.array_equal(a.trace.data, c.trace.data)

    def test_summary_outputs(self):
        r = run_scenario(short())
        text = r.summary.to_kv()
        assert "crashed = false" in text
        assert '"crashed": false' in r.summary.to_json()

    def test_crash_ends_run(self):
        # start upside-down enough to trip the attitude limit immediately
        r = run_scenario(short(perturbation=3.0, seed=1))
        assert r.summary.crashed
        assert len(r.trace) < 250
        assert r.events[-1][1] in ("crash", "diverged")


@pytest.mark.slow
def test_nominal_hover_hold():
    r = run_scenario(Scenario(name="hold", duration=30.0))
    assert not r.summary.crashed
    assert r.summary.altitude_variation <= 0.5
    # steady segment: the achieved wrench follows the demand
    tail = r.trace.column("t") >= 25.0
    for i in (0, 1, 2, 5):
        wd, wa = r.trace.column(f"Wd_{i}")[tail], r.trace.column(f"Wa_{i}")[tail]
        assert np.max(np.abs(wa - wd)) <= 0.05


@pytest.mark.slow
def test_full_mission_phase_sequence():
    scn = Scenario(name="mission", duration=50.0,
                   transitions=((2.0, FIXED_WING), (25.0, MULTIROTOR)))
    r = run_scenario(scn)
    assert not r.summary.crashed
    seq = [e[2] for e in r.events if e[1] == "phase"]
    assert seq == [MULTIROTOR, TRANSITION_FW, FIXED_WING, TRANSITION_MC, MULTIROTOR]
