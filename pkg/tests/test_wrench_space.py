import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from tiltalloc.allocator import Failure
from tiltalloc.model import aero_angles, wrench_terms
from tiltalloc.params import ActuatorBounds, RotorGeometry, VehicleParams
from tiltalloc.trim import cruise_trim, level_state
from tiltalloc.wrench_space import (
    CLOUD_HEADER,
    FIXED_WING,
    MULTIROTOR,
    WrenchSetSample,
    cruise_check,
    export_wrench_cloud,
    load_wrench_cloud,
    sample_wrench_set,
    static_hover_check,
)

P = VehicleParams()
G = RotorGeometry()
B = ActuatorBounds()
W_MAX = B.hi[0]


def direct_wrench(u, airspeed=0.0, alpha=0.0):
    """h(u) from the individual model terms, gravity left out."""
    state = level_state(airspeed, alpha)
    terms = wrench_terms(u, state.attitude, aero_angles(state.air_velocity_body(), P), G, P)
    force = terms["thrust_force"] + terms["aero_force"]
    moment = terms["thrust_moment"] + terms["resisting_moment"] + terms["aero_moment"]
    return np.concatenate([moment, force]), state


def assert_interior(u, frac=0.01):
    pad = frac * B.span
    assert np.all(u >= B.lo + pad - 1e-12) and np.all(u <= B.hi - pad + 1e-12)


class TestSampling:
    def test_single_point_is_direct_image(self):
        s = sample_wrench_set(MULTIROTOR, n_samples=1, seed=11)
        assert s.sample_count == 1
        ref, _ = direct_wrench(s.inputs[0])
        np.testing.assert_allclose(s.points[0], ref, rtol=1e-12, atol=1e-12)
        np.testing.assert_array_equal(s.inputs[0, 4:], 0.0)

    def test_side_force_structurally_zero(self):
        s = sample_wrench_set(MULTIROTOR, n_samples=10000, seed=1)
        assert s.sample_count == 10000
        assert np.all(s.points[:, 4] == 0.0)

    def test_motor_failure_cuts_lift(self):
        nominal = sample_wrench_set(MULTIROTOR, n_samples=4000, seed=2)
        failed = sample_wrench_set(MULTIROTOR, Failure(0, 0.0), n_samples=4000, seed=2)
        up_nom = np.max(-nominal.points[:, 5])
        up_fail = np.max(-failed.points[:, 5])
        assert up_nom <= 4 * P.thrust_coeff * W_MAX ** 2
        assert up_fail <= 3 * P.thrust_coeff * W_MAX ** 2
        assert up_fail < up_nom
        assert np.all(failed.inputs[:, 0] == 0.0)
        assert failed.failed_actuator == 0

    def test_fixed_wing_uses_cruise_state(self):
        trim = cruise_trim(20.0)
        s = sample_wrench_set(FIXED_WING, n_samples=3, seed=4, airspeed=20.0)
        for u, w in zip(s.inputs, s.points):
            ref, _ = direct_wrench(u, 20.0, trim.alpha)
            np.testing.assert_allclose(w, ref, rtol=1e-12, atol=1e-10)

    def test_deterministic_and_worker_independent(self):
        a = sample_wrench_set(MULTIROTOR, n_samples=500, seed=9)
        b = sample_wrench_set(MULTIROTOR, n_samples=500, seed=9, workers=3)
        c = sample_wrench_set(MULTIROTOR, n_samples=500, seed=10)
        np.testing.assert_array_equal(a.points, b.points)
        assert not np.array_equal(a.points, c.points)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            sample_wrench_set(MULTIROTOR, Failure(12, 0.0), n_samples=2)
        with pytest.raises(ValueError):
            sample_wrench_set(MULTIROTOR, n_samples=0)
        with pytest.raises(ValueError):
            sample_wrench_set("glider", n_samples=2)

    def test_failure_set_inside_nominal_hull(self):
        # the multirotor map is linear in t = omega^2, so the images of the
        # 16 corners of the t-box span the whole nominal set
        corners = []
        for c in itertools.product([0.0, W_MAX], repeat=4):
            u = np.zeros(12)
            u[:4] = c
            corners.append(direct_wrench(u)[0])
        V = np.array(corners)
        failed = sample_wrench_set(MULTIROTOR, Failure(0, 0.0), n_samples=60, seed=5)
        A_eq = np.vstack([V.T, np.ones(len(V))])
        for p in failed.points:
            res = linprog(np.zeros(len(V)), A_eq=A_eq, b_eq=np.append(p, 1.0),
                          bounds=[(0, None)] * len(V), method="highs")
            assert res.status == 0


class TestCloudFile:
    def test_empty(self, tmp_path):
        path = tmp_path / "empty.csv"
        export_wrench_cloud(WrenchSetSample(np.zeros((0, 6)), MULTIROTOR), path)
        assert path.read_text() == ",".join(CLOUD_HEADER) + "\n"
        assert load_wrench_cloud(path).shape == (0, 6)

    def test_three_points(self, tmp_path):
        path = tmp_path / "three.csv"
        export_wrench_cloud(sample_wrench_set(MULTIROTOR, n_samples=3, seed=0), path)
        lines = path.read_text().splitlines()
        assert len(lines) == 4
        assert lines[0] == "Mx,My,Mz,Fx,Fy,Fz"

    def test_round_trip(self, tmp_path):
        s = sample_wrench_set(FIXED_WING, n_samples=200, seed=3)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        export_wrench_cloud(s, p1)
        back = load_wrench_cloud(p1)
        # nine significant digits bound the relative rounding at 5e-9
        np.testing.assert_allclose(back, s.points, rtol=5e-9, atol=1e-12)
        export_wrench_cloud(WrenchSetSample(back, FIXED_WING), p2)
        np.testing.assert_array_equal(load_wrench_cloud(p2), back)
        assert p1.read_text() == p2.read_text()

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            load_wrench_cloud(path)


class TestStaticHover:
    def test_nominal_feasible(self):
        r = static_hover_check()
        assert r.feasible and r.method == "linear"
        assert r.rank_Fm == 1  # all thrust axes vertical with tilts at zero
        w_int = 0.99 * W_MAX
        assert r.margin == pytest.approx(4 * P.thrust_coeff * w_int ** 2 - P.weight, rel=1e-6)
        assert_interior(r.witness_u)
        h, _ = direct_wrench(r.witness_u)
        assert np.linalg.norm(h[:3]) <= 1e-6
        assert np.linalg.norm(h[3:]) >= P.weight

    def test_motor_out_tilts_locked_infeasible(self):
        r = static_hover_check(Failure(0, 0.0))
        assert not r.feasible and r.witness_u is None
        assert "moment" in r.message

    def test_motor_out_tilts_free_feasible(self):
        r = static_hover_check(Failure(0, 0.0), allow_tilt=True)
        assert r.feasible and r.method == "nonlinear"
        u = r.witness_u
        assert u[0] == 0.0
        free = np.r_[1:8]
        pad = 0.01 * B.span
        assert np.all(u[free] >= B.lo[free] + pad[free] - 1e-12)
        assert np.all(u[free] <= B.hi[free] - pad[free] + 1e-12)
        h, _ = direct_wrench(u)
        assert np.linalg.norm(h[:3]) <= 1e-6
        assert np.linalg.norm(h[3:]) >= P.weight
        assert r.margin > 0

    def test_monotone_in_omega_max(self):
        flags = [static_hover_check(bounds=B.with_omega_max(w)).feasible
                 for w in (600.0, 700.0, 730.0, 800.0, 1200.0, 1500.0)]
        assert flags == sorted(flags)
        assert not flags[0] and flags[-1]

    def test_report_format(self):
        text = static_hover_check().to_kv()
        assert "feasible = true" in text
        assert "rank_Fm = 1" in text


class TestCruise:
    def test_nominal_feasible(self):
        r = cruise_check(airspeed=20.0)
        assert r.feasible
        h, state = direct_wrench(r.witness_u, 20.0, r.alpha)
        f_inertial = state.dcm @ h[3:]
        assert np.linalg.norm(h[:3]) <= 1e-6
        assert f_inertial[0] >= -1e-9
        assert -f_inertial[2] >= P.weight - 1e-9
        assert r.lift == pytest.approx(-f_inertial[2], rel=1e-9)

    def test_elevator_lock_tilt_differential(self):
        r = cruise_check(Failure(10, np.deg2rad(6.0)), airspeed=20.0)
        assert r.feasible
        u = r.witness_u
        assert u[10] == pytest.approx(np.deg2rad(6.0))
        # front pair tilts past vertical-forward, rear pair tilts back
        assert u[4] > np.pi / 2 and u[5] > np.pi / 2
        assert u[6] < np.pi / 2 and u[7] < np.pi / 2
        h, _ = direct_wrench(u, 20.0, r.alpha)
        assert np.linalg.norm(h[:3]) <= 1e-6

    def test_zero_airspeed(self):
        r = cruise_check(airspeed=0.0)
        assert not r.feasible and "dynamic pressure" in r.message
