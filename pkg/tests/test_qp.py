import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from tiltalloc.qp import InfeasibleError, active_set_qp, least_violation_point


def box(n, lo, hi):
    return np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([hi, -lo])


def test_unconstrained_minimum():
    H = np.diag([2.0, 4.0])
    g = np.array([-2.0, -4.0])
    C, d = box(2, np.full(2, -5.0), np.full(2, 5.0))
    res = active_set_qp(H, g, C, d)
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-12)
    assert res.active == ()


def test_active_bound_and_multiplier():
    H = np.eye(2)
    g = np.array([-2.0, 0.0])
    C, d = box(2, np.full(2, -1.0), np.full(2, 1.0))
    res = active_set_qp(H, g, C, d)
    np.testing.assert_allclose(res.x, [1.0, 0.0], atol=1e-12)
    assert res.active == (0,)
    np.testing.assert_allclose(res.multipliers, [1.0], atol=1e-12)


def test_infeasible():
    C = np.array([[1.0], [-1.0]])
    d = np.array([0.0, -1.0])  # x <= 0 and x >= 1
    with pytest.raises(InfeasibleError) as info:
        active_set_qp(np.eye(1), np.zeros(1), C, d)
    assert info.value.violation == pytest.approx(1.0)


def test_least_violation_point_feasible():
    C, d = box(3, -np.ones(3), np.ones(3))
    x, v = least_violation_point(C, d)
    assert v == 0.0 and np.all(C @ x <= d + 1e-12)


def test_ill_conditioned_hessian():
    # eigenvalues spanning ten decades, optimum far from the origin
    H = np.diag([2.5e-9, 2.0, 20.0])
    g = np.array([-2.5e-9 * 3e5, 0.0, 0.0])
    C, d = box(3, np.full(3, -1e6), np.full(3, 1e6))
    res = active_set_qp(H, g, C, d)
    np.testing.assert_allclose(res.x, [3e5, 0.0, 0.0], rtol=1e-6, atol=1e-9)


def test_empty_problem():
    res = active_set_qp(np.zeros((0, 0)), np.zeros(0), np.zeros((0, 0)), np.zeros(0))
    assert res.x.size == 0


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    M = rng.normal(size=(n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    g = rng.normal(size=n) * 3
    lo, hi = -rng.uniform(0.1, 1, n), rng.uniform(0.1, 1, n)
    C, d = box(n, lo, hi)
    res = active_set_qp(H, g, C, d)
    ref = minimize(lambda x: 0.5 * x @ H @ x + g @ x, np.zeros(n), jac=lambda x: H @ x + g,
                   bounds=list(zip(lo, hi)), method="L-BFGS-B", options={"ftol": 1e-15, "gtol": 1e-12})
    assert np.all(C @ res.x <= d + 1e-9)
    assert res.objective <= ref.fun + 1e-8
