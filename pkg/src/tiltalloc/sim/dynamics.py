"""Rigid-body integration and actuator lag."""

import numpy as np

from ..model import RigidBodyState, aero_angles, quat_to_dcm, wrench_vector
from ..params import CHI, OMEGA

MAX_DT = 0.01


class SimulationDiverged(Exception):
    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


def _derivative(x, u, geom, params, wind, inv_inertia, inertia):
    q = x[6:10] / np.linalg.norm(x[6:10])
    R = quat_to_dcm(q)
    v_air = R.T @ (x[3:6] - wind)
    aero = aero_angles(v_air, params)
    w = wrench_vector(u, q, aero, geom, params)
    rates = x[10:13]
    dx = np.empty(13)
    dx[0:3] = x[3:6]
    dx[3:6] = R @ w[3:] / params.mass
    p, qq, r = rates
    qw, qx, qy, qz = q
    dx[6:10] = 0.5 * np.array([
        -qx * p - qy * qq - qz * r,
        qw * p + qy * r - qz * qq,
        qw * qq - qx * r + qz * p,
        qw * r + qx * qq - qy * p,
    ])
    dx[10:13] = inv_inertia @ (w[:3] - np.cross(rates, inertia @ rates))
    return dx


def step(state, u_effective, dt, geom, params, wind=None):
    """Advance the rigid body one RK4 step with the actuators held."""
    if not 0 < dt <= MAX_DT:
        raise ValueError(f"dt must lie in (0, {MAX_DT}] s, got {dt}")
    wind = np.zeros(3) if wind is None else np.asarray(wind, dtype=float)
    inertia = params.inertia_matrix
    inv_inertia = np.linalg.inv(inertia)
    u = np.asarray(u_effective, dtype=float)
    x = state.as_vector()
    args = (u, geom, params, wind, inv_inertia, inertia)
    k1 = _derivative(x, *args)
    k2 = _derivative(x + 0.5 * dt * k1, *args)
    k3 = _derivative(x + 0.5 * dt * k2, *args)
    k4 = _derivative(x + dt * k3, *args)
    x_new = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(x_new)):
        raise SimulationDiverged("non-finite state after integration step", state)
    x_new[6:10] /= np.linalg.norm(x_new[6:10])
    return RigidBodyState.from_vector(x_new)


def lag_time_constants(rotor=0.05, tilt=0.20, surface=0.05):
    tau = np.full(12, surface)
    tau[OMEGA] = rotor
    tau[CHI] = tilt
    return tau


def actuator_lag(u_effective, u_command, dt, tau):
    """Exact discretization of first-order lags toward the command."""
    gain = 1.0 - np.exp(-dt / np.asarray(tau, dtype=float))
    return u_effective + gain * (u_command - u_effective)
