"""Nonlinear wrench map of the tiltrotor: actuator inputs and flight state to
body-frame moments and forces.

Frames: inertial NED, body x-forward / y-right / z-down. Quaternions are
scalar-first and rotate body vectors into the inertial frame.
"""

from dataclasses import dataclass

import numpy as np

from .params import AIL1, AIL2, CHI, ELEV, OMEGA, RUDDER, RotorGeometry, VehicleParams

AIRSPEED_EPS = 0.1  # m/s; below this alpha and beta are pinned to zero
QUAT_TOL = 1e-9


class NormalizationError(ValueError):
    """Raised when a quaternion that must be unit length is not."""


def quat_to_dcm(q):
    """Rotation matrix R^I_B (body -> inertial) of a scalar-first quaternion."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_multiply(p, q):
    pw, px, py, pz = p
    qw, qx, qy, qz = q
    return np.array([
        pw * qw - px * qx - py * qy - pz * qz,
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
    ])


def quat_from_euler(roll, pitch, yaw):
    """ZYX (yaw-pitch-roll) Euler angles to a scalar-first quaternion."""
    cr, sr = np.cos(roll / 2), np.sin(roll / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    return np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])


def quat_to_euler(q):
    w, x, y, z = q
    roll = np.arctan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    pitch = np.arcsin(np.clip(2 * (w * y - z * x), -1.0, 1.0))
    yaw = np.arctan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return np.array([roll, pitch, yaw])


def check_unit(q):
    n = float(np.linalg.norm(q))
    if abs(n - 1.0) > QUAT_TOL:
        raise NormalizationError(f"quaternion norm {n!r} differs from 1; normalize first")


@dataclass(frozen=True)
class RigidBodyState:
    position: np.ndarray = None
    velocity: np.ndarray = None
    attitude: np.ndarray = None
    rates: np.ndarray = None

    def __post_init__(self):
        defaults = {"position": np.zeros(3), "velocity": np.zeros(3),
                    "attitude": np.array([1.0, 0, 0, 0]), "rates": np.zeros(3)}
        for name, default in defaults.items():
            value = getattr(self, name)
            arr = default if value is None else np.array(value, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dcm(self):
        return quat_to_dcm(self.attitude)

    @property
    def euler(self):
        return quat_to_euler(self.attitude)

    def air_velocity_body(self, wind=None):
        v = self.velocity if wind is None else self.velocity - np.asarray(wind)
        return self.dcm.T @ v

    def as_vector(self):
        return np.concatenate([self.position, self.velocity, self.attitude, self.rates])

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x[0:3], x[3:6], x[6:10], x[10:13])


@dataclass(frozen=True)
class AeroState:
    airspeed: float
    alpha: float
    beta: float
    dynamic_pressure: float


@dataclass(frozen=True)
class Wrench:
    moment: np.ndarray
    force: np.ndarray

    def as_array(self):
        return np.concatenate([self.moment, self.force])

    @classmethod
    def from_array(cls, w):
        w = np.asarray(w, dtype=float)
        return cls(w[:3].copy(), w[3:].copy())

    def __add__(self, other):
        return Wrench(self.moment + other.moment, self.force + other.force)


def rotor_thrust_torque(omega, d, params):
    """Thrust magnitude and signed reaction torque of one rotor."""
    w2 = omega * omega
    return params.thrust_coeff * w2, (-1.0) ** d * params.torque_coeff * w2


def _rotor_axes(chi):
    chi = np.asarray(chi, dtype=float)
    return np.stack([np.sin(chi), np.zeros_like(chi), -np.cos(chi)], axis=-1)


def gravity_force(q, params):
    check_unit(q)
    return quat_to_dcm(q).T @ np.array([0.0, 0.0, params.mass * params.gravity])


def thrust_force(u, params):
    u = np.asarray(u, dtype=float)
    w2 = u[OMEGA] ** 2
    return params.thrust_coeff * (w2 @ _rotor_axes(u[CHI]))


def aero_angles(v_body, params=None):
    """Airspeed, angle of attack, sideslip and dynamic pressure from the
    air-relative velocity expressed in body axes."""
    rho = VehicleParams().air_density if params is None else params.air_density
    v_body = np.asarray(v_body, dtype=float)
    va = float(np.linalg.norm(v_body))
    if va < AIRSPEED_EPS:
        alpha = beta = 0.0
    else:
        alpha = float(np.arctan2(v_body[2], v_body[0]))
        beta = float(np.arcsin(np.clip(v_body[1] / va, -1.0, 1.0)))
    return AeroState(va, alpha, beta, 0.5 * rho * va ** 2)


def wind_to_body(alpha, beta):
    """R^B_W: columns are the wind axes expressed in body coordinates."""
    ca, sa, cb, sb = np.cos(alpha), np.sin(alpha), np.cos(beta), np.sin(beta)
    return np.array([
        [ca * cb, -ca * sb, -sa],
        [sb, cb, 0.0],
        [sa * cb, -sa * sb, ca],
    ])


def aero_force(aero, u, params):
    # u unused: the lift/drag polynomials do not depend on surface deflections
    if aero.dynamic_pressure == 0.0:
        return np.zeros(3)
    qs = aero.dynamic_pressure * params.wing_area
    drag = qs * (params.C_D0 + params.C_Dalpha * aero.alpha ** 2)
    lift = qs * (params.C_Z0 + params.C_Zalpha * aero.alpha)
    return wind_to_body(aero.alpha, aero.beta) @ np.array([-drag, 0.0, -lift])


def thrust_moment(u, geom, params):
    u = np.asarray(u, dtype=float)
    thrusts = params.thrust_coeff * (u[OMEGA] ** 2)[:, None] * _rotor_axes(u[CHI])
    return np.cross(geom.positions, thrusts).sum(axis=0)


def resisting_moment(u, geom, params):
    u = np.asarray(u, dtype=float)
    w2 = geom.signs * u[OMEGA] ** 2
    return params.torque_coeff * (w2 @ _rotor_axes(u[CHI]))


def effective_aileron(u):
    return 0.5 * (u[AIL1] - u[AIL2])


def aero_moment(aero, u, params):
    qs = aero.dynamic_pressure * params.wing_area
    return qs * np.array([
        params.wingspan * params.C_La * effective_aileron(u),
        params.mean_chord * params.C_Me * u[ELEV],
        params.wingspan * params.C_Nr * u[RUDDER],
    ])


def wrench_terms(u, attitude, aero, geom, params):
    """The six force/moment contributions, keyed by name."""
    return {
        "thrust_force": thrust_force(u, params),
        "aero_force": aero_force(aero, u, params),
        "gravity_force": gravity_force(attitude, params),
        "thrust_moment": thrust_moment(u, geom, params),
        "resisting_moment": resisting_moment(u, geom, params),
        "aero_moment": aero_moment(aero, u, params),
    }


def wrench_vector(u, attitude, aero, geom, params):
    """Total [M; F] as a flat 6-array; fused hot-path twin of ``wrench_terms``."""
    u = np.asarray(u, dtype=float)
    w2 = u[OMEGA] * u[OMEGA]
    s, c = np.sin(u[CHI]), np.cos(u[CHI])
    fx = params.thrust_coeff * w2 * s
    fz = -params.thrust_coeff * w2 * c
    q = params.torque_coeff * geom.signs * w2
    r = geom.positions
    moment = np.array([
        r[:, 1] @ fz + q @ s,
        r[:, 2] @ fx - r[:, 0] @ fz,
        -(r[:, 1] @ fx) - q @ c,
    ]) + aero_moment(aero, u, params)
    check_unit(attitude)
    qw, qx, qy, qz = attitude
    mg = params.mass * params.gravity
    gravity = mg * np.array([2 * (qx * qz - qw * qy), 2 * (qy * qz + qw * qx),
                             qw * qw - qx * qx - qy * qy + qz * qz])
    force = np.array([fx.sum(), 0.0, fz.sum()]) + aero_force(aero, u, params) + gravity
    return np.concatenate([moment, force])


def total_wrench(u, state, geom=None, params=None, wind=None):
    geom = RotorGeometry() if geom is None else geom
    params = VehicleParams() if params is None else params
    aero = aero_angles(state.air_velocity_body(wind), params)
    t = wrench_terms(u, state.attitude, aero, geom, params)
    return Wrench(moment=t["thrust_moment"] + t["resisting_moment"] + t["aero_moment"],
                  force=t["thrust_force"] + t["aero_force"] + t["gravity_force"])
