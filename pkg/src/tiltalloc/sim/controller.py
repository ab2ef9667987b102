"""Cascaded position/attitude/rate controllers producing a desired net wrench.

The output is the net body wrench (gravity included) the vehicle should
experience; at equilibrium with the setpoint it is zero, so it doubles as the
deviation from trim handed to the allocator.
"""

from dataclasses import dataclass, field

import numpy as np

from ..model import quat_from_euler, quat_multiply
from .phases import FIXED_WING, TRANSITION_FW

# Rows of [M; F] handed to the allocator. Horizontal force in hover comes from
# tilting the body, so only the moments and F_z are tracked there (the tilts
# stay free for moment generation). In cruise the moments and thrust F_x are
# tracked; the F_z row is filled in by the caller to keep the rotors'
# contribution to lift at its trim value, leaving lift to the wing.
TRACK_HOVER = np.array([True, True, True, False, False, True])
TRACK_FIXED_WING = np.array([True, True, True, True, False, True])


@dataclass(frozen=True)
class ControllerGains:
    pos_p: float = 0.5
    vel_p: float = 1.0
    pos_i: float = 0.1
    max_vel_xy: float = 1.5
    max_vel_z: float = 2.0
    max_accel_xy: float = 1.5
    max_accel_z: float = 4.0
    att_p: tuple = (4.0, 4.0, 2.0)
    rate_p: tuple = (8.0, 8.0, 4.0)
    rate_i: tuple = (1.0, 1.0, 0.5)
    max_moment: tuple = (8.0, 8.0, 4.0)
    max_tilt: float = 0.6
    fw_speed_p: float = 0.5
    fw_alt_p: float = 0.05
    fw_climb_p: float = 0.08
    fw_pitch_span: float = 0.3
    fw_track_p: float = 0.025
    fw_course_p: float = 2.0
    fw_sideslip_p: float = 1.0
    fw_max_bank: float = 0.45
    fw_max_course_offset: float = 0.5


@dataclass
class Setpoint:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = 0.0
    airspeed: float = 0.0
    pitch_trim: float = 0.0
    attitude: np.ndarray = None  # optional quaternion override


@dataclass
class ControlOutput:
    wrench: np.ndarray
    tracked: np.ndarray
    attitude_sp: np.ndarray


def attitude_error(q, q_sp):
    """Rotation vector (body axes) taking the current attitude to the setpoint."""
    conj = np.array([q[0], -q[1], -q[2], -q[3]])
    e = quat_multiply(conj, q_sp)
    if e[0] < 0:
        e = -e
    v = e[1:]
    s = np.linalg.norm(v)
    if s < 1e-12:
        return 2.0 * v
    return 2.0 * np.arctan2(s, e[0]) * v / s


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


class Controller:
    """Stateful (integrators) cascaded controller; one instance per run."""

    def __init__(self, params, gains=None, dt=0.004):
        self.params = params
        self.gains = gains or ControllerGains()
        self.dt = dt
        self.inertia = params.inertia_matrix
        self.reset()

    def reset(self):
        self.pos_int = np.zeros(3)
        self.rate_int = np.zeros(3)

    def __call__(self, state, setpoint, phase, airspeed=0.0, sideslip=0.0):
        if phase == FIXED_WING:
            return self._fixed_wing(state, setpoint, airspeed, sideslip)
        return self._hover(state, setpoint, phase)

    def _moment(self, state, q_sp):
        g = self.gains
        err = attitude_error(state.attitude, q_sp)
        rate_sp = np.asarray(g.att_p) * err
        rate_err = rate_sp - state.rates
        self.rate_int = np.clip(self.rate_int + rate_err * self.dt, -0.5, 0.5)
        ang_acc = np.asarray(g.rate_p) * rate_err + np.asarray(g.rate_i) * self.rate_int
        w = state.rates
        M = self.inertia @ ang_acc + np.cross(w, self.inertia @ w)
        lim = np.asarray(g.max_moment)
        return np.clip(M, -lim, lim)

    def _hover(self, state, sp, phase):
        g = self.gains
        m, grav = self.params.mass, self.params.gravity
        pos_err = sp.position - state.position
        self.pos_int = np.clip(self.pos_int + pos_err * self.dt, -2.0, 2.0)
        vel_sp = g.pos_p * pos_err + g.pos_i * self.pos_int
        vel_sp[:2] = _clip_norm(vel_sp[:2], g.max_vel_xy)
        vel_sp[2] = np.clip(vel_sp[2], -g.max_vel_z, g.max_vel_z)
        vel_sp = vel_sp + sp.velocity
        a = g.vel_p * (vel_sp - state.velocity)
        a[:2] = _clip_norm(a[:2], g.max_accel_xy)
        a[2] = np.clip(a[2], -g.max_accel_z, g.max_accel_z)

        if sp.attitude is not None:
            q_sp = sp.attitude
        elif phase == TRANSITION_FW:
            q_sp = quat_from_euler(0.0, sp.pitch_trim, sp.yaw)
        else:
            q_sp = _thrust_attitude(a, grav, sp.yaw, g.max_tilt)

        M = self._moment(state, q_sp)
        F = m * (state.dcm.T @ a)
        return ControlOutput(np.concatenate([M, F]), TRACK_HOVER.copy(), q_sp)

    def _fixed_wing(self, state, sp, airspeed, sideslip):
        g = self.gains
        altitude, altitude_sp = -state.position[2], -sp.position[2]
        climb = -state.velocity[2]
        pitch = sp.pitch_trim + np.clip(g.fw_alt_p * (altitude_sp - altitude) - g.fw_climb_p * climb,
                                        -g.fw_pitch_span, g.fw_pitch_span)

        # straight-line path through sp.position along sp.yaw
        along = np.array([np.cos(sp.yaw), np.sin(sp.yaw)])
        rel = state.position[:2] - sp.position[:2]
        cross = along[0] * rel[1] - along[1] * rel[0]
        course_sp = sp.yaw - np.clip(np.arctan(g.fw_track_p * cross),
                                     -g.fw_max_course_offset, g.fw_max_course_offset)
        course = np.arctan2(state.velocity[1], state.velocity[0])
        bank = np.clip(g.fw_course_p * _wrap(course_sp - course), -g.fw_max_bank, g.fw_max_bank)
        # course is steered by bank alone; the nose follows the airflow
        yaw = state.euler[2]
        q_sp = quat_from_euler(bank, pitch, yaw + g.fw_sideslip_p * sideslip)

        M = self._moment(state, q_sp)
        Fx = self.params.mass * g.fw_speed_p * (sp.airspeed - airspeed)
        wrench = np.array([*M, Fx, 0.0, 0.0])
        return ControlOutput(wrench, TRACK_FIXED_WING.copy(), q_sp)


def _clip_norm(v, limit):
    n = np.linalg.norm(v)
    return v if n <= limit else v * (limit / n)



def _thrust_attitude(accel, gravity, yaw, max_tilt):
    """Attitude whose body -z axis points along the specific force needed for
    ``accel`` (inertial NED), with the given yaw."""
    f = accel - np.array([0.0, 0.0, gravity])
    z_b = -f / np.linalg.norm(f)
    tilt = np.arccos(np.clip(z_b[2], -1.0, 1.0))
    if tilt > max_tilt:
        horiz = z_b[:2] / np.linalg.norm(z_b[:2])
        z_b = np.array([*(np.sin(max_tilt) * horiz), np.cos(max_tilt)])
    x_c = np.array([np.cos(yaw), np.sin(yaw), 0.0])
    y_b = np.cross(z_b, x_c)
    y_b /= np.linalg.norm(y_b)
    x_b = np.cross(y_b, z_b)
    roll = np.arctan2(y_b[2], z_b[2])
    pitch = -np.arcsin(np.clip(x_b[2], -1.0, 1.0))
    return quat_from_euler(roll, pitch, yaw)
