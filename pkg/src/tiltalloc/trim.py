"""Steady hover and level-cruise trim points."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .model import AeroState, RigidBodyState, aero_angles, quat_from_euler, wrench_vector
from .params import CHI, OMEGA, ActuatorBounds, RotorGeometry, VehicleParams

TRIM_TOL = 1e-6
MAX_CRUISE_ALPHA = 0.6  # rad


class NoTrimError(Exception):
    def __init__(self, message, best_residual):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


@dataclass(frozen=True)
class TrimPoint:
    phase: str
    state: RigidBodyState
    aero: AeroState
    u0: np.ndarray
    residual: np.ndarray

    @property
    def alpha(self):
        return self.aero.alpha

    @property
    def residual_norm(self):
        return float(np.max(np.abs(self.residual)))


def level_state(airspeed=0.0, alpha=0.0, heading=0.0, position=(0.0, 0.0, 0.0)):
    """Wings-level flight with the velocity horizontal and pitch equal to alpha."""
    q = quat_from_euler(0.0, alpha, heading)
    v = airspeed * np.array([np.cos(heading), np.sin(heading), 0.0])
    return RigidBodyState(position=position, velocity=v, attitude=q)


def hover_trim(params=None, geom=None):
    params = params or VehicleParams()
    geom = geom or RotorGeometry()
    u = np.zeros(12)
    u[OMEGA] = np.sqrt(params.weight / (4.0 * params.thrust_coeff))
    state = level_state()
    aero = aero_angles(np.zeros(3), params)
    res = wrench_vector(u, state.attitude, aero, geom, params)
    u.setflags(write=False)
    return TrimPoint("hover", state, aero, u, res)


def _cruise_residual(x, airspeed, params, geom):
    u, alpha = _unpack(x)
    state = level_state(airspeed, alpha)
    aero = aero_angles(state.air_velocity_body(), params)
    return wrench_vector(u, state.attitude, aero, geom, params)


_SCALE = np.array([100.0] * 4 + [0.1] * 4 + [0.1])  # omega, surfaces, alpha


def _unpack(x):
    z = x * _SCALE
    u = np.zeros(12)
    u[OMEGA] = z[:4]
    u[CHI] = np.pi / 2
    u[8:12] = z[4:8]
    return u, z[8]


def cruise_trim(airspeed, params=None, geom=None, bounds=None, starts=(0.1, 0.3, 0.5)):
    """Level cruise with all rotors at full forward tilt.

    Free variables are the rotor speeds, the four surfaces and the angle of
    attack; the solution nearest (in scaled coordinates) to equal rotor speeds
    and neutral surfaces is refined by a minimum-norm Gauss-Newton polish.
    """
    params = params or VehicleParams()
    geom = geom or RotorGeometry()
    bounds = bounds or ActuatorBounds()
    if airspeed <= 0:
        raise NoTrimError(f"no cruise trim at airspeed {airspeed} m/s: zero dynamic pressure",
                          params.weight)

    best = None
    for alpha0 in starts:
        x0 = np.array([3.0] * 4 + [0.0] * 4 + [alpha0 / 0.1])
        sol = least_squares(_cruise_residual, x0, args=(airspeed, params, geom),
                            xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
        x = _polish(sol.x, airspeed, params, geom)
        r = _cruise_residual(x, airspeed, params, geom)
        u, alpha = _unpack(x)
        ok = (np.max(np.abs(r)) <= TRIM_TOL and bounds.contains(u)
              and abs(alpha) <= MAX_CRUISE_ALPHA)
        cand = (not ok, float(np.max(np.abs(r))), x, alpha)
        if best is None or cand[:2] < best[:2]:
            best = cand
    failed, resid, x, alpha = best
    if failed:
        why = f"best alpha {alpha:.3f} rad" if resid <= TRIM_TOL else "residual too large"
        raise NoTrimError(f"no admissible cruise trim at {airspeed} m/s ({why})", resid)
    u, alpha = _unpack(x)
    state = level_state(airspeed, alpha)
    aero = aero_angles(state.air_velocity_body(), params)
    u.setflags(write=False)
    return TrimPoint("cruise", state, aero, u, wrench_vector(u, state.attitude, aero, geom, params))


def _polish(x, airspeed, params, geom, iters=20, h=1e-7):
    for _ in range(iters):
        r = _cruise_residual(x, airspeed, params, geom)
        if np.max(np.abs(r)) < 1e-12:
            break
        J = np.empty((6, x.size))
        for j in range(x.size):
            e = np.zeros(x.size)
            e[j] = h
            J[:, j] = (_cruise_residual(x + e, airspeed, params, geom)
                       - _cruise_residual(x - e, airspeed, params, geom)) / (2 * h)
        x = x - np.linalg.pinv(J, rcond=1e-10) @ r
    return x


def find_trim(phase, airspeed=None, params=None, geom=None, bounds=None):
    if phase == "hover":
        return hover_trim(params, geom)
    if phase == "cruise":
        if airspeed is None:
            raise ValueError("cruise trim needs an airspeed")
        return cruise_trim(airspeed, params, geom, bounds)
    raise ValueError(f"unknown trim phase {phase!r}; expected 'hover' or 'cruise'")
