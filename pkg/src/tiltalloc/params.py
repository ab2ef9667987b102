"""Vehicle constants, rotor layout and actuator bounds."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

N_ACTUATORS = 12

# Flat actuator vector layout: [w1..w4, chi1..chi4, da1, da2, de, dr]
OMEGA = slice(0, 4)
CHI = slice(4, 8)
AIL1, AIL2, ELEV, RUDDER = 8, 9, 10, 11

ACTUATOR_NAMES = (
    "omega1", "omega2", "omega3", "omega4",
    "chi1", "chi2", "chi3", "chi4",
    "aileron1", "aileron2", "elevator", "rudder",
)


def actuator_index(name_or_index):
    """Resolve an actuator name (or an int) to its position in the 12-vector."""
    if isinstance(name_or_index, (int, np.integer)):
        k = int(name_or_index)
        if not 0 <= k < N_ACTUATORS:
            raise ValueError(f"actuator index {k} outside 0..{N_ACTUATORS - 1}")
        return k
    try:
        return ACTUATOR_NAMES.index(name_or_index)
    except ValueError:
        raise ValueError(
            f"unknown actuator {name_or_index!r}; valid: {', '.join(ACTUATOR_NAMES)}"
        ) from None


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 4.6                 # kg
    wingspan: float = 2.0             # m
    air_density: float = 1.2250       # kg/m^3
    mean_chord: float = 0.22          # m
    wing_area: float = 0.44           # m^2
    thrust_coeff: float = 2.2164e-5   # N s^2/rad^2
    torque_coeff: float = 1.1082e-6   # N m s^2/rad^2
    C_La: float = 0.1173
    C_Me: float = 0.5560
    C_Nr: float = 0.0881
    C_Z0: float = 0.35
    C_Zalpha: float = 0.11
    C_D0: float = 0.01
    C_Dalpha: float = 0.2
    gravity: float = 9.81             # m/s^2
    inertia: tuple = (0.45, 0.45, 0.70)  # kg m^2, principal axes

    def __post_init__(self):
        for name in ("mass", "air_density", "wing_area", "thrust_coeff", "torque_coeff"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if len(self.inertia) != 3 or min(self.inertia) <= 0:
            raise ValueError("inertia must be three positive principal moments")

    @property
    def weight(self):
        return self.mass * self.gravity

    @property
    def inertia_matrix(self):
        return np.diag(np.asarray(self.inertia, dtype=float))


def _default_arms():
    return ((0.25, 0.40, 0.0), (0.25, -0.40, 0.0), (-0.25, 0.40, 0.0), (-0.25, -0.40, 0.0))


@dataclass(frozen=True)
class RotorGeometry:
    """Arm base positions (body frame, m) and spin directions d_i in {0, 1}.

    Rotor 1 is front-right, 2 front-left, 3 rear-right, 4 rear-left. Diagonal
    pairs (1, 4) and (2, 3) share a spin direction so hover yaw cancels.
    """

    arm_positions: tuple = field(default_factory=_default_arms)
    spin_directions: tuple = (0, 1, 1, 0)

    def __post_init__(self):
        r = np.asarray(self.arm_positions, dtype=float)
        if r.shape != (4, 3):
            raise ValueError("arm_positions must be four 3-vectors")
        for i in range(4):
            for j in range(i + 1, 4):
                if np.allclose(r[i], r[j]):
                    raise ValueError(f"rotors {i + 1} and {j + 1} share a position")
        if sorted(self.spin_directions) != [0, 0, 1, 1]:
            raise ValueError("spin_directions must hold two 0s and two 1s")

    @cached_property
    def positions(self):
        r = np.array(self.arm_positions, dtype=float)
        r.flags.writeable = False
        return r

    @cached_property
    def signs(self):
        """(-1)^d_i for each rotor."""
        s = np.where(np.asarray(self.spin_directions) == 0, 1.0, -1.0)
        s.flags.writeable = False
        return s


def _default_lower():
    d30 = np.deg2rad(30.0)
    return tuple([0.0] * 4 + [np.deg2rad(-90.0)] * 4 + [-d30] * 4)


def _default_upper():
    d30 = np.deg2rad(30.0)
    return tuple([1200.0] * 4 + [np.deg2rad(135.0)] * 4 + [d30] * 4)


@dataclass(frozen=True)
class ActuatorBounds:
    lower: tuple = field(default_factory=_default_lower)
    upper: tuple = field(default_factory=_default_upper)
    rated_thrust: float = 27.36  # N, soft per-rotor limit (reported, not enforced)

    def __post_init__(self):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != (N_ACTUATORS,) or hi.shape != (N_ACTUATORS,):
            raise ValueError("bounds must have 12 entries")
        if np.any(lo >= hi):
            raise ValueError("every lower bound must be below its upper bound")
        if np.any(lo[OMEGA] < 0):
            raise ValueError("rotor speed bounds must be non-negative")

    @property
    def lo(self):
        return np.asarray(self.lower, dtype=float)

    @property
    def hi(self):
        return np.asarray(self.upper, dtype=float)

    @property
    def span(self):
        return self.hi - self.lo

    def contains(self, u, tol=0.0):
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lo - tol) and np.all(u <= self.hi + tol))

    def clip(self, u):
        return np.clip(u, self.lo, self.hi)

    def with_omega_max(self, omega_max):
        hi = list(self.upper)
        hi[OMEGA] = [float(omega_max)] * 4
        return ActuatorBounds(self.lower, tuple(hi), self.rated_thrust)
