"""Feasible wrench sets and static hover / cruise feasibility.

The wrench here is the actuator-generated part h(u) of the body wrench:
rotor thrust and torques, control-surface moments and (in the fixed-wing
configuration) the wing forces at the evaluated flight state. Gravity is left
out so that the hover condition reads ``|F| >= m g`` with ``M = 0``.
"""

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize

from .model import AIRSPEED_EPS, aero_angles, gravity_force, wrench_vector
from .params import CHI, N_ACTUATORS, OMEGA, ActuatorBounds, RotorGeometry, VehicleParams
from .trim import MAX_CRUISE_ALPHA, cruise_trim, level_state

MULTIROTOR, FIXED_WING = "multirotor", "fixed_wing"
CONFIGS = (MULTIROTOR, FIXED_WING)
INTERIOR = 0.01        # witness clearance from each bound, fraction of range
N_STARTS = 16
RANK_RTOL = 1e-8
MOMENT_TOL = 1e-6      # N m
CLOUD_HEADER = ("Mx", "My", "Mz", "Fx", "Fy", "Fz")


def _defaults(params, geom, bounds):
    return params or VehicleParams(), geom or RotorGeometry(), bounds or ActuatorBounds()


def _check_failure(failed, bounds):
    if failed is None:
        return None
    k = int(failed.index)
    if not 0 <= k < N_ACTUATORS:
        raise ValueError(f"failed actuator index {k} outside 0..{N_ACTUATORS - 1}")
    v = float(failed.value)
    if not bounds.lo[k] <= v <= bounds.hi[k]:
        raise ValueError(f"lock value {v} outside the bounds of actuator {k}")
    return k, v


def actuator_wrench(u, attitude, aero, geom, params):
    """h(u): the total body wrench minus gravity."""
    w = wrench_vector(u, attitude, aero, geom, params)
    w[3:] -= gravity_force(attitude, params)
    return w


@dataclass(frozen=True)
class WrenchSetSample:
    points: np.ndarray
    config_tag: str
    failed_actuator: int = None
    inputs: np.ndarray = field(default=None, repr=False)

    @property
    def sample_count(self):
        return len(self.points)


def _flight_state(config, airspeed, params, geom, bounds):
    if config == MULTIROTOR:
        state = level_state()
        return state.attitude, aero_angles(np.zeros(3), params)
    trim = cruise_trim(airspeed, params, geom, bounds)
    return trim.state.attitude, trim.aero


def sample_wrench_set(config=MULTIROTOR, failed=None, n_samples=1000, seed=0, airspeed=20.0,
                      params=None, geom=None, bounds=None, workers=1):
    """Monte Carlo image of the actuator box under h.

    Inputs are drawn uniformly from the bounds. The multirotor configuration
    pins tilts and surfaces at zero with the vehicle at rest; the fixed-wing
    configuration evaluates at the level-cruise trim state for ``airspeed``.
    A failure pins its actuator at the lock value. All draws are made up
    front, so the result does not depend on ``workers``.
    """
    if config not in CONFIGS:
        raise ValueError(f"unknown configuration {config!r}; valid: {', '.join(CONFIGS)}")
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    params, geom, bounds = _defaults(params, geom, bounds)
    pin = _check_failure(failed, bounds)
    rng = np.random.default_rng(seed)
    U = rng.uniform(bounds.lo, bounds.hi, size=(n_samples, N_ACTUATORS))
    if config == MULTIROTOR:
        U[:, 4:] = 0.0
    if pin is not None:
        U[:, pin[0]] = pin[1]
    attitude, aero = _flight_state(config, airspeed, params, geom, bounds)

    def chunk(rows):
        return np.array([actuator_wrench(u, attitude, aero, geom, params) for u in rows])

    parts = np.array_split(U, max(1, int(workers)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=int(workers)) as pool:
            results = list(pool.map(chunk, parts))
    else:
        results = [chunk(p) for p in parts]
    points = np.vstack([r.reshape(-1, 6) for r in results])
    return WrenchSetSample(points, config, None if pin is None else pin[0], U)


def export_wrench_cloud(sample, path):
    """Write the points as CSV (9 significant digits)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CLOUD_HEADER)
        for p in np.asarray(sample.points).reshape(-1, 6):
            w.writerow([f"{x:.9g}" for x in p])


def load_wrench_cloud(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CLOUD_HEADER:
        raise ValueError(f"{path}: expected header {','.join(CLOUD_HEADER)}")
    return np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, 6)


# ---------------------------------------------------------------- reports

def _kv(d):
    lines = []
    for k, v in d.items():
        if isinstance(v, np.ndarray) or isinstance(v, (list, tuple)):
            v = " ".join(f"{x:.9g}" for x in np.asarray(v, dtype=float).ravel())
        elif isinstance(v, bool):
            v = str(v).lower()
        elif isinstance(v, float):
            v = f"{v:.9g}"
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class HoverFeasibility:
    rank_Fm: int
    feasible: bool
    witness_u: np.ndarray = None
    margin: float = float("nan")
    moment_residual: float = float("nan")
    method: str = ""
    message: str = ""

    def as_dict(self):
        return {"feasible": self.feasible, "rank_Fm": self.rank_Fm, "margin": self.margin,
                "moment_residual": self.moment_residual, "method": self.method,
                "message": self.message,
                "witness_u": self.witness_u if self.witness_u is not None else []}

    def to_kv(self):
        return _kv(self.as_dict())


@dataclass(frozen=True)
class CruiseFeasibility:
    feasible: bool
    airspeed: float
    witness_u: np.ndarray = None
    alpha: float = float("nan")
    forward_force: float = float("nan")
    lift: float = float("nan")
    moment_residual: float = float("nan")
    message: str = ""

    def as_dict(self):
        return {"feasible": self.feasible, "airspeed": self.airspeed, "alpha": self.alpha,
                "forward_force": self.forward_force, "lift": self.lift,
                "moment_residual": self.moment_residual, "message": self.message,
                "witness_u": self.witness_u if self.witness_u is not None else []}

    def to_kv(self):
        return _kv(self.as_dict())


# ---------------------------------------------------------------- hover

def _interior(bounds):
    pad = INTERIOR * bounds.span
    return bounds.lo + pad, bounds.hi - pad


def hover_maps(chi, geom, params):
    """F_m and G_m: force and moment per unit t_i = omega_i^2 at fixed tilts."""
    s, c = np.sin(chi), np.cos(chi)
    axes = np.stack([s, np.zeros(4), -c], axis=1)
    F = params.thrust_coeff * axes.T
    G = (params.thrust_coeff * np.cross(geom.positions, axes)
         + params.torque_coeff * geom.signs[:, None] * axes).T
    return F, G


def _rank(M):
    sv = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(sv >= RANK_RTOL * sv[0])) if sv.size and sv[0] > 0 else 0


def _verify_hover(u, params, geom):
    """Substitute a witness into h at rest: (|F|, |M|)."""
    state = level_state()
    w = actuator_wrench(u, state.attitude, aero_angles(np.zeros(3), params), geom, params)
    return float(np.linalg.norm(w[3:])), float(np.linalg.norm(w[:3]))


def _hover_linear(pin, params, geom, bounds):
    chi = np.zeros(4)
    lo_i, hi_i = _interior(bounds)
    t_lo, t_hi = lo_i[OMEGA] ** 2, hi_i[OMEGA] ** 2
    if pin is not None:
        k, v = pin
        if k in range(4):
            t_lo[k] = t_hi[k] = v * v
        elif 4 <= k < 8:
            chi[k - 4] = v
    F, G = hover_maps(chi, geom, params)
    rank = _rank(F)
    scale = t_hi.max()
    Gs = G * scale
    best = None
    # max |F t| = max over directions d of max d.F t; F_y is structurally zero
    for ang in np.linspace(0.0, np.pi, 181):
        d = np.array([np.cos(ang), 0.0, -np.sin(ang)])
        res = linprog(-(d @ F) * scale, A_eq=Gs, b_eq=np.zeros(3),
                      bounds=list(zip(t_lo / scale, t_hi / scale)), method="highs")
        if res.status == 0 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        return HoverFeasibility(rank, False, method="linear",
                                message="no rotor speeds null the moment inside the bounds")
    t = best.x * scale
    u = np.zeros(N_ACTUATORS)
    u[OMEGA] = np.sqrt(t)
    u[CHI] = chi
    norm_f, moment = _verify_hover(u, params, geom)
    margin = norm_f - params.weight
    ok = margin >= 0.0 and moment <= MOMENT_TOL
    msg = "" if ok else f"largest moment-free thrust {norm_f:.6g} N is below the weight {params.weight:.6g} N"
    return HoverFeasibility(rank, ok, u if ok else None, margin, moment, "linear", msg)


def _hover_nonlinear(pin, params, geom, bounds, seed):
    lo_i, hi_i = _interior(bounds)
    fixed = {} if pin is None else {pin[0]: pin[1]}
    free = [i for i in range(8) if i not in fixed]
    x_lo = np.array([lo_i[i] / bounds.hi[i] if i < 4 else lo_i[i] for i in free])
    x_hi = np.array([hi_i[i] / bounds.hi[i] if i < 4 else hi_i[i] for i in free])
    mg = params.weight

    def full(x):
        u = np.zeros(N_ACTUATORS)
        for i, v in fixed.items():
            u[i] = v
        for j, i in enumerate(free):
            u[i] = x[j] * bounds.hi[i] if i < 4 else x[j]
        return u

    def force_moment(x):
        u = full(x)
        F, G = hover_maps(u[CHI], geom, params)
        t = u[OMEGA] ** 2
        return F @ t, G @ t

    cons = [{"type": "eq", "fun": lambda x: force_moment(x)[1] / mg}]
    objective = lambda x: -float(np.sum(force_moment(x)[0] ** 2)) / mg ** 2
    rng = np.random.default_rng(seed)
    best = None
    for start in range(N_STARTS):
        x0 = rng.uniform(x_lo, x_hi)
        res = _slsqp(objective, x0, x_lo, x_hi, cons)
        u = full(np.clip(res.x, x_lo, x_hi))
        norm_f, moment = _verify_hover(u, params, geom)
        if moment <= MOMENT_TOL and (best is None or norm_f > best[1]):
            best = (u, norm_f, moment)
    if best is None:
        return HoverFeasibility(0, False, method="nonlinear",
                                message=f"no moment-free witness found from {N_STARTS} starts (conservative)")
    u, norm_f, moment = best
    # rank of dF/d(t, chi) at the witness
    J = np.empty((3, len(free)))
    for j, i in enumerate(free):
        h = 1e-6 * (bounds.hi[i] if i < 4 else 1.0)
        up, um = u.copy(), u.copy()
        up[i] += h
        um[i] -= h
        J[:, j] = (_force(up, geom, params) - _force(um, geom, params)) / (2 * h)
    margin = norm_f - mg
    ok = margin >= 0.0
    msg = "" if ok else f"largest moment-free thrust {norm_f:.6g} N is below the weight (conservative)"
    return HoverFeasibility(_rank(J), ok, u if ok else None, margin, moment, "nonlinear", msg)


def _slsqp(objective, x0, lo, hi, cons):
    with warnings.catch_warnings():
        # SLSQP clips steps that leave the box and says so; that is expected
        warnings.simplefilter("ignore", RuntimeWarning)
        return minimize(objective, x0, method="SLSQP", bounds=list(zip(lo, hi)),
                        constraints=cons, options={"maxiter": 300, "ftol": 1e-12})


def _force(u, geom, params):
    F, _ = hover_maps(u[CHI], geom, params)
    return F @ (u[OMEGA] ** 2)


def static_hover_check(failed=None, allow_tilt=False, params=None, geom=None, bounds=None, seed=0):
    """Can the vehicle hover statically: is there an interior input with zero
    moment and thrust magnitude at least the weight?

    With fixed tilts the map is linear in t_i = omega_i^2 and the check is an
    exact linear program. With free tilts a multi-start local search is used,
    so a negative answer is conservative.
    """
    params, geom, bounds = _defaults(params, geom, bounds)
    pin = _check_failure(failed, bounds)
    if pin is not None and pin[0] >= 8:
        pin = None  # surfaces have no authority at rest
    if allow_tilt:
        return _hover_nonlinear(pin, params, geom, bounds, seed)
    return _hover_linear(pin, params, geom, bounds)


# ---------------------------------------------------------------- cruise

def cruise_check(failed=None, airspeed=20.0, params=None, geom=None, bounds=None, seed=0):
    """Level cruise at ``airspeed``: an interior input and angle of attack with
    net forward force >= 0, upward force >= m g and zero moment."""
    params, geom, bounds = _defaults(params, geom, bounds)
    pin = _check_failure(failed, bounds)
    if airspeed < AIRSPEED_EPS:
        return CruiseFeasibility(False, float(airspeed),
                                 message="zero dynamic pressure: no wing lift or surface authority")
    lo_i, hi_i = _interior(bounds)
    fixed = {} if pin is None else {pin[0]: pin[1]}
    free = [i for i in range(N_ACTUATORS) if i not in fixed]
    scale = np.array([bounds.hi[i] if i < 4 else 1.0 for i in free])
    x_lo = np.append(lo_i[free] / scale, -MAX_CRUISE_ALPHA)
    x_hi = np.append(hi_i[free] / scale, MAX_CRUISE_ALPHA)
    mg = params.weight

    def unpack(x):
        u = np.zeros(N_ACTUATORS)
        for i, v in fixed.items():
            u[i] = v
        u[free] = x[:-1] * scale
        return u, x[-1]

    def terms(x):
        u, alpha = unpack(x)
        state = level_state(airspeed, alpha)
        aero = aero_angles(state.air_velocity_body(), params)
        w = actuator_wrench(u, state.attitude, aero, geom, params)
        f_inertial = state.dcm @ w[3:]
        return w[:3], f_inertial[0], -f_inertial[2]

    try:
        trim = cruise_trim(airspeed, params, geom, bounds)
        x_trim = np.append(np.asarray(trim.u0)[free] / scale, trim.alpha)
    except Exception:
        x_trim = 0.5 * (x_lo + x_hi)
    cons = [{"type": "eq", "fun": lambda x: terms(x)[0] / mg},
            {"type": "ineq", "fun": lambda x: terms(x)[1] / mg},
            {"type": "ineq", "fun": lambda x: (terms(x)[2] - mg) / mg}]
    span = x_hi - x_lo
    objective = lambda x: float(np.sum(((x - x_trim) / span) ** 2))
    rng = np.random.default_rng(seed)
    starts = [np.clip(x_trim, x_lo, x_hi)] + [rng.uniform(x_lo, x_hi) for _ in range(N_STARTS - 1)]
    best = None
    for x0 in starts:
        res = _slsqp(objective, x0, x_lo, x_hi, cons)
        x = np.clip(res.x, x_lo, x_hi)
        m, fx, lift = terms(x)
        ok = np.linalg.norm(m) <= MOMENT_TOL and fx >= -1e-9 and lift >= mg - 1e-9
        if ok and (best is None or res.fun < best[0]):
            best = (res.fun, x, np.linalg.norm(m), fx, lift)
    if best is None:
        return CruiseFeasibility(False, float(airspeed),
                                 message=f"no trimmed input found from {N_STARTS} starts (conservative)")
    _, x, mres, fx, lift = best
    u, alpha = unpack(x)
    return CruiseFeasibility(True, float(airspeed), u, float(alpha), float(fx), float(lift), float(mres))
