"""Scripted closed-loop runs with failure injection, traces and summaries."""

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..allocator import (DEFAULT_FD_STEPS, AllocationRequest, EffectivenessMatrix, Failure,
                         SaturationError, allocate, from_squared,
                         squared_bounds, squared_jacobian, to_squared)
from ..model import (RigidBodyState, aero_angles, quat_from_euler, quat_to_euler, thrust_force,
                     wrench_vector)
from ..qp import active_set_qp
from ..params import ACTUATOR_NAMES, CHI, OMEGA, ActuatorBounds, RotorGeometry, VehicleParams
from ..trim import cruise_trim, hover_trim
from .controller import Controller, ControllerGains, Setpoint
from .dynamics import SimulationDiverged, actuator_lag, lag_time_constants, step
from .phases import FIXED_WING, MULTIROTOR, PHASES, TRANSITION_FW, TRANSITION_MC, phase_machine

CRASH_ANGLE = np.deg2rad(75.0)
CONVERGE_RATE = 0.02   # fraction of actuator range per second
CONVERGE_HOLD = 2.0    # s
TILT_RATE = np.deg2rad(30.0)  # scheduled tilt slew during transitions, rad/s
# Command slew limits as fractions of each channel's allocation range per
# second (rotors in squared speed). They keep each allocation step local to
# the linearization.
SLEW_ROTOR, SLEW_TILT, SLEW_SURFACE = 20.0, 1.5, 5.0

TRACE_COLUMNS = (
    ["t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz",
     "Va", "alpha", "beta", "phase"]
    + [f"u_cmd_{i}" for i in range(12)]
    + [f"u_eff_{i}" for i in range(12)]
    + [f"Wd_{i}" for i in range(6)]
    + [f"Wa_{i}" for i in range(6)]
    + ["J", "residual", "saturated"]
)
_NUMERIC = [c for c in TRACE_COLUMNS if c != "phase"]


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class FailureSpec:
    index: int
    value: float
    time: float = 0.0
    informed: bool = True

    def validate(self, bounds):
        if not 0 <= self.index < len(ACTUATOR_NAMES):
            raise ScenarioError(f"failure index {self.index} outside 0..11")
        lo, hi = bounds.lo[self.index], bounds.hi[self.index]
        if not lo <= self.value <= hi:
            raise ScenarioError(
                f"lock value {self.value} for {ACTUATOR_NAMES[self.index]} outside [{lo}, {hi}]")
        if self.time < 0:
            raise ScenarioError("inject time must be non-negative")

    @property
    def failure(self):
        return Failure(self.index, float(self.value))


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    start_phase: str = MULTIROTOR
    altitude: float = 10.0           # m above ground
    airspeed: float = 20.0           # cruise airspeed setpoint, m/s
    heading: float = 0.0             # rad
    duration: float = 30.0           # s
    dt: float = 0.004                # s
    seed: int = 0
    perturbation: float = 0.0        # std of initial attitude perturbation, rad
    failures: tuple = ()
    transitions: tuple = ()          # (time, target phase) commands
    wind: tuple = (0.0, 0.0, 0.0)
    relinearize_every: int = 1
    weights: tuple = None
    fd_steps: tuple = None
    slew_rates: tuple = None
    v_trans: float = 14.0
    v_back: float = 3.0
    params: VehicleParams = field(default_factory=VehicleParams)
    geometry: RotorGeometry = field(default_factory=RotorGeometry)
    bounds: ActuatorBounds = field(default_factory=ActuatorBounds)
    gains: ControllerGains = field(default_factory=ControllerGains)

    def __post_init__(self):
        if not self.dt > 0:
            raise ScenarioError("dt must be positive")
        if self.start_phase not in (MULTIROTOR, FIXED_WING):
            raise ScenarioError(f"start phase must be {MULTIROTOR} or {FIXED_WING}")
        if self.relinearize_every < 1:
            raise ScenarioError("relinearize_every must be at least 1")
        idx = [f.index for f in self.failures]
        if len(set(idx)) != len(idx):
            raise ScenarioError(f"duplicate failed actuator in {idx}")
        for f in self.failures:
            f.validate(self.bounds)
            if f.time > self.duration:
                raise ScenarioError("duration must cover every inject time")
        for t, target in self.transitions:
            if target not in (MULTIROTOR, FIXED_WING):
                raise ScenarioError(f"transition target must be {MULTIROTOR} or {FIXED_WING}")
        if self.weights is not None and (len(self.weights) != 12 or min(self.weights) <= 0):
            raise ScenarioError("weights need 12 positive entries")
        if self.slew_rates is not None and (len(self.slew_rates) != 12 or min(self.slew_rates) <= 0):
            raise ScenarioError("slew_rates need 12 positive entries")

    @property
    def n_steps(self):
        return int(round(self.duration / self.dt))

    @property
    def inject_time(self):
        return min((f.time for f in self.failures), default=0.0)


class Trace:
    """Per-step record of a run; numeric columns in one array, phase tags aside."""

    def __init__(self, name, data, phases):
        self.name = name
        self.data = data
        self.phases = list(phases)

    def __len__(self):
        return self.data.shape[0]

    @property
    def columns(self):
        return TRACE_COLUMNS

    def column(self, name):
        if name == "phase":
            return list(self.phases)
        try:
            return self.data[:, _NUMERIC.index(name)]
        except ValueError:
            raise KeyError(f"unknown trace column {name!r}; valid: {', '.join(TRACE_COLUMNS)}") from None

    def rows(self):
        k = TRACE_COLUMNS.index("phase")
        for row, ph in zip(self.data, self.phases):
            vals = [repr(float(v)) for v in row]
            yield vals[:k] + [ph] + vals[k:]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            w.writerows(self.rows())
        return path


@dataclass
class Summary:
    name: str
    crashed: bool
    crash_time: float
    converged: bool
    time_to_converge: float
    max_attitude_deviation: float   # deg
    max_heading_deviation: float    # deg
    altitude_variation: float       # m
    max_cross_track: float          # m
    saturation_count: int
    steps: int
    final_phase: str

    def as_dict(self):
        return asdict(self)

    def to_kv(self):
        lines = []
        for k, v in self.as_dict().items():
            if isinstance(v, float):
                v = f"{v:.6g}"
            elif isinstance(v, bool):
                v = str(v).lower()
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"

    def to_json(self):
        d = {k: (None if isinstance(v, float) and not np.isfinite(v) else v)
             for k, v in self.as_dict().items()}
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


@dataclass
class RunResult:
    trace: Trace
    summary: Summary
    events: list


def initial_condition(scn):
    """Trim state, trim input and attitude reference for the start phase."""
    pos = np.array([0.0, 0.0, -scn.altitude])
    if scn.start_phase == MULTIROTOR:
        trim = hover_trim(scn.params, scn.geometry)
        q = quat_from_euler(0.0, 0.0, scn.heading)
        state = RigidBodyState(position=pos, velocity=np.zeros(3), attitude=q)
    else:
        trim = cruise_trim(scn.airspeed, scn.params, scn.geometry, scn.bounds)
        q = quat_from_euler(0.0, trim.alpha, scn.heading)
        v = scn.airspeed * np.array([np.cos(scn.heading), np.sin(scn.heading), 0.0])
        state = RigidBodyState(position=pos, velocity=v + np.asarray(scn.wind, float), attitude=q)
    if scn.perturbation > 0:
        rng = np.random.default_rng(scn.seed)
        roll, pitch, yaw = quat_to_euler(state.attitude) + rng.normal(0.0, scn.perturbation, 3)
        state = RigidBodyState(state.position, state.velocity, quat_from_euler(roll, pitch, yaw))
    return trim, state


def default_slew_rates():
    r = np.full(12, SLEW_SURFACE)
    r[OMEGA] = SLEW_ROTOR
    r[CHI] = SLEW_TILT
    return r


def default_closed_loop_weights():
    """R on range-normalized inputs: 1 for rotors, 10 for tilts, 1 for surfaces."""
    r = np.ones(12)
    r[CHI] = 10.0
    return r


class _Loop:
    """Mutable per-run bookkeeping for the closed loop."""

    def __init__(self, scn):
        self.scn = scn
        self.hover = hover_trim(scn.params, scn.geometry)
        self.cruise = None
        # The loop allocates in squared-speed coordinates scaled to [0, 1]
        # per channel, so the least-norm step and R see comparable units.
        sq = squared_bounds(scn.bounds)
        self.lo, self.span = sq.lo, sq.span
        slew = default_slew_rates() if scn.slew_rates is None else np.asarray(scn.slew_rates, float)
        self.max_step = slew * scn.dt
        self.weights = (default_closed_loop_weights() if scn.weights is None
                        else np.asarray(scn.weights, float))
        self.steps = DEFAULT_FD_STEPS if scn.fd_steps is None else np.asarray(scn.fd_steps, float)
        self.eff = None
        self.eff_key = None
        self.age = 0

    def to_alloc(self, u):
        return (to_squared(u) - self.lo) / self.span

    def from_alloc(self, z):
        return from_squared(self.lo + self.span * np.clip(z, 0.0, 1.0))

    def cruise_trim(self):
        if self.cruise is None:
            s = self.scn
            self.cruise = cruise_trim(s.airspeed, s.params, s.geometry, s.bounds)
        return self.cruise

    def effectiveness(self, u_lin, state, aero, pins, tracked, force):
        key = (tuple(sorted(pins)), tuple(tracked))
        if force or self.eff is None or key != self.eff_key or self.age >= self.scn.relinearize_every:
            A = squared_jacobian(u_lin, state.attitude, aero, self.scn.geometry, self.scn.params,
                                 self.steps)
            self.eff = EffectivenessMatrix.from_matrix(A * self.span, sorted(pins), tracked)
            self.eff_key = key
            self.age = 0
        self.age += 1
        return self.eff


def _attitude_reference(scn, trim):
    return np.array([0.0, trim.alpha if scn.start_phase == FIXED_WING else 0.0, scn.heading])


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def run_scenario(scn):
    """Closed loop: phase machine, controller, allocator, actuator lag,
    failure clamp, rigid-body step. Crashes end the run early."""
    p, geom, bounds = scn.params, scn.geometry, scn.bounds
    wind = np.asarray(scn.wind, dtype=float)
    trim, state = initial_condition(scn)
    loop = _Loop(scn)
    ctrl = Controller(p, scn.gains, scn.dt)
    tau = lag_time_constants()

    u_cmd = np.array(trim.u0, dtype=float)
    u_eff = u_cmd.copy()
    phase = scn.start_phase
    home = state.position.copy()
    line_origin = state.position.copy()
    command = None
    transitions = sorted(scn.transitions)
    tilt_sched = u_cmd[CHI].copy()
    events = [(0.0, "phase", phase)]
    active = []

    n = scn.n_steps
    data = np.empty((n, len(_NUMERIC)))
    phases = []
    crashed, crash_time = False, float("nan")
    relin_now = True

    for k in range(n):
        t = k * scn.dt
        while transitions and transitions[0][0] <= t + 1e-12:
            command = transitions.pop(0)[1]
            events.append((t, "command", command))
        newly = [f for f in scn.failures if f not in active and f.time <= t + 1e-12]
        for f in newly:
            active.append(f)
            events.append((t, "failure", ACTUATOR_NAMES[f.index]))
            relin_now = relin_now or f.informed

        v_air = state.dcm.T @ (state.velocity - wind)
        aero = aero_angles(v_air, p)
        new_phase = phase_machine(phase, aero.airspeed, u_eff[CHI], command, scn.v_trans, scn.v_back)
        if new_phase != phase:
            events.append((t, "phase", new_phase))
            if new_phase == MULTIROTOR:
                home = state.position.copy()
            if new_phase == FIXED_WING:
                line_origin = state.position.copy()
            if new_phase in (MULTIROTOR, FIXED_WING):
                command = None
            tilt_sched = u_eff[CHI].copy()
            ctrl.reset()
            phase = new_phase
            relin_now = True

        sp, u_target, pins = _setpoint(scn, loop, phase, state, aero, home, line_origin,
                                       tilt_sched)
        if phase in (TRANSITION_FW, TRANSITION_MC):
            tilt_sched = np.array([pins[i] for i in range(4, 8)])
        out = ctrl(state, sp, phase, aero.airspeed, aero.beta)

        informed = {f.index: f.value for f in active if f.informed}
        pins = {**pins, **informed}
        u_lin = u_cmd.copy()
        for i, v in pins.items():
            u_lin[i] = v
        force = relin_now or phase in (TRANSITION_FW, TRANSITION_MC)
        eff = loop.effectiveness(u_lin, state, aero, pins, out.tracked, force)
        relin_now = False

        w_now = wrench_vector(u_lin, state.attitude, aero, geom, p)
        if phase == FIXED_WING:
            out.wrench[5] = w_now[5] + thrust_force(u_target, p)[2] - thrust_force(u_lin, p)[2]
        u_new, J, resid, sat = _allocate(loop, eff, out.wrench - w_now, u_lin, u_target, pins)
        u_cmd = np.asarray(u_new, dtype=float)

        u_eff = actuator_lag(u_eff, u_cmd, scn.dt, tau)
        for f in active:
            u_eff[f.index] = f.value

        w_ach = wrench_vector(u_eff, state.attitude, aero, geom, p)
        data[k] = np.concatenate([
            [t], state.position, state.velocity, state.attitude, state.rates,
            [aero.airspeed, aero.alpha, aero.beta], u_cmd, u_eff, out.wrench, w_ach,
            [J, resid, float(sat)]])
        phases.append(phase)

        roll, pitch, _ = quat_to_euler(state.attitude)
        if abs(roll) > CRASH_ANGLE or abs(pitch) > CRASH_ANGLE or state.position[2] > 0:
            crashed, crash_time = True, t
            events.append((t, "crash", ""))
            break
        try:
            state = step(state, u_eff, scn.dt, geom, p, wind)
        except SimulationDiverged:
            crashed, crash_time = True, t
            events.append((t, "diverged", ""))
            break

    data = data[:len(phases)]
    trace = Trace(scn.name, data, phases)
    summary = summarize(scn, trace, trim, crashed, crash_time)
    return RunResult(trace, summary, events)


# Fallback when the exact allocation saturates: row weights of the
# box-constrained least-squares problem (moments before forces) and the
# weight of the trim-regularization term.
FALLBACK_ROW_WEIGHTS = np.array([1.0, 1.0, 0.3, 0.1, 0.1, 0.1])
FALLBACK_REG = 1e-3


def _allocate(loop, eff, w_dev, u_lin, u_target, pins):
    """Allocate in the loop's normalized coordinates.

    The exact null-space allocation is tried first. If the demanded wrench is
    outside the attainable set, the command minimizes the weighted tracking
    error over the actuator box instead, so it degrades gracefully rather than
    jumping to a least-violation vertex.
    """
    z_lin, z_target = loop.to_alloc(u_lin), loop.to_alloc(u_target)
    fails = tuple(Failure(i, float(z_lin[i])) for i in sorted(pins))
    lo = np.maximum(z_lin - loop.max_step, 0.0)
    hi = np.minimum(z_lin + loop.max_step, 1.0)
    box = ActuatorBounds(tuple(lo), tuple(hi))
    req = AllocationRequest(wrench=w_dev, u_trim=z_target, effectiveness=eff, failures=fails,
                            weights=loop.weights, bounds=box, u_lin=z_lin)
    try:
        res = allocate(req)
        return loop.from_alloc(res.u_sp), res.objective, res.residual, res.saturated
    except SaturationError:
        pass
    dz, resid = _least_squares_fallback(eff, w_dev, z_lin, z_target, loop.weights, pins, lo, hi)
    z = z_lin + dz
    diff = z - z_target
    return loop.from_alloc(z), float(diff @ (loop.weights * diff)), resid, True


def _least_squares_fallback(eff, w_dev, z_lin, z_target, weights, pins, lo, hi):
    free = np.array([i for i in range(12) if i not in pins], dtype=int)
    rows = np.asarray(eff.tracked, bool)
    S = FALLBACK_ROW_WEIGHTS[rows]
    A = eff.A[rows][:, free]
    b = np.asarray(w_dev, float)[rows]
    R = np.asarray(weights, float)[free]
    H = 2.0 * (A.T @ (S[:, None] * A) + FALLBACK_REG * np.diag(R))
    g = -2.0 * A.T @ (S * b) + 2.0 * FALLBACK_REG * R * (z_lin[free] - z_target[free])
    n = free.size
    C = np.vstack([np.eye(n), -np.eye(n)])
    d = np.concatenate([hi[free] - z_lin[free], z_lin[free] - lo[free]])
    x = active_set_qp(H, g, C, np.maximum(d, 0.0)).x
    dz = np.zeros(12)
    dz[free] = x
    return dz, float(np.linalg.norm(eff.A[rows] @ dz - b))


def _setpoint(scn, loop, phase, state, aero, home, origin, tilt_sched):
    """Setpoint, regularization target and scheduled (pinned) tilts."""
    hover_u = np.array(loop.hover.u0, dtype=float)
    if phase == MULTIROTOR:
        return Setpoint(position=home, yaw=scn.heading), hover_u, {}
    if phase == FIXED_WING:
        trim = loop.cruise_trim()
        sp = Setpoint(position=origin, yaw=scn.heading, airspeed=scn.airspeed,
                      pitch_trim=trim.alpha)
        return sp, np.array(trim.u0, dtype=float), {}

    # transitions: tilts follow a rate-limited schedule, speed builds or bleeds
    va = aero.airspeed
    trim = loop.cruise_trim()
    if phase == TRANSITION_FW:
        frac = np.clip((va - 0.5 * scn.v_trans) / (1.3 * scn.v_trans - 0.5 * scn.v_trans), 0.0, 1.0)
        cap = np.deg2rad(55.0) + frac * (np.pi / 2 - np.deg2rad(55.0))
        target = np.minimum(np.full(4, cap), np.pi / 2)
        pitch = trim.alpha * frac
    else:
        target = np.zeros(4)
        pitch = 0.0
    dchi = np.clip(target - tilt_sched, -TILT_RATE * scn.dt, TILT_RATE * scn.dt)
    chi = tilt_sched + dchi
    pins = {4 + i: float(chi[i]) for i in range(4)}
    sp = Setpoint(position=np.array([state.position[0], state.position[1], home[2]]),
                  velocity=np.zeros(3), yaw=scn.heading, pitch_trim=pitch)
    u_target = hover_u.copy()
    u_target[CHI] = chi
    return sp, u_target, pins


def summarize(scn, trace, trim, crashed, crash_time):
    t = trace.column("t")
    t0 = scn.inject_time if scn.failures else 0.0
    post = t >= t0 - 1e-12
    q = trace.data[:, 7:11]
    euler = np.array([quat_to_euler(qi) for qi in q]) if len(t) else np.zeros((0, 3))
    ref = _attitude_reference(scn, trim)
    if post.any():
        dev = np.abs(euler[post, :2] - ref[:2])
        att_dev = float(np.rad2deg(dev.max()))
        head_dev = float(np.rad2deg(np.abs(_wrap(euler[post, 2] - ref[2])).max()))
        alt = -trace.column("pz")[post]
        alt_var = float(alt.max() - alt.min())
        px, py = trace.column("px")[post], trace.column("py")[post]
        cross = -np.sin(scn.heading) * px + np.cos(scn.heading) * py
        cross_max = float(np.abs(cross).max())
    else:
        att_dev = head_dev = alt_var = cross_max = float("nan")
    converged, ttc = _time_to_converge(scn, trace, t0, crashed)
    sat = int(trace.column("saturated").sum())
    return Summary(scn.name, bool(crashed), float(crash_time), converged, ttc, att_dev, head_dev,
                   alt_var, cross_max, sat, len(trace), trace.phases[-1] if len(trace) else "")


def _time_to_converge(scn, trace, t0, crashed):
    """First time after t0 from which every working actuator's commanded rate
    stays below CONVERGE_RATE (range-normalized) for CONVERGE_HOLD seconds."""
    if crashed or len(trace) < 2:
        return False, float("nan")
    k0 = TRACE_COLUMNS.index("u_cmd_0") - 1
    u = trace.data[:, k0:k0 + 12]
    keep = np.ones(12, bool)
    keep[[f.index for f in scn.failures]] = False
    rate = np.abs(np.diff(u, axis=0)) / (scn.bounds.span * scn.dt)
    calm = np.all(rate[:, keep] < CONVERGE_RATE, axis=1)
    t = trace.column("t")[1:]
    hold = int(round(CONVERGE_HOLD / scn.dt))
    start = int(np.searchsorted(t, t0 - 1e-12))
    run = 0
    for i in range(start, calm.size):
        run = run + 1 if calm[i] else 0
        if run >= hold:
            return True, float(t[i - hold + 1] - t0)
    return False, float("nan")


__all__ = ["FailureSpec", "Scenario", "ScenarioError", "Summary", "Trace", "RunResult",
           "TRACE_COLUMNS", "run_scenario", "summarize", "initial_condition", "PHASES"]
