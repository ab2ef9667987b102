"""Linearized control allocation with null-space redistribution.

A desired wrench deviation W is met exactly by the least-norm input change
``du_ln = pinv(A) W``; the remaining freedom ``N lam`` (N spanning null(A))
is chosen to keep the setpoint inside the actuator box while staying close to
trim in the R-weighted sense. Failed actuators are taken out of A, held at
their lock value, and their (lock - linearization point) wrench is moved to
the right-hand side.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .model import wrench_vector
from .params import ACTUATOR_NAMES, CHI, N_ACTUATORS, OMEGA, ActuatorBounds, RotorGeometry, VehicleParams
from .qp import InfeasibleError, active_set_qp

log = logging.getLogger(__name__)

SVD_RTOL = 1e-10
DEFAULT_FD_STEPS = np.array([1.0] * 4 + [1e-3] * 8)


class SaturationError(Exception):
    """The requested wrench needs inputs outside the actuator box.

    ``u`` holds the setpoint that meets the wrench with the least total bound
    violation; ``violation`` is that total.
    """

    def __init__(self, u, violation, message=None):
        super().__init__(message or f"wrench outside the feasible set (bound violation {violation:.3e})")
        self.u = u
        self.violation = violation


@dataclass(frozen=True)
class Failure:
    index: int
    value: float

    @property
    def name(self):
        return ACTUATOR_NAMES[self.index] if self.index < len(ACTUATOR_NAMES) else str(self.index)


def default_weights(bounds=None):
    """Diagonal of R: rotor speeds normalized by their maximum, tilts weighted
    ten times the surfaces."""
    bounds = bounds or ActuatorBounds()
    r = np.ones(N_ACTUATORS)
    r[OMEGA] = 1.0 / bounds.hi[OMEGA] ** 2
    r[CHI] = 10.0
    return r


@dataclass(frozen=True)
class EffectivenessMatrix:
    A: np.ndarray            # failed columns zeroed
    A_full: np.ndarray       # as linearized, nothing zeroed
    A_pinv: np.ndarray
    null_basis: np.ndarray   # n x r, rows of failed actuators are zero
    failed: tuple = ()
    rank: int = 0
    tracked: np.ndarray = None  # wrench rows the allocator must meet

    @property
    def n_inputs(self):
        return self.A.shape[1]

    @property
    def degenerate(self):
        """Rank below the number of tracked wrench components."""
        return self.rank < int(np.sum(self.tracked))

    @property
    def warning(self):
        if not self.degenerate:
            return None
        return (f"degenerate authority: rank {self.rank} < {int(np.sum(self.tracked))} tracked "
                "components; allocating in the attainable subspace")

    @classmethod
    def from_matrix(cls, A, failed=(), tracked=None):
        A_full = np.array(A, dtype=float)
        if A_full.ndim == 1:
            A_full = A_full[None, :]
        m, n = A_full.shape
        failed = tuple(sorted(set(int(k) for k in failed)))
        if any(not 0 <= k < n for k in failed):
            raise ValueError(f"failed actuator index out of range 0..{n - 1}: {failed}")
        tracked = np.ones(m, bool) if tracked is None else np.asarray(tracked, bool).copy()
        if tracked.shape != (m,):
            raise ValueError(f"tracked mask needs {m} entries")
        free = np.setdiff1d(np.arange(n), failed)
        A_z = A_full.copy()
        A_z[:, failed] = 0.0
        A_z[~tracked] = 0.0

        # columns removed, not merely zeroed, before the decomposition
        Af = A_z[:, free]
        U, s, Vt = np.linalg.svd(Af, full_matrices=True)
        tol = SVD_RTOL * (s[0] if s.size and s[0] > 0 else 1.0)
        rank = int(np.sum(s > tol))
        pinv_f = (Vt[:rank].T / s[:rank]) @ U[:, :rank].T
        null_f = Vt[rank:].T

        A_pinv = np.zeros((n, m))
        A_pinv[free] = pinv_f
        null_basis = np.zeros((n, null_f.shape[1]))
        null_basis[free] = null_f
        for arr in (A_z, A_full, A_pinv, null_basis, tracked):
            arr.setflags(write=False)
        return cls(A_z, A_full, A_pinv, null_basis, failed, rank, tracked)

    def with_failures(self, failed):
        return EffectivenessMatrix.from_matrix(self.A_full, failed, self.tracked)


def jacobian(u0, attitude, aero, geom, params, steps=None):
    """Central-difference Jacobian of the wrench map w.r.t. the 12 inputs."""
    steps = DEFAULT_FD_STEPS if steps is None else np.asarray(steps, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    A = np.empty((6, u0.size))
    for j in range(u0.size):
        up, um = u0.copy(), u0.copy()
        up[j] += steps[j]
        um[j] -= steps[j]
        A[:, j] = (wrench_vector(up, attitude, aero, geom, params)
                   - wrench_vector(um, attitude, aero, geom, params)) / (2.0 * steps[j])
    return A


def effectiveness(trim, failures=(), geom=None, params=None, steps=None, u0=None, tracked=None):
    """Effectiveness matrix at a trim point (or at ``u0`` for the trim's state)."""
    geom = geom or RotorGeometry()
    params = params or VehicleParams()
    u = trim.u0 if u0 is None else u0
    A = jacobian(u, trim.state.attitude, trim.aero, geom, params, steps)
    eff = EffectivenessMatrix.from_matrix(A, _indices(failures), tracked)
    if eff.degenerate:
        log.debug(eff.warning)
    return eff


def _indices(failures):
    return [f.index if isinstance(f, Failure) else int(f) for f in failures]


def least_norm(eff, W):
    return eff.A_pinv @ np.asarray(W, dtype=float)


@dataclass
class LambdaSolution:
    lam: np.ndarray
    du: np.ndarray
    objective: float
    at_lower: np.ndarray
    at_upper: np.ndarray
    iterations: int


def solve_lambda(eff, du_ln, u0, u_trim, weights, lower, upper, fixed=None):
    """Minimize (u_sp - u_trim)' R (u_sp - u_trim) over null-space
    coefficients subject to lower <= u_sp <= upper, u_sp = u0 + du_ln + N lam.

    ``fixed`` maps failed actuator indices to lock values; those entries of
    u_sp are pinned and excluded from the box.
    """
    N = eff.null_basis
    R = np.asarray(weights, dtype=float)
    u0, du_ln, u_trim = (np.asarray(a, dtype=float) for a in (u0, du_ln, u_trim))
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    n = u0.size
    fixed = dict(fixed or {})
    free = np.array([i for i in range(n) if i not in fixed], dtype=int)

    base = u0 + du_ln
    for k, v in fixed.items():
        base[k] = v
    Nf, Rf = N[free], R[free]
    H = 2.0 * Nf.T @ (Rf[:, None] * Nf)
    g = 2.0 * Nf.T @ (Rf * (base[free] - u_trim[free]))
    C = np.vstack([Nf, -Nf])
    d = np.concatenate([upper[free] - base[free], base[free] - lower[free]])

    try:
        qp = active_set_qp(H, g, C, d)
    except InfeasibleError as exc:
        u_bad = base.copy()
        u_bad[free] += Nf @ exc.x
        raise SaturationError(u_bad, exc.violation) from None

    lam = qp.x
    du = du_ln + N @ lam
    u_sp = base + N @ lam
    diff = u_sp - u_trim
    span = upper - lower
    at_lower = np.zeros(n, bool)
    at_upper = np.zeros(n, bool)
    at_lower[free] = u_sp[free] <= lower[free] + 1e-9 * span[free]
    at_upper[free] = u_sp[free] >= upper[free] - 1e-9 * span[free]
    return LambdaSolution(lam, du, float(diff @ (R * diff)), at_lower, at_upper, qp.iterations)


@dataclass(frozen=True)
class AllocationRequest:
    """Desired wrench deviation from the linearization point, plus context.

    ``u_lin`` is where A was taken (defaults to the trim input); ``u_trim`` is
    the regularization target of the objective.
    """

    wrench: np.ndarray
    u_trim: np.ndarray
    effectiveness: EffectivenessMatrix
    failures: tuple = ()
    weights: np.ndarray = None
    bounds: ActuatorBounds = field(default_factory=ActuatorBounds)
    u_lin: np.ndarray = None

    def __post_init__(self):
        idx = [f.index for f in self.failures]
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate failed actuator in {idx}")
        lo, hi = self.bounds.lo, self.bounds.hi
        for f in self.failures:
            if not 0 <= f.index < lo.size:
                raise ValueError(f"failed actuator index {f.index} out of range")
            if not lo[f.index] <= f.value <= hi[f.index]:
                raise ValueError(f"lock value {f.value} of {f.name} outside [{lo[f.index]}, {hi[f.index]}]")
        if set(idx) != set(self.effectiveness.failed):
            raise ValueError("effectiveness matrix was built for a different failure set")
        if self.weights is not None and np.any(np.asarray(self.weights) <= 0):
            raise ValueError("weight matrix diagonal must be positive")


@dataclass
class AllocationResult:
    u_sp: np.ndarray
    du: np.ndarray
    du_ln: np.ndarray
    du_null: np.ndarray
    lam: np.ndarray
    rhs: np.ndarray
    w_locked: np.ndarray
    w_trim_free: np.ndarray
    residual: float
    objective: float
    at_lower: np.ndarray
    at_upper: np.ndarray
    iterations: int

    @property
    def saturated(self):
        return bool(np.any(self.at_lower | self.at_upper))


def allocate(request):
    """Solve for the actuator setpoint.

    With failures, the right-hand side is
    ``W_full - a_k u_f - kA u_lin`` where ``W_full = A u_lin + W``; with none it
    reduces to W. Failed entries of the setpoint equal their lock values.
    """
    eff = request.effectiveness
    u_lin = np.asarray(request.u_trim if request.u_lin is None else request.u_lin, dtype=float)
    W = np.asarray(request.wrench, dtype=float)
    weights = default_weights(request.bounds) if request.weights is None else np.asarray(request.weights)

    lock = np.zeros_like(u_lin)
    fixed = {}
    for f in request.failures:
        lock[f.index] = f.value
        fixed[f.index] = f.value
    if fixed:
        w_full = eff.A_full @ u_lin + W
        w_locked = eff.A_full @ lock
        w_trim_free = eff.A @ u_lin
        rhs = w_full - w_locked - w_trim_free
    else:
        w_locked = np.zeros_like(W)
        w_trim_free = np.zeros_like(W)
        rhs = W.copy()
    rhs[~eff.tracked] = 0.0

    du_ln = least_norm(eff, rhs)
    sol = solve_lambda(eff, du_ln, u_lin, request.u_trim, weights,
                       request.bounds.lo, request.bounds.hi, fixed)
    # the QP meets the box up to round-off; clamp so it holds exactly
    u_sp = np.clip(u_lin + sol.du, request.bounds.lo, request.bounds.hi)
    for k, v in fixed.items():
        u_sp[k] = v
    residual = float(np.linalg.norm(eff.A @ sol.du - rhs))
    return AllocationResult(u_sp, sol.du, du_ln, sol.du - du_ln, sol.lam, rhs, w_locked,
                            w_trim_free, residual, sol.objective, sol.at_lower, sol.at_upper,
                            sol.iterations)


# Squared-speed coordinates: rotor entries replaced by t_i = omega_i^2, in
# which thrust and reaction torque are exactly linear. Keeps authority near
# omega = 0, where the speed Jacobian vanishes.

def to_squared(u):
    v = np.array(u, dtype=float)
    v[OMEGA] = v[OMEGA] ** 2
    return v


def from_squared(v):
    u = np.array(v, dtype=float)
    u[OMEGA] = np.sqrt(np.maximum(u[OMEGA], 0.0))
    return u


def squared_bounds(bounds):
    lo, hi = bounds.lo, bounds.hi
    lo[OMEGA] = lo[OMEGA] ** 2
    hi[OMEGA] = hi[OMEGA] ** 2
    return ActuatorBounds(tuple(lo), tuple(hi), bounds.rated_thrust)


def squared_jacobian(u0, attitude, aero, geom, params, steps=None):
    """Jacobian w.r.t. [t_1..t_4, chi, surfaces] at ``u0`` (speed units).

    Rotor columns are exact secants (the map is linear in each t_i); the
    rest are central differences as in ``jacobian``.
    """
    A = jacobian(u0, attitude, aero, geom, params, steps)
    u0 = np.asarray(u0, dtype=float)
    for j in range(4):
        one, zero = u0.copy(), u0.copy()
        one[j], zero[j] = 1.0, 0.0
        A[:, j] = (wrench_vector(one, attitude, aero, geom, params)
                   - wrench_vector(zero, attitude, aero, geom, params))
    return A
