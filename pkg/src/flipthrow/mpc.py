"""Receding-horizon thrust controller.

State is the 9-vector [position, velocity, acceleration]. The prediction
model is per-axis linear: positions and velocities integrate exactly over
one period, the vertical acceleration is driven by the scalar thrust input
(a_z+ = u/m - g), and the lateral accelerations relax first-order toward
zero, i.e. toward the trim the attitude loop is commanding. That keeps the
horizon problem a convex QP in the thrust sequence; lateral guidance is the
outer loop's job (see sim).

The solver is an SQP loop around an exact box-constrained QP: condensed
normal equations, primal active-set pivoting, backtracking line search on
an l1 merit (for this linear model the first QP is already exact, so the
loop typically certifies optimality in one pass). On failure the caller
reuses the previous feasible plan through fallback().
"""

import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import NoFeasibleHistoryError


class MpcStatus(Enum):
    OPTIMAL = "optimal"
    MAX_ITERS = "max_iters"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 10
    dt: float = 0.04
    q_diag: np.ndarray = field(
        default_factory=lambda: np.array(
            [50.0, 10.0, 20.0, 10.0, 20.0, 10.0, 10.0, 10.0, 10.0]
        )
    )
    p_diag: np.ndarray = field(
        default_factory=lambda: np.array(
            [100.0, 100.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0]
        )
    )
    r_weight: float = 1.0
    u_min: float = 0.0
    u_max: Optional[float] = None  # default 2 * mass * gravity
    max_sqp_iters: int = 30
    kkt_tol: float = 1e-6
    # prediction-model constants (see module docstring)
    mass: float = 1.2
    gravity: float = 9.81
    lateral_tau: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "q_diag", np.asarray(self.q_diag, float).reshape(9).copy())
        object.__setattr__(self, "p_diag", np.asarray(self.p_diag, float).reshape(9).copy())
        if self.u_max is None:
            object.__setattr__(self, "u_max", 2.0 * self.mass * self.gravity)
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if np.any(self.q_diag < 0.0) or np.any(self.p_diag < 0.0):
            raise ValueError("Q/P diagonals must be nonnegative")
        if self.r_weight <= 0.0:
            raise ValueError("input-rate weight must be positive")
        if not self.u_min < self.u_max:
            raise ValueError("u_min must be below u_max")
        if self.mass <= 0.0 or self.gravity <= 0.0 or self.lateral_tau <= 0.0:
            raise ValueError("mass, gravity, lateral_tau must be positive")

    @property
    def hover_input(self) -> float:
        return float(np.clip(self.mass * self.gravity, self.u_min, self.u_max))


@dataclass(frozen=True)
class MpcProblem:
    x0: np.ndarray
    reference: np.ndarray  # (N+1, 9)
    u_prev: float
    config: MpcConfig

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, float).reshape(9).copy())
        ref = np.asarray(self.reference, float).copy()
        object.__setattr__(self, "reference", ref)
        if ref.shape != (self.config.horizon + 1, 9):
            raise ValueError(f"reference must be (N+1, 9), got {ref.shape}")


@dataclass(frozen=True)
class MpcSolution:
    inputs: np.ndarray
    predicted: np.ndarray
    cost: float
    status: MpcStatus
    iterations: int = 0
    kkt_residual: float = float("nan")
    merit_history: tuple = ()
    solve_time_us: float = 0.0
    degraded: bool = False


def model_matrices(config: MpcConfig, dt: Optional[float] = None):
    """One-period affine model x+ = A x + B u + c."""
    d = config.dt if dt is None else float(dt)
    lam = max(0.0, 1.0 - d / config.lateral_tau)
    A = np.zeros((9, 9))
    for i in range(3):
        A[i, i] = 1.0
        A[i, 3 + i] = d
        A[i, 6 + i] = 0.5 * d * d
        A[3 + i, 3 + i] = 1.0
        A[3 + i, 6 + i] = d
    A[6, 6] = lam
    A[7, 7] = lam
    B = np.zeros(9)
    B[8] = 1.0 / config.mass
    c = np.zeros(9)
    c[8] = -config.gravity
    return A, B, c


def predict(x, u: float, dt: float, config: MpcConfig) -> np.ndarray:
    """Advance the 9-state prediction model one period of dt."""
    A, B, c = model_matrices(config, dt)
    return A @ np.asarray(x, float).reshape(9) + B * float(u) + c


def cost(problem: MpcProblem, U) -> float:
    """Horizon cost by literal rollout summation.

    J = sum_k [(x_k - r_k)' Q (x_k - r_k) + R (u_k - u_{k-1})^2]
        + (x_N - r_N)' P (x_N - r_N),  k = 0..N-1, u_{-1} = u_prev.
    """
    cfg = problem.config
    U = np.asarray(U, float).reshape(cfg.horizon)
    Q = cfg.q_diag
    P = cfg.p_diag
    x = problem.x0.copy()
    u_last = problem.u_prev
    J = 0.0
    for k in range(cfg.horizon):
        e = x - problem.reference[k]
        J += float(e @ (Q * e))
        J += cfg.r_weight * (U[k] - u_last) ** 2
        u_last = U[k]
        x = predict(x, U[k], cfg.dt, cfg)
    e = x - problem.reference[cfg.horizon]
    J += float(e @ (P * e))
    return J


def _condense(problem: MpcProblem):
    """Quadratic form of the horizon cost in U: J = U'HU/2 + g'U + const."""
    cfg = problem.config
    N = cfg.horizon
    A, B, c = model_matrices(cfg)
    # Gamma maps U to stacked [x_1 .. x_N]; xfree is the U = 0 trajectory
    Gamma = np.zeros((9 * N, N))
    xfree = np.zeros((9 * N,))
    x = problem.x0.copy()
    cols = np.zeros((9, N))  # sensitivities dx/du_j carried forward
    for k in range(N):
        for j in range(k):
            cols[:, j] = A @ cols[:, j]
        cols[:, k] = B
        x = A @ x + c
        xfree[9 * k : 9 * (k + 1)] = x
        Gamma[9 * k : 9 * (k + 1), :] = cols
    wdiag = np.concatenate(
        [np.tile(cfg.q_diag, N - 1), cfg.p_diag] if N > 1 else [cfg.p_diag]
    )
    E0 = xfree - problem.reference[1:].reshape(9 * N)
    WG = wdiag[:, None] * Gamma
    D = np.eye(N) - np.eye(N, k=-1)
    H = 2.0 * (Gamma.T @ WG + cfg.r_weight * (D.T @ D))
    g = 2.0 * (Gamma.T @ (wdiag * E0) - cfg.r_weight * (D.T @ (problem.u_prev * np.eye(N)[:, 0])))
    return H, g


def _box_qp(H, g, lb, ub, U0, max_pivots=None):
    """Primal active-set solver for min U'HU/2 + g'U, lb <= U <= ub."""
    n = len(g)
    if max_pivots is None:
        max_pivots = 20 * n + 20
    U = np.clip(np.asarray(U0, float).copy(), lb, ub)
    at_lo = U <= lb
    at_hi = U >= ub
    for _ in range(max_pivots):
        grad = H @ U + g
        free = ~(at_lo | at_hi)
        d = np.zeros(n)
        if free.any():
            Hff = H[np.ix_(free, free)]
            d[free] = np.linalg.solve(Hff, -grad[free])
        if np.max(np.abs(d)) < 1e-13:
            # KKT: multipliers at the bounds must push outward
            lam_lo = np.where(at_lo, grad, np.inf)
            lam_hi = np.where(at_hi, -grad, np.inf)
            worst = min(lam_lo.min(), lam_hi.min())
            if worst >= -1e-12:
                break
            if lam_lo.min() <= lam_hi.min():
                at_lo[int(np.argmin(lam_lo))] = False
            else:
                at_hi[int(np.argmin(lam_hi))] = False
            continue
        alpha = 1.0
        hit = -1
        hit_hi = False
        for i in np.flatnonzero(free):
            if d[i] > 1e-15:
                a = (ub[i] - U[i]) / d[i]
                if a < alpha:
                    alpha, hit, hit_hi = a, i, True
            elif d[i] < -1e-15:
                a = (lb[i] - U[i]) / d[i]
                if a < alpha:
                    alpha, hit, hit_hi = a, i, False
        U += alpha * d
        if hit >= 0:
            if hit_hi:
                U[hit] = ub[hit]
                at_hi[hit] = True
            else:
                U[hit] = lb[hit]
                at_lo[hit] = True
    return np.clip(U, lb, ub)


def _rollout(problem: MpcProblem, U):
    cfg = problem.config
    out = np.zeros((cfg.horizon + 1, 9))
    out[0] = problem.x0
    for k in range(cfg.horizon):
        out[k + 1] = predict(out[k], U[k], cfg.dt, cfg)
    return out


def solve(problem: MpcProblem, warm_start: Optional[MpcSolution] = None) -> MpcSolution:
    """SQP solve of the horizon problem.

    The warm start seeds the first iterate with the previous solution
    shifted one period forward (last input duplicated). Returns a tagged
    status instead of raising: INFEASIBLE only on non-finite problem data,
    MAX_ITERS when the iteration budget runs out before the KKT residual
    (natural residual of the projected gradient) reaches kkt_tol.
    """
    t0 = time.perf_counter()
    cfg = problem.config
    N = cfg.horizon
    lb = np.full(N, cfg.u_min)
    ub = np.full(N, cfg.u_max)

    finite = (
        np.all(np.isfinite(problem.x0))
        and np.all(np.isfinite(problem.reference))
        and np.isfinite(problem.u_prev)
    )
    if not finite:
        hov = np.full(N, cfg.hover_input)
        return MpcSolution(
            inputs=hov,
            predicted=np.zeros((N + 1, 9)),
            cost=float("inf"),
            status=MpcStatus.INFEASIBLE,
            solve_time_us=(time.perf_counter() - t0) * 1e6,
        )

    if warm_start is not None and len(warm_start.inputs) == N:
        U = np.empty(N)
        U[:-1] = warm_start.inputs[1:]
        U[-1] = warm_start.inputs[-1]
    else:
        U = np.full(N, cfg.hover_input)
    U = np.clip(U, lb, ub)

    H, g = _condense(problem)

    def quad(u):
        return 0.5 * float(u @ (H @ u)) + float(g @ u)

    merit = quad(U)
    merits = [merit]
    status = MpcStatus.MAX_ITERS
    iters = 0
    resid = float("nan")
    for iters in range(1, cfg.max_sqp_iters + 1):
        grad = H @ U + g
        resid = float(np.max(np.abs(U - np.clip(U - grad, lb, ub))))
        if resid < cfg.kkt_tol:
            status = MpcStatus.OPTIMAL
            break
        Uqp = _box_qp(H, g, lb, ub, U)
        dU = Uqp - U
        slope = float(grad @ dU)
        alpha = 1.0
        for _ in range(20):
            cand = quad(U + alpha * dU)
            if cand <= merit + 1e-4 * alpha * slope:
                break
            alpha *= 0.5
        U = np.clip(U + alpha * dU, lb, ub)
        merit = quad(U)
        merits.append(merit)

    return MpcSolution(
        inputs=U,
        predicted=_rollout(problem, U),
        cost=cost(problem, U),
        status=status,
        iterations=iters,
        kkt_residual=resid,
        merit_history=tuple(merits),
        solve_time_us=(time.perf_counter() - t0) * 1e6,
    )


def fallback(previous: Optional[MpcSolution]) -> MpcSolution:
    """Shift the previous feasible plan one period: [u1..uN-1, uN-1].

    The predicted trajectory is shifted the same way. Status is preserved;
    the degraded flag marks the solution as a fallback.
    """
    if previous is None:
        raise NoFeasibleHistoryError("no feasible solution to fall back on")
    if previous.status == MpcStatus.INFEASIBLE:
        raise NoFeasibleHistoryError("previous solution was infeasible")
    inputs = np.empty_like(previous.inputs)
    inputs[:-1] = previous.inputs[1:]
    inputs[-1] = previous.inputs[-1]
    predicted = np.vstack([previous.predicted[1:], previous.predicted[-1:]])
    return replace(previous, inputs=inputs, predicted=predicted, degraded=True, solve_time_us=0.0)
