"""Nonlinear model predictive control by SQP over a multiple-shooting grid.

The optimal control problem at every tick is::

    min  sum_{k=1..p} |e_k|^2_Q + sum_{k=0..N-1} |u_k - u_{k-1}|^2_R + |u_k|^2_S
    s.t. s_0 = x,  s_{k+1} = F(s_k, u_min(k, N-1)),  u_min <= u_k <= u_max

with ``e_k`` the pose tracking error of node ``s_k`` in degrees (direction
error wrapped, and dropped near the straight pose). ``F`` is one step of
the prediction model; inputs are held after the control horizon.

Each SQP iteration linearises ``F`` at every node, condenses the defect
equations into the inputs, and solves the Gauss-Newton QP with the box
solver. Steps are globalised by backtracking on an exact-penalty merit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernel
from ..dynamics import WristModel, WristState, state_derivative
from ..errors import InvalidInputError
from ..kinematics import WristPose
from .qp import solve_box_qp

__all__ = [
    "MpcConfig",
    "NmpcResult",
    "NmpcController",
    "discretize",
    "nmpc_solve",
    "tracking_error",
]

log = logging.getLogger(__name__)

DEG = 180.0 / math.pi


def _psd(name, W, n):
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if W.shape == (1, n):
        W = np.diag(W[0])
    if W.shape != (n, n) or not np.all(np.isfinite(W)):
        raise InvalidInputError(f"{name} must be {n}x{n} (or a length-{n} diagonal)")
    if not np.allclose(W, W.T, atol=1e-12):
        raise InvalidInputError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(W).min() < -1e-12:
        raise InvalidInputError(f"{name} must be positive semidefinite")
    return W


def _sqrt_psd(W):
    vals, vecs = np.linalg.eigh(W)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


@dataclass(frozen=True)
class MpcConfig:
    control_horizon: int = 5
    prediction_horizon: int = 10
    step_dt: float = 0.1
    weight_Q: np.ndarray = field(default_factory=lambda: np.diag([25.0, 25.0]))
    weight_R: np.ndarray = field(default_factory=lambda: np.diag([2.0, 2.0, 2.0]))
    weight_S: np.ndarray = field(default_factory=lambda: np.diag([0.25, 0.25, 0.25]))
    u_min: np.ndarray = field(default_factory=lambda: np.zeros(3))
    u_max: np.ndarray = field(default_factory=lambda: np.full(3, 5.0))
    max_sqp_iters: int = 10
    kkt_tolerance: float = 1e-6
    predictor: str = "rosenbrock"  # or "euler"
    phi_gate: float = math.radians(2.0)

    def __post_init__(self):
        N, p = self.control_horizon, self.prediction_horizon
        if not (isinstance(N, (int, np.integer)) and isinstance(p, (int, np.integer)) and 1 <= N <= p):
            raise InvalidInputError(f"need integer horizons with 1 <= N <= p, got N={N}, p={p}")
        if not (self.step_dt > 0 and math.isfinite(self.step_dt)):
            raise InvalidInputError("step_dt must be > 0")
        object.__setattr__(self, "weight_Q", _psd("weight_Q", self.weight_Q, 2))
        object.__setattr__(self, "weight_R", _psd("weight_R", self.weight_R, 3))
        object.__setattr__(self, "weight_S", _psd("weight_S", self.weight_S, 3))
        lo = np.broadcast_to(np.asarray(self.u_min, dtype=float), (3,)).copy()
        hi = np.broadcast_to(np.asarray(self.u_max, dtype=float), (3,)).copy()
        if np.any(lo < 0) or np.any(lo >= hi) or not np.all(np.isfinite(hi)):
            raise InvalidInputError(f"need 0 <= u_min < u_max, got {lo}, {hi}")
        object.__setattr__(self, "u_min", lo)
        object.__setattr__(self, "u_max", hi)
        if self.max_sqp_iters < 1 or not self.kkt_tolerance > 0:
            raise InvalidInputError("max_sqp_iters must be >= 1 and kkt_tolerance > 0")
        if self.predictor not in ("rosenbrock", "euler"):
            raise InvalidInputError(f"predictor must be 'rosenbrock' or 'euler', got {self.predictor!r}")


def discretize(state, power, dt: float, model: WristModel):
    """One forward-Euler step of the plant equations."""
    is_state = isinstance(state, WristState)
    x = state.to_array() if is_state else np.asarray(state, dtype=float)
    if not (dt > 0):
        raise InvalidInputError("dt must be > 0")
    x_next = x + dt * state_derivative(x, power, model)
    return WristState.from_array(x_next) if is_state else x_next


def tracking_error(theta, phi, ref_theta, ref_phi, gate):
    """Pose error in degrees and its partials with respect to ``(theta, phi)``.

    A negative predicted bend is read as the folded pose. The direction
    error is wrapped to (-180, 180] and set to zero when either bend is
    below ``gate``.
    """
    sign = 1.0
    if theta < 0.0:
        theta, phi, sign = -theta, phi + math.pi, -1.0
    e_th = (theta - ref_theta) * DEG
    d = phi - ref_phi
    d = d - 2.0 * math.pi * math.ceil((d - math.pi) / (2.0 * math.pi))
    active = min(theta, ref_theta) >= gate
    e_ph = d * DEG if active else 0.0
    jac = np.array([[sign * DEG, 0.0], [0.0, DEG if active else 0.0]])
    return np.array([e_th, e_ph]), jac


@dataclass
class NmpcResult:
    u_star: np.ndarray
    predicted_cost: float
    u_sequence: np.ndarray  # (N, 3)
    iterations: int
    converged: bool
    kkt_residual: float
    warm_start_cost: float
    # (before, after) merit of each accepted step, both at that step's penalty weight
    merit_history: list = field(default_factory=list)
    used_warm_start: bool = False

    @property
    def warning(self) -> bool:
        return not self.converged


class _Problem:
    """Everything that stays fixed during one solve."""

    def __init__(self, x0, refs, prev_u, cfg: MpcConfig, model: WristModel):
        self.x0 = np.asarray(x0, dtype=float)
        self.refs = refs  # (p, 2)
        self.prev_u = np.asarray(prev_u, dtype=float)
        self.cfg = cfg
        self.p = model.packed
        self.implicit = cfg.predictor == "rosenbrock"
        self.sqQ = _sqrt_psd(cfg.weight_Q)
        self.sqR = _sqrt_psd(cfg.weight_R)
        self.sqS = _sqrt_psd(cfg.weight_S)
        self.N = cfg.control_horizon
        self.P = cfg.prediction_horizon

    def step(self, x, u, jac):
        return kernel.predictor(x, u, self.cfg.step_dt, self.p, self.implicit, jac)

    def input_at(self, U, k):
        return U[min(k, self.N - 1)]

    def rollout(self, U):
        S = np.empty((self.P + 1, 7))
        S[0] = self.x0
        for k in range(self.P):
            S[k + 1], _, _ = self.step(S[k], self.input_at(U, k), False)
        return S

    def input_residuals(self, U):
        prev = np.vstack([self.prev_u, U[:-1]])
        return np.concatenate([((U - prev) @ self.sqR.T).ravel(), (U @ self.sqS.T).ravel()])

    def cost(self, S, U):
        if not np.all(np.isfinite(S)):
            return math.inf
        c = 0.0
        for k in range(1, self.P + 1):
            e, _ = tracking_error(S[k, 0], S[k, 1], self.refs[k - 1, 0], self.refs[k - 1, 1], self.cfg.phi_gate)
            r = self.sqQ @ e
            c += float(r @ r)
        ri = self.input_residuals(U)
        return c + float(ri @ ri)


def _input_residual_jacobian(pb: _Problem):
    """Constant Jacobian of the input residuals with respect to vec(U)."""
    N = pb.N
    n = 3 * N
    JR = np.zeros((3 * N, n))
    JS = np.zeros((3 * N, n))
    for k in range(N):
        JR[3 * k:3 * k + 3, 3 * k:3 * k + 3] = pb.sqR
        if k > 0:
            JR[3 * k:3 * k + 3, 3 * (k - 1):3 * k] = -pb.sqR
        JS[3 * k:3 * k + 3, 3 * k:3 * k + 3] = pb.sqS
    return np.vstack([JR, JS])


def _sqp(pb: _Problem, U0: np.ndarray):
    cfg = pb.cfg
    N, P = pb.N, pb.P
    n = 3 * N
    lo = np.tile(cfg.u_min, N)
    hi = np.tile(cfg.u_max, N)
    JU = _input_residual_jacobian(pb)

    U = U0.copy()
    S = pb.rollout(U)
    mu = 1.0
    merit_hist = []
    converged = False
    kkt = math.inf
    it = 0
    for it in range(1, cfg.max_sqp_iters + 1):
        # linearise every shooting interval
        A = np.empty((P, 7, 7))
        B = np.empty((P, 7, 3))
        D = np.empty((P, 7))
        for k in range(P):
            Fk, A[k], B[k] = pb.step(S[k], pb.input_at(U, k), True)
            D[k] = Fk - S[k + 1]
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(D))):
            break
        defect = float(np.abs(D).sum())

        # condense: ds_k = G_k dU + c_k
        G = np.zeros((P + 1, 7, n))
        c = np.zeros((P + 1, 7))
        rows_r, rows_J = [], []
        grad_S = np.zeros((P + 1, 7))
        for k in range(P):
            j = min(k, N - 1)
            G[k + 1] = A[k] @ G[k]
            G[k + 1][:, 3 * j:3 * j + 3] += B[k]
            c[k + 1] = A[k] @ c[k] + D[k]
            e, E = tracking_error(S[k + 1, 0], S[k + 1, 1], pb.refs[k, 0], pb.refs[k, 1], cfg.phi_gate)
            QE = pb.sqQ @ E  # 2x2 on (theta, phi)
            r = pb.sqQ @ e
            rows_r.append(r + QE @ c[k + 1, :2])
            rows_J.append(QE @ G[k + 1][:2])
            grad_S[k + 1, :2] = 2.0 * (QE.T @ r)
        ri = pb.input_residuals(U)
        r0 = np.concatenate(rows_r + [ri])
        Jr = np.vstack(rows_J + [JU])

        H = Jr.T @ Jr + 1e-9 * np.eye(n)
        g = Jr.T @ r0
        u = U.ravel()
        qp = solve_box_qp(H, g, lo - u, hi - u, np.zeros(n))
        dU = qp.x
        dS = np.einsum("kij,j->ki", G, dU) + c

        kkt = max(float(np.abs(dU).max()), float(np.abs(D).max()))
        if kkt < cfg.kkt_tolerance:
            converged = True
            break

        # directional derivative of the cost along the step
        dcost = float((grad_S * dS).sum() + 2.0 * ri @ (JU @ dU))
        if defect > 0.0:
            mu = max(mu, 2.0 * max(dcost, 0.0) / defect + 1.0)
        merit0 = pb.cost(S, U) + mu * defect
        slope = dcost - mu * defect
        if slope >= 0.0:
            converged = kkt < 1e3 * cfg.kkt_tolerance
            break

        alpha = 1.0
        accepted = False
        while alpha >= 1e-4:
            Ut = (u + alpha * dU).reshape(N, 3)
            St = S + alpha * dS
            St[0] = pb.x0
            dt_def = 0.0
            ok = True
            for k in range(P):
                Fk, _, _ = pb.step(St[k], pb.input_at(Ut, k), False)
                if not np.all(np.isfinite(Fk)):
                    ok = False
                    break
                dt_def += float(np.abs(Fk - St[k + 1]).sum())
            if ok:
                mt = pb.cost(St, Ut) + mu * dt_def
                if mt <= merit0 + 1e-4 * alpha * slope:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            break
        U = np.clip(Ut, cfg.u_min, cfg.u_max)
        S = St
        merit_hist.append((merit0, mt))
    return U, it, converged, kkt, merit_hist


def nmpc_solve(
    x_init,
    reference,
    prev_u,
    cfg: MpcConfig,
    model: WristModel,
    warm_start: np.ndarray | None = None,
) -> NmpcResult:
    """Solve one receding-horizon problem.

    ``reference`` holds ``p`` poses (``WristPose`` or ``(theta, phi)`` in
    radians) for the nodes ``k = 1..p``. ``warm_start`` is an ``(N, 3)``
    input guess; by default ``prev_u`` is repeated.
    """
    x = x_init.to_array() if isinstance(x_init, WristState) else np.asarray(x_init, dtype=float)
    if x.shape != (7,) or not np.all(np.isfinite(x)):
        raise InvalidInputError("initial state must be a finite 7-vector")
    refs = np.array([[r.theta, r.phi] if isinstance(r, WristPose) else [float(r[0]), float(r[1])] for r in reference])
    if refs.shape != (cfg.prediction_horizon, 2):
        raise InvalidInputError(f"need {cfg.prediction_horizon} reference poses, got {len(refs)}")
    prev = np.asarray(prev_u, dtype=float).reshape(3)
    if np.any(prev < cfg.u_min - 1e-12) or np.any(prev > cfg.u_max + 1e-12):
        raise InvalidInputError(f"previous input {prev} outside [{cfg.u_min}, {cfg.u_max}]")

    pb = _Problem(x, refs, prev, cfg, model)
    if warm_start is None:
        U0 = np.tile(prev, (cfg.control_horizon, 1))
    else:
        U0 = np.clip(np.asarray(warm_start, dtype=float).reshape(cfg.control_horizon, 3), cfg.u_min, cfg.u_max)
    warm_cost = pb.cost(pb.rollout(U0), U0)

    U, iters, converged, kkt, merits = _sqp(pb, U0)
    cost = pb.cost(pb.rollout(U), U)
    used_warm = not cost <= warm_cost
    if used_warm:
        U, cost = U0, warm_cost
    if not converged:
        log.debug("SQP stopped after %d iterations, KKT residual %.3g", iters, kkt)
    return NmpcResult(
        u_star=U[0].copy(),
        predicted_cost=cost,
        u_sequence=U,
        iterations=iters,
        converged=converged,
        kkt_residual=kkt,
        warm_start_cost=warm_cost,
        merit_history=merits,
        used_warm_start=used_warm,
    )


class NmpcController:
    """Receding-horizon wrapper holding the warm start between ticks."""

    def __init__(self, cfg: MpcConfig, model: WristModel):
        self.cfg = cfg
        self.model = model
        self.prev_u = cfg.u_min.copy()
        self._warm = None
        self.last: NmpcResult | None = None

    def reset(self, prev_u=None):
        self.prev_u = self.cfg.u_min.copy() if prev_u is None else np.asarray(prev_u, dtype=float).copy()
        self._warm = None
        self.last = None

    def step(self, x_est, reference) -> np.ndarray:
        res = nmpc_solve(x_est, reference, self.prev_u, self.cfg, self.model, warm_start=self._warm)
        U = res.u_sequence
        self._warm = np.vstack([U[1:], U[-1:]])
        self.prev_u = res.u_star.copy()
        self.last = res
        return res.u_star

    def control(self, t, measured, x_est, trajectory) -> np.ndarray:
        dt = self.cfg.step_dt
        refs = [trajectory(t + k * dt) for k in range(1, self.cfg.prediction_horizon + 1)]
        return self.step(x_est, refs)
