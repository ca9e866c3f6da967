"""Box-constrained convex QP by projected Newton with an active set.

Minimises ``0.5 x'Hx + g'x`` subject to ``lower <= x <= upper``. At each
iteration the variables sitting on a bound with the gradient pushing
outward are clamped, a Newton step is taken on the free ones, and an
Armijo search along the projected path keeps the iterate feasible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ModelAssemblyError

__all__ = ["BoxQpResult", "solve_box_qp"]


@dataclass
class BoxQpResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool
    free: np.ndarray  # bool mask of variables off their bounds at exit


def _value(H, g, x):
    return float(x @ g + 0.5 * x @ H @ x)


def solve_box_qp(
    H: np.ndarray,
    g: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    x0: np.ndarray | None = None,
    *,
    max_iter: int = 100,
    grad_tol: float = 1e-10,
    rel_improve: float = 1e-12,
) -> BoxQpResult:
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = g.size
    if H.shape != (n, n) or lower.shape != (n,) or upper.shape != (n,):
        raise ValueError("inconsistent QP dimensions")
    if np.any(lower > upper):
        # box constraints alone are always feasible unless the box is empty
        raise ModelAssemblyError("QP box is empty: lower > upper")

    x = np.clip(np.zeros(n) if x0 is None else np.asarray(x0, dtype=float), lower, upper)
    value = _value(H, g, x)
    clamped = np.zeros(n, dtype=bool)
    chol = None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad = g + H @ x
        old_clamped = clamped
        clamped = ((x <= lower) & (grad > 0)) | ((x >= upper) & (grad < 0))
        free = ~clamped
        if not free.any():
            converged = True
            break
        if chol is None or np.any(old_clamped != clamped):
            try:
                chol = np.linalg.cholesky(H[np.ix_(free, free)])
            except np.linalg.LinAlgError as exc:
                raise ModelAssemblyError("QP Hessian is not positive definite on the free set") from exc
        if np.linalg.norm(grad[free]) < grad_tol:
            converged = True
            break

        # Newton point on the free subspace with clamped variables fixed
        rhs = g[free] + H[np.ix_(free, clamped)] @ x[clamped]
        target = -np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
        search = np.zeros(n)
        search[free] = target - x[free]
        slope = float(search @ grad)
        if slope >= 0.0:
            converged = True  # no descent left at numerical precision
            break

        step = 1.0
        while True:
            xc = np.clip(x + step * search, lower, upper)
            vc = _value(H, g, xc)
            if (vc - value) / (step * slope) >= 0.1 or step < 1e-20:
                break
            step *= 0.6
        if step < 1e-20:
            break
        improvement = value - vc
        x, value = xc, vc
        if improvement <= rel_improve * max(1.0, abs(value)):
            converged = True
            break
    free = ~(((x <= lower) & (g + H @ x > 0)) | ((x >= upper) & (g + H @ x < 0)))
    return BoxQpResult(x=x, value=value, iterations=it, converged=converged, free=free)
