"""Hand-rolled iterative linear algebra used by the certificate and solvers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["CGResult", "conjugate_gradient"]


@dataclass
class CGResult:
    x: np.ndarray
    residual: float
    iterations: int
    converged: bool


def conjugate_gradient(
    apply_a: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    tol: float = 1e-12,
    max_iter: int | None = None,
    x0: np.ndarray | None = None,
) -> CGResult:
    """Solve A x = b for symmetric positive definite A, matrix-free.

    Stops when |A x - b| <= tol (absolute).  The residual is recomputed from
    a fresh matvec before returning, so the reported value is trustworthy
    even after many recurrence steps.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    if max_iter is None:
        max_iter = max(10 * n, 100)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_a(x)
    p = r.copy()
    rs = float(r @ r)
    iterations = 0
    if np.sqrt(rs) <= tol:
        return CGResult(x, float(np.linalg.norm(b - apply_a(x))), 0, True)
    for iterations in range(1, max_iter + 1):
        ap = apply_a(p)
        denom = float(p @ ap)
        if denom <= 0.0:
            # Operator not positive definite along p; bail out honestly.
            break
        alpha = rs / denom
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        if np.sqrt(rs_new) <= tol:
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    true_res = float(np.linalg.norm(b - apply_a(x)))
    return CGResult(x, true_res, iterations, true_res <= tol)
