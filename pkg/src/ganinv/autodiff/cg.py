"""Conjugate gradients for symmetric operators given as callables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ganinv.errors import NumericError, ShapeError


@dataclass
class CGResult:
    x: np.ndarray
    converged: bool
    iterations: int
    residual: float  # ‖(A + damping·I)x − b‖₂ of the returned iterate
    indefinite: bool = False


def cg_solve(apply_a, b, tol=1e-10, max_iter=None, damping=0.0) -> CGResult:
    """Solve ``(A + damping·I) x = b`` starting from zero.

    Stops once the residual norm is at most ``tol * ‖b‖``.  When curvature
    along a search direction is not positive the iteration stops and the
    best iterate seen so far is returned with ``indefinite`` set.
    """
    if damping < 0:
        raise ValueError("damping must be non-negative")
    b = np.asarray(b, dtype=np.float64)
    shape = b.shape
    n = b.size
    if max_iter is None:
        max_iter = 2 * n

    def op(v):
        out = np.asarray(apply_a(v.reshape(shape)), dtype=np.float64)
        if out.shape != shape:
            raise ShapeError(f"operator returned {out.shape}, expected {shape}")
        out = out.reshape(-1)
        if damping:
            out = out + damping * v
        return out

    bf = b.reshape(-1)
    bnorm = float(np.linalg.norm(bf))
    x = np.zeros(n)
    if bnorm == 0.0:
        return CGResult(x.reshape(shape), True, 0, 0.0)

    r = bf.copy()
    p = r.copy()
    rr = float(r @ r)
    best_x, best_res = x.copy(), bnorm
    target = tol * bnorm
    for it in range(1, max_iter + 1):
        ap = op(p)
        curv = float(p @ ap)
        if not np.isfinite(curv):
            raise NumericError("non-finite curvature in conjugate gradients")
        if curv <= 0.0:
            return CGResult(best_x.reshape(shape), False, it - 1, best_res, indefinite=True)
        alpha = rr / curv
        x = x + alpha * p
        r = r - alpha * ap
        rr_new = float(r @ r)
        res = float(np.sqrt(rr_new))
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= target:
            # recursive residual drifts; confirm against the true residual
            true_res = float(np.linalg.norm(bf - op(x)))
            if true_res <= target:
                return CGResult(x.reshape(shape), True, it, true_res)
            r = bf - op(x)
            rr_new = float(r @ r)
            p = r.copy()
            rr = rr_new
            continue
        p = r + (rr_new / rr) * p
        rr = rr_new
    true_res = float(np.linalg.norm(bf - op(best_x)))
    return CGResult(best_x.reshape(shape), true_res <= target, max_iter, true_res)
