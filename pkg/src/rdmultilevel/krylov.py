"""Preconditioned conjugate gradients, CG-Lanczos eigenvalue estimates and
stationary (Richardson) iteration with a preconditioner as the solver.

Iteration counts are numbers of applications of ``A`` to a search
direction; the stopping test is ``||r_k|| / ||r_0|| <= tol`` in the
Euclidean norm unless ``norm="preconditioned"`` is requested.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import DefinitenessError, DivergenceError, InsufficientDataError

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 2000


@dataclass
class SolveReport:
    iterations: int
    residual_history: list
    solution: np.ndarray
    converged: bool
    preconditioned_history: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    lambda_min_est: float = float("nan")
    lambda_max_est: float = float("nan")
    conv_factor: float = float("nan")

    @property
    def kappa_est(self) -> float:
        return self.lambda_max_est / self.lambda_min_est

    @property
    def relative_residuals(self) -> np.ndarray:
        h = np.asarray(self.residual_history, dtype=float)
        return h / h[0] if h.size and h[0] > 0 else h

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "conv_factor": self.conv_factor,
            "lambda_min_est": self.lambda_min_est,
            "lambda_max_est": self.lambda_max_est,
            "kappa_est": self.kappa_est,
        }


def _matvec(A) -> Callable[[np.ndarray], np.ndarray]:
    return A if callable(A) and not hasattr(A, "shape") else (lambda x: A @ x)


def lanczos_tridiagonal(alphas, betas) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and off-diagonal of the Lanczos matrix implied by CG coefficients."""
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas, dtype=float)[: a.size - 1]
    diag = 1.0 / a
    diag[1:] += b / a[:-1]
    off = np.sqrt(b) / a[:-1]
    return diag, off


def lanczos_estimates(alphas, betas) -> tuple[float, float]:
    """Extremal Ritz values of the CG-Lanczos tridiagonal matrix."""
    if len(alphas) < 2:
        raise InsufficientDataError("need at least 2 CG iterations for Lanczos estimates")
    return _ritz_extremes(alphas, betas)


def _ritz_extremes(alphas, betas) -> tuple[float, float]:
    d, e = lanczos_tridiagonal(alphas, betas)
    if d.size == 1:
        return float(d[0]), float(d[0])
    ev = scipy.linalg.eigvalsh_tridiagonal(d, e)
    return float(ev[0]), float(ev[-1])


def pcg(
    A,
    B: Callable[[np.ndarray], np.ndarray] | None,
    b: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    x0: np.ndarray | None = None,
    norm: str = "l2",
) -> SolveReport:
    """Preconditioned conjugate gradient method.

    Parameters
    ----------
    A : sparse matrix, ndarray or callable
        SPD operator.
    B : callable or None
        SPD preconditioner ``r -> B r``; None means identity.
    b : ndarray
        Right-hand side.
    tol : float
        Relative residual reduction that stops the iteration.
    max_iter : int
        Iteration cap; on reaching it the report has ``converged=False``.
    x0 : ndarray, optional
        Initial guess (zeros by default).
    norm : {"l2", "preconditioned"}
        Residual norm used by the stopping test. Both histories are recorded.

    Returns
    -------
    SolveReport
    """
    Av = _matvec(A)
    Bv = B if B is not None else (lambda r: r.copy())
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - Av(x) if x0 is not None else b.copy()
    z = Bv(r)
    rz = float(r @ z)
    hist = [float(np.linalg.norm(r))]
    phist = [float(np.sqrt(max(rz, 0.0)))]
    alphas, betas = [], []
    if hist[0] == 0.0:
        return SolveReport(0, hist, x, True, phist, conv_factor=0.0)
    if rz <= 0:
        raise DefinitenessError(f"r^T B r = {rz:.3e} <= 0: preconditioner is not positive definite")
    p = z.copy()
    track = hist if norm == "l2" else phist
    converged = False
    for _ in range(max_iter):
        Ap = Av(p)
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise DefinitenessError(f"p^T A p = {pAp:.3e} <= 0: operator is not positive definite")
        alpha = rz / pAp
        alphas.append(alpha)
        x += alpha * p
        r -= alpha * Ap
        z = Bv(r)
        rz_new = float(r @ z)
        hist.append(float(np.linalg.norm(r)))
        phist.append(float(np.sqrt(max(rz_new, 0.0))))
        if track[-1] <= tol * track[0]:
            converged = True
            break
        if rz_new <= 0:
            raise DefinitenessError(f"r^T B r = {rz_new:.3e} <= 0: preconditioner is not positive definite")
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new

    lmin, lmax = _ritz_extremes(alphas, betas)
    k = len(alphas)
    factor = (track[-1] / track[0]) ** (1.0 / k) if track[-1] > 0 else 0.0
    return SolveReport(
        iterations=k,
        residual_history=hist,
        solution=x,
        converged=converged,
        preconditioned_history=phist,
        alphas=alphas,
        betas=betas,
        lambda_min_est=lmin,
        lambda_max_est=lmax,
        conv_factor=factor,
    )


def stationary_solve(
    A,
    B: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    window: int = 5,
    divergence_steps: int = 10,
) -> SolveReport:
    """Iterate ``u <- u + B (b - A u)`` from zero.

    The residual is updated recursively (``r <- r - A B r``), as in CG, so
    the reduction is not capped by the rounding floor of ``b - A u``.
    ``conv_factor`` is the geometric mean of successive residual ratios over
    the last ``window`` iterations.
    """
    Av = _matvec(A)
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    r = b.copy()
    hist = [float(np.linalg.norm(r))]
    if hist[0] == 0.0:
        return SolveReport(0, hist, x, True, conv_factor=0.0)
    growth = 0
    converged = False
    for _ in range(max_iter):
        z = B(r)
        x += z
        r -= Av(z)
        hist.append(float(np.linalg.norm(r)))
        growth = growth + 1 if hist[-1] > hist[-2] else 0
        if growth >= divergence_steps:
            raise DivergenceError(f"residual grew for {growth} consecutive iterations")
        if hist[-1] <= tol * hist[0]:
            converged = True
            break
    k = len(hist) - 1
    w = min(window, k)
    if hist[-1] == 0.0:
        factor = 0.0
    else:
        factor = (hist[-1] / hist[-1 - w]) ** (1.0 / w)
    return SolveReport(k, hist, x, converged, conv_factor=factor)
