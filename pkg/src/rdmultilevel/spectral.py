"""Dense spectra of preconditioned operators and effective condition numbers.

The eigenvalues of ``BA`` are those of the symmetric pencil ``(A, B^{-1})``;
with ``B = L L^T`` they are the eigenvalues of ``L^T A L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import DefinitenessError, StructureError

DEFAULT_N_LIMIT = 4000
DEFAULT_GAP_THRESHOLD = 10.0
LOW_END_FRACTION = 0.05


@dataclass
class SpectralReport:
    """Ascending spectrum of ``BA`` with derived quantities."""

    eigenvalues: np.ndarray
    m_detected: int = 0
    gap_location: tuple = (0, 1.0)
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    @property
    def kappa(self) -> float:
        return float(self.eigenvalues[-1] / self.eigenvalues[0])

    def kappa_m(self, m: int) -> float:
        return effective_condition(self, m)

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])


def _dense(X, n: int) -> np.ndarray:
    if X is None:
        return np.eye(n)
    if sp.issparse(X):
        return X.toarray()
    if isinstance(X, np.ndarray):
        return X
    if hasattr(X, "as_dense"):
        return X.as_dense(n)
    return np.column_stack([X(e) for e in np.eye(n)])


def dense_spectrum(A, B=None, n_limit: int = DEFAULT_N_LIMIT, gap_threshold: float = DEFAULT_GAP_THRESHOLD) -> SpectralReport:
    """Full spectrum of ``BA``.

    Parameters
    ----------
    A : sparse matrix or ndarray
        SPD operator.
    B : Preconditioner, callable, matrix or None
        SPD preconditioner; materialized column by column if callable.
    n_limit : int
        Largest size accepted; beyond it use the CG-Lanczos estimates.
    """
    n = A.shape[0]
    if n > n_limit:
        raise StructureError(f"N = {n} exceeds the dense limit {n_limit}; use Lanczos estimates from pcg instead")
    Ad = _dense(A, n)
    Bd = _dense(B, n)
    Bd = 0.5 * (Bd + Bd.T)
    try:
        Lb = scipy.linalg.cholesky(Bd, lower=True)
    except np.linalg.LinAlgError:
        raise DefinitenessError("preconditioner is not positive definite") from None
    S = Lb.T @ Ad @ Lb
    ev = scipy.linalg.eigvalsh(0.5 * (S + S.T))
    if ev[0] <= 0:
        raise DefinitenessError(f"BA has a non-positive eigenvalue {ev[0]:.3e}")
    report = SpectralReport(ev)
    report.gap_location = largest_low_gap(ev)
    report.m_detected = detect_isolated(report, gap_threshold)
    return report


def effective_condition(report: SpectralReport, m: int) -> float:
    """``lambda_N / lambda_{m+1}``."""
    ev = report.eigenvalues
    if not 0 <= m <= ev.size - 1:
        raise IndexError(f"m = {m} outside [0, {ev.size - 1}]")
    return float(ev[-1] / ev[m])


def largest_low_gap(eigenvalues: np.ndarray, fraction: float = LOW_END_FRACTION) -> tuple[int, float]:
    """1-based position ``i`` and value of the largest ``lambda_{i+1}/lambda_i`` in the low end."""
    ev = np.asarray(eigenvalues, dtype=float)
    if ev.size < 2:
        return 0, 1.0
    count = min(ev.size - 1, max(1, math.ceil(fraction * ev.size)))
    ratios = ev[1:count + 1] / ev[:count]
    i = int(np.argmax(ratios))
    return i + 1, float(ratios[i])


def detect_isolated(report: SpectralReport, gap_threshold: float = DEFAULT_GAP_THRESHOLD) -> int:
    """Number of small eigenvalues separated from the rest by a gap ``>= gap_threshold``."""
    i, ratio = largest_low_gap(report.eigenvalues)
    return i if ratio >= gap_threshold else 0


def constrained_rayleigh_min(A, M, C: np.ndarray) -> float:
    """``min v^T A v / v^T M v`` over ``{v : C v = 0}``.

    With ``M = B^{-1}`` this is a lower bound witness for the min-max
    characterization: if ``C`` has ``m`` rows the result is at most
    ``lambda_{m+1}(BA)``.
    """
    n = A.shape[0]
    Ad, Md = _dense(A, n), _dense(M, n)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    Z = scipy.linalg.null_space(C) if C.size else np.eye(n)
    return float(scipy.linalg.eigh(Z.T @ Ad @ Z, Z.T @ Md @ Z, eigvals_only=True)[0])
