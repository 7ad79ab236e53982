"""Compiled Gauss-Seidel sweeps on CSR arrays."""

import numba as nb
import numpy as np

_jit = {"nogil": True, "cache": True}


@nb.njit(**_jit)
def gs_forward(indptr, indices, data, diag, b, x):
    """One forward Gauss-Seidel sweep for ``A x = b``, in place on ``x``."""
    n = b.shape[0]
    for i in range(n):
        s = b[i]
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j != i:
                s -= data[p] * x[j]
        x[i] = s / diag[i]


@nb.njit(**_jit)
def gs_backward(indptr, indices, data, diag, b, x):
    """One backward Gauss-Seidel sweep (reverse row order), in place on ``x``."""
    n = b.shape[0]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j != i:
                s -= data[p] * x[j]
        x[i] = s / diag[i]


@nb.njit(**_jit)
def sgs_apply(indptr, indices, data, diag, r):
    """``(L+D)^{-T} D (L+D)^{-1} r``: forward sweep from zero, then backward sweep."""
    x = np.zeros_like(r)
    gs_forward(indptr, indices, data, diag, r, x)
    gs_backward(indptr, indices, data, diag, r, x)
    return x
