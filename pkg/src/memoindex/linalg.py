"""Dense real linear algebra for least-squares training through R only.

Matrices are ``numpy.ndarray`` objects of dtype float64.  Everything here is a
pure function of its inputs.

The training chain is::

    R      = householder_qrd(X)          # Q is never formed
    beta   = R^-1 R^-T (X^T Y)           # solve_beta

which works because X^T X = R^T R.
"""
from __future__ import annotations

import threading
from collections import Counter

import numpy as np
from scipy.linalg.blas import dgemv, dger

from .errors import ShapeError, SingularError

__all__ = [
    "householder_qrd",
    "upper_tri_inverse",
    "matmul",
    "transpose",
    "matvec",
    "solve_beta",
    "gram",
    "factorization_counts",
]

ZERO_NORM = 1e-300
SINGULAR_RTOL = 1e-12

_counts: Counter = Counter()
_counts_lock = threading.Lock()


def _tally():
    name = threading.current_thread().name
    with _counts_lock:
        _counts[name] += 1


def factorization_counts(reset=False):
    """Number of ``householder_qrd`` calls per thread name."""
    with _counts_lock:
        out = dict(_counts)
        if reset:
            _counts.clear()
    return out


def _as_matrix(A, name="A"):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {A.shape}")
    return A


def _as_vector(v, name="v"):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {v.shape}")
    return v


def _check_finite(A, what):
    if not np.isfinite(A).all():
        raise FloatingPointError(f"{what} produced non-finite values")
    return A


def householder_qrd(X) -> np.ndarray:
    """Upper-triangular factor R of X (rows >= cols) by Householder reflections.

    Each step builds a reflector from the sub-column below the diagonal and
    applies it to the trailing columns as one dot-then-axpy sweep.  When the
    matrix is strictly tall the last column gets a reflector too, otherwise
    its sub-diagonal mass would be dropped from R.

    A sub-column whose norm underflows (below 1e-300) is already eliminated
    and is skipped.  There is no pivoting.  Rows of the result may differ in
    sign from other factorizations; compare ``R.T @ R`` instead.
    """
    A = _as_matrix(X, "X")
    m, n = A.shape
    if n < 1:
        raise ShapeError("X needs at least one column")
    if m < n:
        raise ShapeError(f"householder_qrd needs rows >= cols, got {m}x{n}")
    _tally()
    A = np.array(A, dtype=np.float64, order="F", copy=True)
    for i in range(min(n, m - 1)):
        col = A[i:, i]
        s = np.abs(col).max()
        if s < ZERO_NORM:
            continue
        # the reflector is scale-free; normalizing keeps ref @ ref from underflowing
        ref = col / s
        d = np.sqrt(ref @ ref)
        ref[0] += d if ref[0] >= 0.0 else -d
        gamma = -2.0 / (ref @ ref)
        sub = A[i:, i:]
        alpha = dgemv(gamma, sub, ref, trans=1)
        A[i:, i:] = dger(1.0, ref, alpha, a=sub, overwrite_a=1)
    R = np.triu(A[:n, :])
    return np.ascontiguousarray(R)


def upper_tri_inverse(R) -> np.ndarray:
    """Inverse of an upper-triangular matrix by row-wise back substitution."""
    R = _as_matrix(R, "R")
    p = R.shape[0]
    if R.shape != (p, p) or p == 0:
        raise ShapeError(f"R must be square and non-empty, got {R.shape}")
    diag = np.abs(np.diag(R))
    scale = diag.max()
    bad = np.flatnonzero(diag <= SINGULAR_RTOL * scale) if scale > 0 else [0]
    if len(bad):
        i = int(bad[0])
        raise SingularError(i, float(R[i, i]))
    inv = np.zeros((p, p))
    for i in range(p - 1, -1, -1):
        inv[i, i] = 1.0 / R[i, i]
        if i + 1 < p:
            inv[i, i + 1:] = -(R[i, i + 1:] @ inv[i + 1:, i + 1:]) / R[i, i]
    return _check_finite(inv, "upper_tri_inverse")


def matmul(A, B) -> np.ndarray:
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    if A.shape[1] != B.shape[0]:
        raise ShapeError(f"matmul: {A.shape} x {B.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = A @ B
    return _check_finite(out, "matmul")


def transpose(A) -> np.ndarray:
    A = _as_matrix(A, "A")
    return np.ascontiguousarray(A.T)


def matvec(A, v) -> np.ndarray:
    A = _as_matrix(A, "A")
    v = _as_vector(v, "v")
    if A.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: {A.shape} x {v.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = A @ v
    return _check_finite(out, "matvec")


def gram(R) -> np.ndarray:
    R = _as_matrix(R, "R")
    return R.T @ R


def solve_beta(R, xty) -> np.ndarray:
    """Least-squares coefficients ``R^-1 R^-T xty``.

    ``R`` must be the factor of the same X that produced ``xty = X^T Y``.
    Raises SingularError from the inversion.
    """
    R = _as_matrix(R, "R")
    xty = _as_vector(xty, "xty")
    if xty.shape[0] != R.shape[0]:
        raise ShapeError(f"xty length {xty.shape[0]} != R dim {R.shape[0]}")
    r_inv = upper_tri_inverse(R)
    return matvec(matmul(r_inv, transpose(r_inv)), xty)
