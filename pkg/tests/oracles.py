"""Slow, obviously-correct reference implementations used only by tests."""
import numpy as np


def naive_matmul(A, B):
    A = [list(map(float, r)) for r in np.asarray(A)]
    B = [list(map(float, r)) for r in np.asarray(B)]
    out = [[0.0] * len(B[0]) for _ in A]
    for i in range(len(A)):
        for j in range(len(B[0])):
            s = 0.0
            for k in range(len(B)):
                s += A[i][k] * B[k][j]
            out[i][j] = s
    return np.array(out)


def naive_matvec(A, v):
    return np.array([sum(float(a) * float(b) for a, b in zip(row, v)) for row in np.asarray(A)])


def gram_schmidt_r(X):
    """R from classical Gram-Schmidt (full column rank only)."""
    X = np.asarray(X, dtype=np.float64)
    m, n = X.shape
    Q = np.zeros((m, n))
    R = np.zeros((n, n))
    for j in range(n):
        v = X[:, j].copy()
        for i in range(j):
            R[i, j] = Q[:, i] @ X[:, j]
            v -= R[i, j] * Q[:, i]
        R[j, j] = np.sqrt(v @ v)
        Q[:, j] = v / R[j, j]
    return R


def gauss_solve(A, b):
    """Gaussian elimination with partial pivoting."""
    A = np.array(A, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    n = A.shape[0]
    M = np.hstack((A, b.reshape(n, 1)))
    for c in range(n):
        piv = c + int(np.argmax(np.abs(M[c:, c])))
        M[[c, piv]] = M[[piv, c]]
        for r in range(c + 1, n):
            M[r, c:] -= M[r, c] / M[c, c] * M[c, c:]
    x = np.zeros(n)
    for r in range(n - 1, -1, -1):
        x[r] = (M[r, n] - M[r, r + 1:n] @ x[r + 1:]) / M[r, r]
    return x


def normal_equation_beta(X, Y):
    X = np.asarray(X, dtype=np.float64)
    return gauss_solve(X.T @ X, X.T @ np.asarray(Y, dtype=np.float64))


def back_substitution_inverse(R):
    """Inverse of upper-triangular R, one unit vector at a time."""
    R = np.asarray(R, dtype=np.float64)
    p = R.shape[0]
    inv = np.zeros((p, p))
    for c in range(p):
        e = np.zeros(p)
        e[c] = 1.0
        x = np.zeros(p)
        for r in range(p - 1, -1, -1):
            x[r] = (e[r] - R[r, r + 1:] @ x[r + 1:]) / R[r, r]
        inv[:, c] = x
    return inv


def conditioned_matrix(rng, rows, cols, cond):
    """Random rows x cols matrix with 2-norm condition number ``cond``."""
    U, _ = np.linalg.qr(rng.standard_normal((rows, cols)))
    V, _ = np.linalg.qr(rng.standard_normal((cols, cols)))
    s = np.geomspace(1.0, 1.0 / cond, cols) if cols > 1 else np.ones(1)
    return (U * s) @ V.T


def fro_rel(A, B):
    return np.linalg.norm(A - B) / np.linalg.norm(B)
