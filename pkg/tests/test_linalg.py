import threading

import numpy as np
import pytest

from memoindex.errors import ShapeError, SingularError
from memoindex.linalg import (factorization_counts, gram, householder_qrd, matmul, matvec,
                              solve_beta, transpose, upper_tri_inverse)
from oracles import (back_substitution_inverse, conditioned_matrix, fro_rel, gram_schmidt_r,
                     naive_matmul, naive_matvec, normal_equation_beta)


def test_qrd_identity():
    R = householder_qrd(np.eye(3))
    assert np.array_equal(R.T @ R, np.eye(3))


def test_qrd_single_column_norm():
    R = householder_qrd([[3.0], [4.0]])
    assert R.shape == (1, 1)
    assert abs(abs(R[0, 0]) - 5.0) < 1e-12


def test_qrd_small_gram_and_gram_schmidt():
    X = np.array([[1, 0], [1, 1], [1, 2], [1, 3]], dtype=float)
    R = householder_qrd(X)
    assert np.abs(R.T @ R - [[4, 6], [6, 14]]).max() <= 1e-10
    # Gram-Schmidt R has a positive diagonal; match row signs before comparing
    gs = gram_schmidt_r(X)
    assert np.allclose(R * np.sign(np.diag(R))[:, None], gs, atol=1e-10)


def test_qrd_structural_zeros(rng):
    R = householder_qrd(rng.standard_normal((40, 7)))
    assert np.all(R[np.tril_indices(7, -1)] == 0.0)


def test_qrd_tall_last_column_reflected():
    # the final column has mass below the diagonal; dropping its reflector
    # would lose it from R
    X = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    R = householder_qrd(X)
    assert np.allclose(R.T @ R, X.T @ X, atol=1e-14)


def test_qrd_zero_column_is_skipped():
    X = np.zeros((5, 3))
    X[:, 0] = 1.0
    X[:, 2] = np.arange(5)
    R = householder_qrd(X)
    assert np.all(np.isfinite(R))
    assert np.allclose(R.T @ R, X.T @ X, atol=1e-12)
    with pytest.raises(SingularError):
        upper_tri_inverse(R)


def test_qrd_tiny_column_does_not_overflow(rng):
    # squared norms of these columns underflow to zero
    X = rng.standard_normal((6, 3))
    X[:, 1] *= 1e-170
    X[2:, 2] = 1e-200
    with np.errstate(all="raise"):
        R = householder_qrd(X)
    assert np.all(np.isfinite(R))
    assert fro_rel(R.T @ R, X.T @ X) <= 1e-12
    ref = np.abs(np.diag(np.linalg.qr(X, mode="r")))
    assert np.allclose(np.abs(np.diag(R)), ref, rtol=1e-10, atol=0)


def test_qrd_square_and_wide():
    X = np.array([[2.0, 1.0], [1.0, 3.0]])
    R = householder_qrd(X)
    assert np.allclose(R.T @ R, X.T @ X)
    with pytest.raises(ShapeError):
        householder_qrd(np.ones((2, 3)))
    with pytest.raises(ShapeError):
        householder_qrd(np.ones(3))


@pytest.mark.parametrize("rows,cols", [(1, 1), (2, 2), (97, 96), (500, 33), (10_000, 96)])
def test_qrd_gram_property(rng, rows, cols):
    X = rng.standard_normal((rows, cols)) * rng.uniform(0.1, 100, cols)
    R = householder_qrd(X)
    G = X.T @ X
    assert np.linalg.norm(R.T @ R - G) <= 1e-9 * np.linalg.norm(G)


def test_factorization_counts_are_per_thread():
    factorization_counts(reset=True)
    t = threading.Thread(target=householder_qrd, args=(np.eye(2),), name="counter-probe")
    t.start()
    t.join()
    counts = factorization_counts()
    assert counts.get("counter-probe") == 1
    assert counts.get(threading.current_thread().name, 0) == 0


def test_inverse_examples():
    assert np.array_equal(upper_tri_inverse(np.eye(4)), np.eye(4))
    assert np.array_equal(upper_tri_inverse([[2.0, 0.0], [0.0, 4.0]]), [[0.5, 0.0], [0.0, 0.25]])
    R = np.array([[1.0, 2.0], [0.0, 3.0]])
    inv = upper_tri_inverse(R)
    assert np.allclose(inv, [[1.0, -2.0 / 3.0], [0.0, 1.0 / 3.0]], atol=1e-15)
    assert np.allclose(inv, back_substitution_inverse(R))
    assert np.allclose(R @ inv, np.eye(2), atol=1e-15)


def test_inverse_residual_random(rng):
    for _ in range(50):
        p = int(rng.integers(1, 40))
        R = householder_qrd(conditioned_matrix(rng, p + 5, p, 10 ** rng.uniform(0, 5)))
        inv = upper_tri_inverse(R)
        assert np.all(np.tril(inv, -1) == 0)
        assert np.linalg.norm(R @ inv - np.eye(p)) <= 1e-10 * p


def test_inverse_singular_and_shape():
    with pytest.raises(SingularError) as err:
        upper_tri_inverse([[1.0, 1.0], [0.0, 1e-14]])
    assert err.value.index == 1
    with pytest.raises(ShapeError):
        upper_tri_inverse(np.ones((2, 3)))


def test_matmul_transpose_matvec(rng):
    B = rng.standard_normal((2, 3))
    assert np.array_equal(matmul(np.eye(2), B), B)
    assert np.array_equal(matmul([[1, 2], [3, 4]], [[5], [6]]), [[17], [39]])
    A, C = rng.standard_normal((5, 3)), rng.standard_normal((3, 2))
    assert np.allclose(matmul(A, C), naive_matmul(A, C), rtol=1e-12)
    with pytest.raises(ShapeError):
        matmul(A, A)

    assert np.array_equal(transpose(np.eye(3)), np.eye(3))
    assert transpose([[1.0, 2.0, 3.0]]).shape == (3, 1)
    assert np.array_equal(transpose(transpose(A)), A)

    assert np.array_equal(matvec(np.eye(2), [7, 9]), [7, 9])
    assert np.array_equal(matvec([[1, 1], [1, 2]], [1, 1]), [2, 3])
    M, v = rng.standard_normal((6, 4)), rng.standard_normal(4)
    assert np.allclose(matvec(M, v), naive_matvec(M, v), rtol=1e-12)
    with pytest.raises(ShapeError):
        matvec(M, np.ones(3))


def test_non_finite_results_raise():
    with pytest.raises(FloatingPointError):
        matmul([[1e308]], [[1e308]])


def test_solve_beta_examples():
    X = np.array([[1, 0], [1, 1], [1, 2]], dtype=float)
    R = householder_qrd(X)
    assert np.allclose(solve_beta(R, X.T @ [1.0, 3.0, 5.0]), [1.0, 2.0], atol=1e-12)
    assert np.array_equal(solve_beta(R, X.T @ np.zeros(3)), [0.0, 0.0])
    with pytest.raises(ShapeError):
        solve_beta(R, np.ones(3))


def test_solve_beta_frozen_value():
    # 50x4 system from a fixed generator, solved once with the Gaussian
    # elimination oracle and pinned
    g = np.random.default_rng(7)
    X = g.standard_normal((50, 4))
    Y = g.standard_normal(50)
    beta = solve_beta(householder_qrd(X), X.T @ Y)
    frozen = np.array([-0.21012164838432604, -0.40528699491720455,
                       0.013337444343683339, -0.09854474730319575])
    assert np.allclose(beta, frozen, rtol=1e-10)


def test_solve_beta_vs_normal_equations(rng):
    for _ in range(100):
        cols = int(rng.integers(2, 12))
        rows = int(rng.integers(cols, 200))
        X = conditioned_matrix(rng, rows, cols, 10 ** rng.uniform(0, 3))
        Y = rng.standard_normal(rows)
        beta = solve_beta(householder_qrd(X), X.T @ Y)
        ref = normal_equation_beta(X, Y)
        assert np.linalg.norm(beta - ref) <= 1e-8 * np.linalg.norm(ref)


def test_gram_helper(rng):
    X = rng.standard_normal((20, 4))
    assert fro_rel(gram(householder_qrd(X)), X.T @ X) < 1e-13
