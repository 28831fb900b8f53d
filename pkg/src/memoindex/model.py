"""Per-node linear models: prediction, error bounds and training entry points."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import EmptyTrainingSet, ShapeError, SingularError
from .iqrd import MemoizedFactor, absorb, empty_factor, merge_factors, parallel_qrd, xty_accumulate
from .keycodec import EncodedKey, features_from_codes
from .linalg import SINGULAR_RTOL, householder_qrd, solve_beta

__all__ = [
    "LinearModel",
    "TrainResult",
    "predict",
    "fit_bounds",
    "fit_bounds_features",
    "round_half_away",
    "robust_beta",
    "cold_train",
    "incre_train",
    "MemoizedLinearRegression",
]


def round_half_away(x):
    """Round to nearest integer, ties away from zero (scalar or array)."""
    if np.ndim(x) == 0:
        r = math.floor(abs(x) + 0.5)
        return r if x >= 0 else -r
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class LinearModel:
    """beta over ``key_len`` byte features plus intercept, with search bounds.

    Every trained key at true slot ``t`` satisfies
    ``position(key) + err_min <= t <= position(key) + err_max``.
    """

    beta: np.ndarray
    err_min: int = 0
    err_max: int = 0
    mean_abs_err: float = 0.0
    epoch: int = 0
    _w: np.ndarray = field(init=False, repr=False, compare=False)
    _b: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        beta = np.array(self.beta, dtype=np.float64)
        if beta.ndim != 1 or beta.shape[0] < 2:
            raise ShapeError(f"beta must be 1-D with at least 2 entries, got {beta.shape}")
        if not (self.err_min <= 0 <= self.err_max):
            raise ValueError(f"bounds must bracket 0, got [{self.err_min}, {self.err_max}]")
        beta.flags.writeable = False
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "err_min", int(self.err_min))
        object.__setattr__(self, "err_max", int(self.err_max))
        object.__setattr__(self, "_w", beta[:-1])
        object.__setattr__(self, "_b", float(beta[-1]))

    @classmethod
    def constant(cls, key_len: int, value: float = 0.0, epoch: int = 0) -> "LinearModel":
        beta = np.zeros(key_len + 1)
        beta[-1] = value
        return cls(beta, epoch=epoch)

    @property
    def key_len(self) -> int:
        return self.beta.shape[0] - 1

    def predict_key(self, key: bytes) -> float:
        k = self._w.shape[0]
        return float(np.frombuffer(key[:k].ljust(k, b"\0"), dtype=np.uint8) @ self._w) + self._b

    def position(self, key: bytes, n: int) -> int:
        """Predicted slot, rounded and clamped to ``[0, n-1]``."""
        x = self.predict_key(key)
        r = math.floor(abs(x) + 0.5)
        if x < 0:
            r = -r
        if r < 0:
            return 0
        return r if r < n else n - 1

    def positions(self, codes: np.ndarray, n: int) -> np.ndarray:
        raw = codes @ self._w + self._b
        return np.clip(round_half_away(raw), 0, max(n - 1, 0)).astype(np.int64)

    def with_bounds(self, err_min, err_max, mean_abs_err, epoch=None) -> "LinearModel":
        return LinearModel(self.beta, err_min, err_max, mean_abs_err,
                           self.epoch if epoch is None else epoch)


def predict(m: LinearModel, k: EncodedKey) -> float:
    if k.features.shape[0] != m.beta.shape[0]:
        raise ShapeError(f"key has {k.features.shape[0]} features, model {m.beta.shape[0]}")
    return float(k.features @ m.beta)


def fit_bounds_features(m: LinearModel, X, positions, n_slots: Optional[int] = None) -> LinearModel:
    """Bounds from a feature matrix whose last column is the intercept."""
    X = np.asarray(X, dtype=np.float64)
    t = np.asarray(positions, dtype=np.float64)
    if t.shape[0] == 0:
        raise EmptyTrainingSet("fit_bounds needs at least one key")
    if X.ndim != 2 or X.shape[0] != t.shape[0] or X.shape[1] != m.beta.shape[0]:
        raise ShapeError(f"features {X.shape} vs positions {t.shape} vs beta {m.beta.shape}")
    n = int(t.max()) + 1 if n_slots is None else int(n_slots)
    pred = np.clip(round_half_away(X @ m.beta), 0, max(n - 1, 0))
    return _bounds_from_residual(m, t - pred)


def _bounds_from_residual(m, err):
    return m.with_bounds(min(0, int(err.min())), max(0, int(err.max())),
                         float(np.abs(err).mean()))


def fit_bounds_codes(m: LinearModel, codes: np.ndarray, n_slots: Optional[int] = None) -> LinearModel:
    """Bounds for a sorted node whose row ``i`` sits at slot ``i``."""
    n = codes.shape[0]
    if n == 0:
        raise EmptyTrainingSet("fit_bounds needs at least one key")
    n_slots = n if n_slots is None else n_slots
    err = np.arange(n, dtype=np.float64) - m.positions(codes, n_slots)
    return _bounds_from_residual(m, err)


def fit_bounds(m: LinearModel, keys, positions, n_slots: Optional[int] = None) -> LinearModel:
    """Widen ``m``'s bounds so every (key, position) pair is inside its window."""
    if len(keys) == 0:
        raise EmptyTrainingSet("fit_bounds needs at least one key")
    if isinstance(keys, np.ndarray):
        X = keys
    else:
        X = np.vstack([k.features for k in keys])
    return fit_bounds_features(m, X, positions, n_slots)


# ---------------------------------------------------------------------------
# training entry points


def robust_beta(R, xty):
    """``solve_beta`` that degrades on rank deficiency.

    Columns whose diagonal in R is numerically zero are dependent on earlier
    columns; they get a zero coefficient and the remaining columns are
    re-solved from the restricted factor.  Returns ``(beta, full_rank)``.
    """
    try:
        return solve_beta(R, xty), True
    except SingularError:
        pass
    p = R.shape[0]
    keep = np.arange(p)
    beta = np.zeros(p)
    while keep.size:
        Rk = householder_qrd(R[:, keep])
        diag = np.abs(np.diag(Rk))
        scale = diag.max()
        bad = diag <= SINGULAR_RTOL * scale if scale > 0 else np.ones_like(diag, bool)
        if not bad.any():
            beta[keep] = solve_beta(Rk, xty[keep])
            return beta, False
        keep = keep[~bad]
    raise SingularError(0, 0.0)


class TrainResult(NamedTuple):
    beta: np.ndarray
    memo: MemoizedFactor
    xty: np.ndarray
    full_rank: bool


def cold_train(X, Y, chunk_rows=None, executor=None, epoch: int = 0) -> TrainResult:
    """Train from scratch: factor all rows, then solve."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 1 or X.shape[0] != Y.shape[0]:
        raise ShapeError(f"X {X.shape} and Y {Y.shape} disagree")
    if X.shape[0] == 0:
        raise EmptyTrainingSet("cold_train needs at least one row")
    r = parallel_qrd(X, chunk_rows, executor)
    memo = MemoizedFactor(r, X.shape[0], epoch + 1)
    xty = X.T @ Y
    beta, full = robust_beta(memo.r, xty)
    return TrainResult(beta, memo, xty, full)


def incre_train(memo: MemoizedFactor, xty, X_delta, Y_delta, chunk_rows=None,
                executor=None) -> TrainResult:
    """Train on old rows + ``X_delta`` touching only the cached factor."""
    memo = absorb(memo, X_delta, chunk_rows, executor)
    xty = xty_accumulate(xty, X_delta, Y_delta)
    beta, full = robust_beta(memo.r, xty)
    return TrainResult(beta, memo, xty, full)


class MemoizedLinearRegression(RegressorMixin, BaseEstimator):
    """Ordinary least squares trained through a cached R factor.

    ``fit`` trains from scratch, ``partial_fit`` folds in more rows at a cost
    that depends only on the new rows, giving the same coefficients as
    ``fit`` on all rows seen so far.

    Parameters
    ----------
    fit_intercept : bool, default=True
    chunk_rows : int or None, default=None
        Row-block height for the tall-skinny factorization (4 x columns when
        None).
    """

    def __init__(self, fit_intercept=True, chunk_rows=None):
        self.fit_intercept = fit_intercept
        self.chunk_rows = chunk_rows

    def _design(self, X):
        if self.fit_intercept:
            return np.hstack((X, np.ones((X.shape[0], 1))))
        return X

    def _set_coef(self, res: TrainResult):
        self.memo_ = res.memo
        self.xty_ = res.xty
        self.full_rank_ = res.full_rank
        if self.fit_intercept:
            self.coef_ = res.beta[:-1]
            self.intercept_ = float(res.beta[-1])
        else:
            self.coef_ = res.beta
            self.intercept_ = 0.0
        self.n_samples_seen_ = res.memo.trained_rows
        return self

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        return self._set_coef(cold_train(self._design(X), y, self.chunk_rows))

    def partial_fit(self, X, y):
        if not hasattr(self, "memo_"):
            return self.fit(X, y)
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self._set_coef(incre_train(self.memo_, self.xty_, self._design(X), y, self.chunk_rows))

    def predict(self, X):
        check_is_fitted(self, "memo_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_ + self.intercept_

    def merge(self, other: "MemoizedLinearRegression") -> "MemoizedLinearRegression":
        """Estimator trained on the union of both training sets."""
        check_is_fitted(self, "memo_")
        check_is_fitted(other, "memo_")
        memo = merge_factors(self.memo_, other.memo_)
        xty = self.xty_ + other.xty_
        beta, full = robust_beta(memo.r, xty)
        out = type(self)(**self.get_params())
        out.n_features_in_ = self.n_features_in_
        return out._set_coef(TrainResult(beta, memo, xty, full))
