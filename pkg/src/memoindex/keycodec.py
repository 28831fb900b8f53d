"""Byte-string keys to fixed-width numeric rows.

A key becomes its first ``key_len`` byte values (zero padded, silently
truncated) followed by a constant 1 for the intercept.  Ordering is always
decided on the raw bytes; features only feed the regression.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import EmptyKeyError, ShapeError

__all__ = [
    "EncodedKey",
    "KeyEncoder",
    "as_key",
    "encode",
    "encode_codes",
    "features_from_codes",
    "matricize",
]


def as_key(key) -> bytes:
    if isinstance(key, str):
        key = key.encode("utf-8")
    elif not isinstance(key, bytes):
        key = bytes(key)
    if not key:
        raise EmptyKeyError("keys must be non-empty")
    return key


@dataclass(frozen=True)
class EncodedKey:
    features: np.ndarray
    raw: bytes

    @property
    def key_len(self) -> int:
        return self.features.shape[0] - 1


def encode_codes(keys: Sequence[bytes], key_len: int) -> np.ndarray:
    """uint8 matrix of shape (len(keys), key_len); one padded row per key."""
    if key_len < 1:
        raise ValueError("key_len must be >= 1")
    n = len(keys)
    if n == 0:
        return np.zeros((0, key_len), dtype=np.uint8)
    buf = b"".join([k[:key_len].ljust(key_len, b"\0") for k in keys])
    return np.frombuffer(buf, dtype=np.uint8).reshape(n, key_len)


def features_from_codes(codes: np.ndarray) -> np.ndarray:
    n, key_len = codes.shape
    X = np.empty((n, key_len + 1))
    X[:, :key_len] = codes
    X[:, key_len] = 1.0
    return X


def encode(key, key_len: int) -> EncodedKey:
    raw = as_key(key)
    features = features_from_codes(encode_codes([raw], key_len))[0]
    features.flags.writeable = False
    return EncodedKey(features, raw)


def matricize(keys: Sequence[EncodedKey], positions: Sequence[int]):
    """Key matrix X (one feature row per key) and position vector Y."""
    if len(keys) != len(positions):
        raise ShapeError(f"{len(keys)} keys but {len(positions)} positions")
    if not keys:
        raise ShapeError("matricize needs at least one key")
    width = keys[0].features.shape[0]
    if any(k.features.shape[0] != width for k in keys):
        raise ShapeError("keys were encoded with different key_len")
    X = np.vstack([k.features for k in keys])
    Y = np.asarray(positions, dtype=np.float64)
    return X, Y


class KeyEncoder(TransformerMixin, BaseEstimator):
    """Transformer form of :func:`encode` for use in scikit-learn pipelines.

    Parameters
    ----------
    key_len : int, default=16
        Number of leading bytes kept per key.
    intercept : bool, default=False
        Append the constant-1 column.  Leave off when the downstream
        regressor fits its own intercept.
    """

    def __init__(self, key_len=16, intercept=False):
        self.key_len = key_len
        self.intercept = intercept

    def fit(self, X, y=None):
        if not isinstance(self.key_len, (int, np.integer)) or self.key_len < 1:
            raise ValueError(f"key_len must be a positive int, got {self.key_len!r}")
        self.n_features_out_ = self.key_len + (1 if self.intercept else 0)
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_out_")
        keys = [as_key(k) for k in np.ravel(np.asarray(X, dtype=object))]
        codes = encode_codes(keys, self.key_len)
        if self.intercept:
            return features_from_codes(codes)
        return codes.astype(np.float64)
