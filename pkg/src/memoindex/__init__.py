"""String-key learned index whose per-leaf models retrain incrementally
from a memoized QR factor."""
from .errors import (ConfigError, DatasetError, DuplicateKey, EmptyKeyError, EmptyTrainingSet,
                     NumericalError, ShapeError, ShutdownError, SingularError, UnsortedInput)
from .index import IndexConfig, LearnedIndex, Outcome
from .iqrd import MemoizedFactor, absorb, merge_factors, parallel_qrd
from .keycodec import KeyEncoder, encode
from .linalg import householder_qrd, solve_beta, upper_tri_inverse
from .model import LinearModel, MemoizedLinearRegression, cold_train, incre_train
from .trainer import EngineBackend, RetrainRequest, Trainer

__version__ = "0.1.0"
