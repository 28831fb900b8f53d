"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand dimensions are incompatible."""


class NumericalError(ArithmeticError):
    """A factorization could not proceed."""


class SingularError(NumericalError):
    """Triangular factor has a (relatively) zero diagonal entry."""

    def __init__(self, index, value=0.0):
        self.index = index
        self.value = value
        super().__init__(f"singular factor: |R[{index},{index}]| = {value:.3g}")


class EmptyKeyError(ValueError):
    pass


class EmptyTrainingSet(ValueError):
    pass


class UnsortedInput(ValueError):
    pass


class DuplicateKey(ValueError):
    pass


class ShutdownError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


class DatasetError(ValueError):
    pass
