"""Exception types shared across the package."""


class WavrelaxError(Exception):
    pass


class DimensionError(WavrelaxError, ValueError):
    pass


class ConfigError(WavrelaxError, ValueError):
    pass


class SingularMatrixError(WavrelaxError, ArithmeticError):
    def __init__(self, row: int, pivot: float, scale: float):
        self.row = row
        self.pivot = pivot
        super().__init__(f"matrix is numerically singular: pivot {pivot:.3e} at row {row} "
                         f"(matrix scale {scale:.3e})")


class ValidationError(WavrelaxError):
    """A splitting or partition failed its checks; ``report`` has the details."""

    def __init__(self, report):
        self.report = report
        super().__init__(f"validation failed:\n{report}")


class ConvergenceError(WavrelaxError, RuntimeError):
    """Iteration hit its safety cap; ``trace`` holds the work done so far."""

    def __init__(self, message: str, trace=None):
        self.trace = trace
        super().__init__(message)
