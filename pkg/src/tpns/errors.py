"""Exception hierarchy shared by every module in the package."""


class TpnsError(Exception):
    """Base class for all package errors."""


class InvalidFieldData(TpnsError, ValueError):
    pass


class InvalidTime(TpnsError, ValueError):
    pass


class DimensionMismatch(TpnsError, ValueError):
    pass


class MeanModeNotZero(TpnsError, ValueError):
    pass


class UnsupportedScale(TpnsError, ValueError):
    pass


class GridTooCoarse(TpnsError, ValueError):
    pass


class InvalidParameter(TpnsError, ValueError):
    pass


class BlowupDetected(TpnsError, ArithmeticError):
    """Raised when the solver state stops being finite."""

    def __init__(self, t: float, message: str = ""):
        self.t = float(t)
        super().__init__(message or f"non-finite state detected at t={t:.6g}")


class NoContraction(TpnsError, RuntimeError):
    """Raised when Picard iteration fails to contract; carries the ratio history."""

    def __init__(self, ratios, message: str = ""):
        self.ratios = [float(r) for r in ratios]
        super().__init__(message or f"Picard iteration did not contract (ratios={self.ratios})")


class EmptyBlockRange(TpnsError, ValueError):
    """Raised when a requested dyadic range has no resolvable block."""

    def __init__(self, message: str, required_box_length: float | None = None):
        self.required_box_length = required_box_length
        super().__init__(message)
