"""Exception hierarchy.

Every failure raised by the library derives from :class:`HSFlowError` and
carries a short machine-readable ``code`` that the CLI copies into its error
record.
"""

from __future__ import annotations


class HSFlowError(Exception):
    code = "error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def record(self) -> dict:
        return {"error": self.code, "message": str(self), **_jsonable(self.details)}


class InvalidArgumentError(HSFlowError, ValueError):
    code = "invalid-argument"


class GridMismatchError(HSFlowError, ValueError):
    code = "grid-mismatch"


class AsymmetryError(HSFlowError, ValueError):
    code = "asymmetry"


class SingularityError(HSFlowError, ArithmeticError):
    code = "singular"


class NotPositiveDefiniteError(HSFlowError, ArithmeticError):
    code = "not-positive-definite"


class ConvergenceError(HSFlowError, ArithmeticError):
    code = "non-convergence"


class ConditioningError(HSFlowError, ArithmeticError):
    code = "ill-conditioned"


class PositivityError(HSFlowError, ValueError):
    code = "positivity"


class TailMassError(HSFlowError, ValueError):
    code = "tail-mass"


class MonotonicityError(HSFlowError, ArithmeticError):
    code = "monotonicity"


class StabilityError(HSFlowError, ValueError):
    code = "stability"


class StepRejectedError(HSFlowError, ArithmeticError):
    code = "step-rejected"


def _jsonable(details: dict) -> dict:
    out = {}
    for key, value in details.items():
        if hasattr(value, "item"):
            value = value.item()
        out[key] = value
    return out
