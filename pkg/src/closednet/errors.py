"""Exception types raised across the package."""

from __future__ import annotations

from dataclasses import dataclass


class ClosedNetError(Exception):
    """Base class for all package errors."""

    code = "ClosedNetError"


@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def as_dict(self) -> dict[str, str]:
        return {"code": self.code, "message": self.message}


class ValidationError(ClosedNetError):
    """Raised by ``validate_spec`` with every violation found, not just the first."""

    code = "ValidationError"

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(f"{v.code}: {v.message}" for v in self.violations))


class TimeOutOfRange(ClosedNetError):
    code = "TimeOutOfRange"


class GridNotIncreasing(ClosedNetError):
    code = "GridNotIncreasing"


class GridMismatch(ClosedNetError):
    code = "GridMismatch"


class MonotonicityPrecondition(ClosedNetError):
    code = "MonotonicityPrecondition"


class UnsupportedFamily(ClosedNetError):
    code = "UnsupportedFamily"


class NoDeparturesBefore(ClosedNetError):
    code = "NoDeparturesBefore"


class NotBottleneck(ClosedNetError):
    code = "NotBottleneck"


class InfeasibleConfidence(ClosedNetError):
    code = "InfeasibleConfidence"


class UnsupportedL0(ClosedNetError):
    code = "UnsupportedL0"


class ScenarioError(ClosedNetError):
    """Malformed scenario file (unknown keys, wrong shapes)."""

    code = "ScenarioError"
