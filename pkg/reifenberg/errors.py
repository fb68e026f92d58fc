from __future__ import annotations

from typing import Any


class LaboratoryError(Exception):
    def __init__(
        self,
        inner_exception: Exception | None = None,
        message: str | None = None,
    ):
        super().__init__(message)
        self._message = message
        self._inner_exception = inner_exception

    @property
    def inner_exception(self) -> Exception | None:
        return self._inner_exception

    @property
    def message(self) -> str | None:
        return self._message


class ConfigurationError(LaboratoryError):
    pass


class EmptyIntersectionError(LaboratoryError):
    def __init__(self, which: str, center: Any, radius: float):
        super().__init__(
            message=f"Sample {which} has no point inside B({list(center)}, {radius:g}).",
        )
        self._which = which

    @property
    def which(self) -> str:
        return self._which


class DegenerateFitError(LaboratoryError):
    def __init__(self, message: str):
        super().__init__(message=message)


class HypothesisViolationError(LaboratoryError):
    def __init__(self, hypothesis: str, detail: str):
        super().__init__(message=f"Hypothesis ({hypothesis}) violated: {detail}")
        self._hypothesis = hypothesis

    @property
    def hypothesis(self) -> str:
        return self._hypothesis

    def __reduce__(self):
        return (self.__class__, (self._hypothesis, self.message))


class DepthLimitError(LaboratoryError):
    def __init__(self, max_level: int):
        super().__init__(
            message=f"No admissible cube found above level {max_level}.",
        )
        self._max_level = max_level

    @property
    def max_level(self) -> int:
        return self._max_level


class EmptyFamilyError(LaboratoryError):
    def __init__(self, message: str = "E covers the whole boundary; the ball family is empty."):
        super().__init__(message=message)


class SlopeViolationError(LaboratoryError):
    def __init__(self, slope: float, theta: float):
        super().__init__(message=f"Profile slope {slope:.6g} exceeds theta = {theta:g}.")
        self._slope = slope
        self._theta = theta

    @property
    def slope(self) -> float:
        return self._slope


class PlacementError(LaboratoryError):
    def __init__(self, message: str):
        super().__init__(message=message)


class BudgetError(LaboratoryError):
    def __init__(self, what: str, count: int, limit: int):
        super().__init__(message=f"{what} count {count} exceeds the budget of {limit}.")
        self._what = what
        self._count = count
        self._limit = limit

    @property
    def count(self) -> int:
        return self._count

    def __reduce__(self):
        return (self.__class__, (self._what, self._count, self._limit))


class SeparationFailure(LaboratoryError):
    def __init__(self, x: Any, r: float, detail: str = ""):
        super().__init__(
            message=f"Separation condition fails at x={list(x)}, r={r:g}. {detail}".strip(),
        )
        self._x = x
        self._r = r

    @property
    def x(self) -> Any:
        return self._x

    @property
    def r(self) -> float:
        return self._r


class OrientationFailure(LaboratoryError):
    def __init__(self, x: Any, r: float):
        super().__init__(
            message=(
                f"No orientation of the normal at x={list(x)}, r={r:g} "
                "separates the domain from its complement."
            ),
        )
        self._x = x
        self._r = r

    @property
    def x(self) -> Any:
        return self._x

    @property
    def r(self) -> float:
        return self._r


class FlatnessPreconditionError(LaboratoryError):
    def __init__(self, delta: float, cap: float):
        super().__init__(
            message=f"Measured flatness {delta:.6g} exceeds delta_cap(epsilon) = {cap:.6g}.",
        )
        self._delta = delta
        self._cap = cap

    @property
    def delta(self) -> float:
        return self._delta


class CertificateFailure(LaboratoryError):
    def __init__(self, inequality: str, q: int, p: int, detail: str):
        super().__init__(message=f"Certificate {inequality} fails for (Q={q}, P={p}): {detail}")
        self._inequality = inequality
        self._pair = (q, p)

    @property
    def inequality(self) -> str:
        return self._inequality

    @property
    def pair(self) -> tuple[int, int]:
        return self._pair


class StepBudgetError(LaboratoryError):
    def __init__(self, failures: int, total: int, max_steps: int):
        super().__init__(
            message=(
                f"{failures} of {total} walks exceeded {max_steps} steps "
                f"(failure rate {failures / max(total, 1):.3%})."
            ),
        )
        self._failures = failures
        self._total = total
        self._max_steps = max_steps

    @property
    def failure_rate(self) -> float:
        return self._failures / max(self._total, 1)

    def __reduce__(self):
        return (self.__class__, (self._failures, self._total, self._max_steps))


class ZeroMassError(LaboratoryError):
    def __init__(self, remaining: int):
        super().__init__(
            message=f"Only {remaining} radii carry positive mass; at least 4 are required.",
        )


class ResolutionError(LaboratoryError):
    def __init__(self, covering_radius: float, scale: float):
        super().__init__(
            message=(
                f"Sample covering radius {covering_radius:.6g} is too coarse for scale "
                f"{scale:.6g} (must be below scale/4)."
            ),
        )


class UnboundedOverlapError(LaboratoryError):
    def __init__(self, overlaps: list[int]):
        super().__init__(message=f"Overlap counts keep growing with refinement: {overlaps}.")
        self._overlaps = overlaps

    @property
    def overlaps(self) -> list[int]:
        return self._overlaps


class MonotonicityFailure(LaboratoryError):
    def __init__(self, offending: list[Any]):
        super().__init__(message=f"Monotonicity fails on {len(offending)} set(s): {offending}")
        self._offending = offending

    @property
    def offending(self) -> list[Any]:
        return self._offending


class StageError(LaboratoryError):
    def __init__(self, stage: str, inner_exception: Exception):
        super().__init__(inner_exception, message=f"Stage '{stage}' failed: {inner_exception}")
        self._stage = stage

    @property
    def stage(self) -> str:
        return self._stage
