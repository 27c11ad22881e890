"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
2 for infeasible or degenerate input, 3 for a stalled solver, 4 for a bad
configuration.
"""

from __future__ import annotations


class SweepError(Exception):
    """Base class for all package errors."""

    exit_code = 2

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": str(self)}


class InfeasiblePoint(SweepError):
    """A query point lies outside the polyhedron beyond tolerance."""

    def __init__(self, violation: float, index: int):
        self.violation = float(violation)
        self.index = int(index)
        super().__init__(f"point violates face {index} by {violation:.3e}")


class EmptySet(SweepError):
    """The inequality system has no solution.

    ``ray`` is a nonnegative vector y with u^T y = 0 and b^T y < 0.
    """

    def __init__(self, ray=None, message: str = "polyhedron is empty"):
        self.ray = ray
        super().__init__(message)


class EmptySetAt(SweepError):
    def __init__(self, j: int):
        self.j = int(j)
        super().__init__(f"moving set is empty at node {j}")


class DiscontinuityDetected(SweepError):
    def __init__(self, j: int, jump: float, bound: float):
        self.j, self.jump, self.bound = int(j), float(jump), float(bound)
        super().__init__(
            f"state jump {jump:.3e} on step {j} exceeds guard {bound:.3e}; "
            "no absolutely continuous trajectory is being tracked")


class MeshMismatch(SweepError):
    exit_code = 4


class ShapeMismatch(SweepError):
    exit_code = 4


class MeasureFormat(SweepError):
    exit_code = 4


class NotInGraph(SweepError):
    """Arguments of the orthant coderivative are not on the graph of N."""


class NoMultiplier(SweepError):
    """The velocity is not generated by the active normals."""


class QualificationFailure(SweepError):
    """PLICQ fails at the base point."""


class DimensionTooLarge(SweepError):
    exit_code = 4


class InfeasibleInitial(SweepError):
    """x0 is not in the initial polyhedron."""


class SolverStalled(SweepError):
    exit_code = 3

    def __init__(self, message: str, best=None):
        self.best = best
        super().__init__(message)


class ConfigError(SweepError):
    exit_code = 4
