"""
Structured errors for the aggregative-game toolkit.

Every failure raised by the library carries:
1. A stable machine-readable code
2. The CLI exit code it maps to
3. A details mapping serialized next to the message
"""

from typing import Any, Dict


class AggSolveError(Exception):
    """Base class for all toolkit errors"""

    code = "aggsolve_error"
    exit_code = 1

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        payload: Dict[str, Any] = {"error": self.code, "message": self.message}
        payload.update({key: _jsonable(value) for key, value in self.details.items()})
        return payload


class ConfigError(AggSolveError):
    code = "config_error"


class DimensionError(AggSolveError):
    code = "dimension_mismatch"


class InfeasibleError(AggSolveError):
    """Empty set, or a point violating a named constraint row"""

    code = "infeasible"


class UnboundedSetError(AggSolveError):
    code = "unbounded_set"


class BuilderError(AggSolveError):
    code = "builder_error"


class ProvenanceError(AggSolveError):
    code = "missing_provenance"


class DimensionCapError(AggSolveError):
    code = "dimension_cap"


class WitnessError(AggSolveError):
    code = "uncertified"


class UnsupportedProfileError(AggSolveError):
    code = "unsupported_profile"


class ProjectionError(AggSolveError):
    code = "projection_not_converged"
    exit_code = 2


class NumericalError(AggSolveError):
    """A LAPACK or Qhull failure surfaced from scipy / numpy"""

    code = "numerical_error"
    exit_code = 2


class SolverError(AggSolveError):
    code = "solver_error"
    exit_code = 2


class OracleError(AggSolveError):
    code = "oracle_error"
    exit_code = 3


def _jsonable(value: Any) -> Any:
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value
