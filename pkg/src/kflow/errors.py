class KFlowError(Exception):
    """Base class for kflow errors."""


class GeometryMismatchError(KFlowError, ValueError):
    """Two objects live on incompatible grids."""


class DegenerateSetError(KFlowError, ValueError):
    """An operation needs a boundary but the set has none (empty or full box)."""


class SolverError(KFlowError, RuntimeError):
    """A cut problem is malformed or the max-flow solve failed."""


class PropertyViolation(KFlowError, AssertionError):
    """A structural guarantee of the scheme was violated (indicates a bug)."""


class ConfigError(KFlowError, ValueError):
    """A scenario configuration is malformed."""
