"""Grid engine for nonlocal curvature flow by exact minimizing movements."""

__version__ = "0.1.0"
