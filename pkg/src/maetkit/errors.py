"""Exception types shared across the package.

The CLI maps these to process exit codes: configuration/validation problems
exit 2, numerical non-convergence exits 3, I/O failures exit 4.
"""

from __future__ import annotations

__all__ = ["ConfigError", "ConvergenceError"]


class ConfigError(ValueError):
    """Invalid configuration, geometry or admissibility violation."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance within its budget."""
