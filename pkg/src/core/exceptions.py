"""Exception hierarchy shared by the optimizers and the experiment harness."""

from typing import Any, Optional


class FdIsacError(Exception):
    """Base class for all library errors."""


class ConfigError(FdIsacError, ValueError):
    """Invalid scenario or experiment configuration."""


class IllConditionedError(FdIsacError):
    """Interference-plus-noise matrix too badly conditioned to invert."""

    def __init__(self, condition_number: float, limit: float):
        self.condition_number = condition_number
        self.limit = limit
        super().__init__(
            f"condition number {condition_number:.3e} exceeds limit {limit:.1e}"
        )


class DegenerateDesignError(FdIsacError):
    """A relaxed design cannot be turned into beamformers (e.g. g^H V g == 0)."""


class InfeasibleError(FdIsacError):
    """An optimization problem has no feasible point.

    Args:
        family: Constraint family blamed for infeasibility
            ("radar", "uplink-k", "downlink-l", "power" or "unknown")
        slot: Half-duplex slot label ("dl"/"ul") when raised by the HD benchmark
    """

    def __init__(self, family: str = "unknown", slot: Optional[str] = None):
        self.family = family
        self.slot = slot
        where = f" in {slot.upper()} slot" if slot else ""
        super().__init__(f"infeasible{where}: {family} constraints")


class IterationLimitError(FdIsacError):
    """Iteration cap reached before convergence; `result` holds the best iterate."""

    def __init__(self, iterations: int, result: Any = None):
        self.iterations = iterations
        self.result = result
        super().__init__(f"no convergence after {iterations} iterations")


class SolverStallError(FdIsacError):
    """A surrogate failed to solve after progress was made; `result` holds the last accepted iterate."""

    def __init__(self, iterations: int, status: str, result: Any = None):
        self.iterations = iterations
        self.status = status
        self.result = result
        super().__init__(f"surrogate {status} at iteration {iterations + 1}")
