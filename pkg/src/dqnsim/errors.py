"""Exception types shared across the simulator."""


class ContractViolation(ValueError):
    """An input broke a documented precondition."""


class NotPositiveDefinite(ValueError):
    """Cholesky factorization hit a non-positive pivot."""

    def __init__(self, pivot: int, value: float):
        self.pivot = pivot
        self.value = value
        super().__init__(f"matrix is not positive definite: pivot {pivot} = {value!r}")


class InvariantViolation(RuntimeError):
    """An internal invariant that the algorithm guarantees did not hold (a bug)."""


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of iterations."""


class Diverged(RuntimeError):
    """A state vector became non-finite during a run."""

    def __init__(self, node: int | None, iteration: int, what: str = "state", trace=None):
        self.node = node
        self.iteration = iteration
        self.trace = trace
        where = f"node {node}, " if node is not None else ""
        super().__init__(f"non-finite {what} at {where}iteration {iteration}")


class ConfigError(ValueError):
    """Invalid experiment configuration."""
