"""
Exception hierarchy for the transitory queue lab.
"""


class LabError(Exception):
    """Base class for every error raised by the lab."""


class SimulationError(LabError):
    """A replication failed inside a report driver.

    Carries the grid cell that failed so sweeps can be resumed.
    """

    def __init__(self, message, alpha=None, n=None, replication=None):
        self.message = message
        self.alpha = alpha
        self.n = n
        self.replication = replication
        context = f"alpha={alpha}, n={n}, replication={replication}"
        super().__init__(f"{message} ({context})")

    def __reduce__(self):
        # survives the trip back from joblib worker processes
        return type(self), (self.message, self.alpha, self.n, self.replication)


class QuadratureError(LabError):
    """Numerical inversion of the stable characteristic function did not converge."""


class PathHorizonError(LabError, ValueError):
    """A path was evaluated beyond the horizon it was simulated on."""
