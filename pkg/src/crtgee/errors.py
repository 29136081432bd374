"""Exception types raised across the package."""


class CrtGeeError(Exception):
    """Base class for all package-specific errors."""


class DomainError(CrtGeeError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UsageError(CrtGeeError, ValueError):
    """Inconsistent combination of otherwise-valid inputs."""


class DataError(CrtGeeError, ValueError):
    """Invalid trial data (bad outcomes, empty design, single-arm, ...)."""


class NonConvergenceError(CrtGeeError, RuntimeError):
    """GEE fitting failed to converge.

    Carries enough state for simulation bookkeeping: the iteration count,
    the last coefficient vector, and a short machine-readable reason.
    """

    def __init__(self, reason, iterations, last_beta=None):
        super().__init__(f"GEE did not converge after {iterations} iteration(s): {reason}")
        self.reason = reason
        self.iterations = iterations
        self.last_beta = None if last_beta is None else list(map(float, last_beta))


class SingularityError(CrtGeeError, RuntimeError):
    """A matrix that must be inverted is singular."""


class CorrectionSingularityError(SingularityError):
    """A per-cluster correction factor (I - Q_i) cannot be formed."""

    def __init__(self, cluster_id, kind, detail=""):
        msg = f"correction {kind} undefined for cluster {cluster_id!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.cluster_id = cluster_id
        self.kind = kind


class UnsupportedDesignError(CrtGeeError, ValueError):
    """The design is too small or degenerate for the requested estimator."""


class DegenerateVarianceError(CrtGeeError, ValueError):
    """A zero standard error makes Wald inference undefined."""


class GeneratorInvalidError(CrtGeeError, RuntimeError):
    """The conditional mean of the binary-outcome generator left [0, 1]."""
