"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration (bad spec, unknown key, out-of-range coefficient)."""


class UsageError(RuntimeError):
    """An API was called in a state where the call is not allowed."""


class NumericError(FloatingPointError):
    """Non-finite values reached a numerical routine."""


class TrainingAborted(RuntimeError):
    """Training stopped because a loss or gradient became non-finite."""

    def __init__(self, iteration, diagnostic):
        self.iteration = iteration
        self.diagnostic = dict(diagnostic)
        super().__init__(f"non-finite value at iteration {iteration}: {self.diagnostic}")
