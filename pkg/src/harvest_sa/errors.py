"""Exception hierarchy shared by all modules."""


class HarvestError(Exception):
    """Base class for every error raised by harvest_sa."""


class DomainError(HarvestError, ValueError):
    """Non-finite or out-of-range model input."""


class ConfigError(HarvestError, ValueError):
    """Invalid configuration; ``key`` and ``line`` locate the offending entry when known."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class IntegrationError(HarvestError, RuntimeError):
    def __init__(self, message, last_time):
        self.last_time = last_time
        super().__init__(f"{message} (last valid t={last_time!r})")


class NonConvergentIntegration(IntegrationError):
    """Step budget exhausted or step size underflow."""


class BlowUpError(IntegrationError):
    """State became NaN or infinite."""


class DegenerateOutputError(HarvestError, ArithmeticError):
    """Output variance too small to normalise sensitivity indices."""


class IllConditionedDesign(HarvestError, ArithmeticError):
    """Regression design matrix is rank deficient."""


class TaskError(HarvestError, RuntimeError):
    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__(f"task {index} failed: {cause!r}")
