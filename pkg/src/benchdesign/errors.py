"""Exception hierarchy shared by every module of the package."""


class BenchDesignError(Exception):
    """Base class for all errors raised by benchdesign."""


class DomainError(BenchDesignError, ValueError):
    """An argument lies outside the mathematical domain of a function."""


class ConfigError(BenchDesignError, ValueError):
    """Invalid or inconsistent configuration (design, sampling, runner, CLI)."""


class SampleSizeOverflow(BenchDesignError, ArithmeticError):
    """The required sample size exceeds the configured cap."""


class InsufficientDataError(BenchDesignError, ValueError):
    """Fewer observations than a statistic needs (e.g. an sd with n < 2)."""


class PositivityError(BenchDesignError, ValueError):
    """A denominator mean for a percent difference is not strictly positive."""


class IncompleteDesignError(BenchDesignError):
    """Some (algorithm, instance) cells have no observations."""

    def __init__(self, missing):
        self.missing = list(missing)
        cells = ", ".join(f"({a}, {i})" for a, i in self.missing[:20])
        more = "" if len(self.missing) <= 20 else f" ... and {len(self.missing) - 20} more"
        super().__init__(f"missing (algorithm, instance) cells: {cells}{more}")


class RunError(BenchDesignError, RuntimeError):
    """An algorithm run failed twice (original seed and retry seed)."""

    def __init__(self, algorithm_id, instance_id, seed, detail=""):
        self.algorithm_id = algorithm_id
        self.instance_id = instance_id
        self.seed = seed
        self.detail = detail
        super().__init__(
            f"run failed: algorithm={algorithm_id!r} instance={instance_id!r} "
            f"seed={seed}: {detail}"
        )


class ApproximationWarning(UserWarning):
    """The Fieller-type standard error is unreliable for the current data."""
