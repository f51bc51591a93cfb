"""Exception and warning types shared across the package."""


class ConfigError(ValueError):
    """Invalid run configuration. ``path`` names the offending field."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class NumericalError(RuntimeError):
    """A numerical kernel failed or produced output violating its invariants."""


class EigensolverError(NumericalError):
    pass


class IntegrationError(NumericalError):
    pass


class PoleError(IntegrationError):
    """Trajectory reached the coordinate singularity |Z| -> 1 of the (Z, dphi) chart."""


class GridError(NumericalError):
    """Phase-space grid does not cover the state's support."""

    def __init__(self, message, support_fraction=None):
        self.support_fraction = support_fraction
        super().__init__(message)


class ResourceCapError(RuntimeError):
    """A configured resource limit (e.g. maximal truncation) was reached."""


class DegeneracyWarning(UserWarning):
    pass


class ConvergenceWarning(UserWarning):
    pass
