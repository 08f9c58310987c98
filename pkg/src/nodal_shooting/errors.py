"""Exception hierarchy shared by the numerical modules and the CLI."""


class ShootingError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 3


class FamilyError(ShootingError, ValueError):
    """Invalid isoparametric data or an incompatible polynomial split."""

    exit_code = 2


class IntegrationError(ShootingError):
    """The adaptive integrator could not continue.

    ``r`` is the last accepted radius and ``diagnostics`` carries whatever
    state was available when the failure happened.
    """

    def __init__(self, message, r=None, diagnostics=None):
        super().__init__(message)
        self.r = r
        self.diagnostics = dict(diagnostics or {})


class BudgetExhausted(ShootingError):
    """A scan or refinement ran out of its sample/parameter budget."""

    exit_code = 4

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = dict(achieved or {})


class MatchError(ShootingError):
    """Matching the forward and backward phase maps failed."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InvarianceError(ShootingError):
    """A sphere function is not invariant along a probed circle orbit."""

    def __init__(self, message, deviation=None):
        super().__init__(message)
        self.deviation = deviation
