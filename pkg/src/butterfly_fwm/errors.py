"""Exception and warning types shared across the package."""


class ButterflyError(Exception):
    """Base class for package errors."""


class IntegrationError(ButterflyError):
    """The time integration aborted."""

    def __init__(self, message, time):
        super().__init__(f"{message} at t = {time!r}")
        self.time = time


class SteadyStateError(ButterflyError):
    """The steady-state solve did not converge."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (relative residual {residual!r})")
        self.residual = residual


class ConfigError(ButterflyError):
    """Invalid configuration text; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class ReductionError(ButterflyError):
    """A multiphoton chain is too close to resonance for adiabatic elimination."""


class RegimeWarning(UserWarning):
    """A closed-form result is used outside its stated validity regime."""
