"""Exception types raised by the simulation, sampling and solver modules."""


class AvalancheError(Exception):
    """Base class for every error raised inside the package."""


# lattice-core
class EmptyWindow(AvalancheError):
    pass


class OutOfWindow(AvalancheError):
    pass


class BoundaryTruncated(AvalancheError):
    """The occupied run being measured touches the edge of the window."""


# forward-sim
class CouplingBroken(AvalancheError):
    pass


class DominationViolated(AvalancheError):
    pass


# contour
class NoVacantSite(AvalancheError):
    pass


class AlreadyStopped(AvalancheError):
    pass


class BudgetExceeded(AvalancheError):
    """A run consumed its event cap before reaching its stopping condition."""

    def __init__(self, events: int, message: str = ''):
        self.events = events
        super().__init__(message or f'event budget exhausted after {events} events')


# cftp-sampler
class OutOfDomain(AvalancheError):
    pass


class IncompleteTrace(AvalancheError):
    pass


# meanfield
class EmptyTruncation(AvalancheError):
    pass


class BracketFailure(AvalancheError):
    pass


class DegenerateState(AvalancheError):
    pass


class NegativityBreach(AvalancheError):
    def __init__(self, step: float, value: float):
        self.step = step
        self.value = value
        super().__init__(f'concentration {value:.3e} below tolerance with step h={step}')


class AdaptiveWindowWarning(UserWarning):
    """Too many replicas had to be rerun on a wider window."""
