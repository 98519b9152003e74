"""Exception hierarchy shared by the model builders, solvers and CLI."""


class MicrogridError(Exception):
    """Base class for all library errors."""


class AssemblyError(MicrogridError):
    """A model or network could not be assembled (singular mass matrix, bad topology)."""


class ReductionError(MicrogridError):
    """Kron or singular-perturbation elimination hit a singular block."""


class AnalysisError(MicrogridError):
    """Eigen-solver failure."""


class BracketError(AnalysisError):
    """The spectral abscissa does not change sign inside the search bracket.

    ``abscissas`` holds the abscissa at the lower and upper endpoints so callers
    can tell "stable everywhere" from "unstable everywhere".
    """

    def __init__(self, message, bracket, abscissas):
        super().__init__(message)
        self.bracket = tuple(bracket)
        self.abscissas = tuple(abscissas)


class IntegrationError(MicrogridError):
    """The time integrator could not continue (step-size underflow, step budget)."""

    def __init__(self, message, t_reached):
        super().__init__(message)
        self.t_reached = t_reached


class ScenarioError(MicrogridError):
    """A scenario file failed to parse or validate."""
