"""Exception types shared across the package."""


class PrueferLabError(Exception):
    """Base class for all pruefer-lab errors."""


class SingularShift(PrueferLabError):
    """Resolvent shift coincides with an eigenvalue of -L on an active mode."""


class NoCriticalEnergy(PrueferLabError):
    """Critical-energy search bracket exhausted without finding gamma(E) = 1/2."""


class InvalidGrid(PrueferLabError):
    """Nonsensical time grid (h <= 0, L <= 0 or h > L)."""


class StepTooCoarse(PrueferLabError):
    """Integration step too large to resolve the phase rotation."""


class WindowUnderflow(PrueferLabError):
    """Spectral window reaches kappa <= 0."""


class BracketFailure(PrueferLabError):
    """Root bracket could not be established; signals integrator inconsistency."""


class MissingIndex(PrueferLabError):
    """Spacing statistics requested for an index outside the extracted window."""


class SupportExceedsWindow(PrueferLabError):
    """Test function support escapes the computed phase range."""


class QuadratureFailure(PrueferLabError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class MonotonicityBreach(PrueferLabError):
    """SDE paths lost monotonicity in the drift parameter after max refinement."""


class GridTooNarrow(PrueferLabError):
    """Lattice target exits the computed range of the simulated process."""


class DegenerateProposal(PrueferLabError):
    """MCMC proposal width is not positive."""


class TooFewAtoms(PrueferLabError):
    """Gap statistics need at least two atoms per point set."""


class ConfigParseError(PrueferLabError):
    """Config text could not be parsed; carries line/column when known."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class ConfigValidationError(PrueferLabError):
    """Config parsed but failed validation; carries every violation."""

    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class SchemaMismatch(PrueferLabError):
    """Manifests produced by incompatible configs cannot be merged."""
