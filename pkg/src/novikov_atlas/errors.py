"""Exception types raised by the computational core and the CLI shell."""


class NovikovAtlasError(Exception):
    """Base class for all package errors."""


class SingularBasis(NovikovAtlasError):
    """Direct lattice basis is singular or numerically degenerate."""


class RealityViolation(NovikovAtlasError):
    """Fourier coefficients do not describe a real-valued function."""


class DegenerateLevel(NovikovAtlasError):
    """Level value sits on a critical value; the level surface is degenerate."""


class DegenerateDirection(NovikovAtlasError):
    """Plane direction vectors are zero or linearly dependent."""


class SeedProjectionFailed(NovikovAtlasError):
    """Newton projection of a seed point onto the level set did not converge."""


class StagnantStep(NovikovAtlasError):
    """Continuation step collapsed without a saddle explanation."""


class NonRationalDirection(NovikovAtlasError):
    """Operation requires a rational field direction."""


class MultipleSaddleUnresolved(NovikovAtlasError):
    """Degenerate (non-Morse) critical point encountered; complex not resolved."""


class SelfIntersecting(NovikovAtlasError):
    """Closed trajectory is not simple."""


class NoLabelWithinBound(NovikovAtlasError):
    """No integer label found within the search bound.

    Carries the best near-miss as ``best`` (tuple) and its angle as
    ``best_angle`` (radians) when available.
    """

    def __init__(self, message, best=None, best_angle=None):
        super().__init__(message)
        self.best = best
        self.best_angle = best_angle


class DirectionsDisagree(NovikovAtlasError):
    """Asymptotic-direction estimates from independent traces disagree.

    Carries the pairwise angles as ``angles``.
    """

    def __init__(self, message, angles=None):
        super().__init__(message)
        self.angles = angles if angles is not None else []


class ConfigInvalid(NovikovAtlasError):
    """Run configuration failed to parse or validate."""


class ChecksumMismatch(NovikovAtlasError):
    """Checkpoint does not match the active configuration."""


class ComputeFailed(NovikovAtlasError):
    """A pipeline stage failed; partial outputs may exist."""
