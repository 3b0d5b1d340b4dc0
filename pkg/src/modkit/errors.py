"""Exception types shared across the package.

Every error raised deliberately by this package derives from
:class:`ModkitError` so that the CLI can catch one base class and emit a
machine-readable report.
"""

from __future__ import annotations


class ModkitError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ModkitError):
    """An argument failed a documented precondition."""


class ProbabilityVectorError(ValidationError):
    """A vector expected to be a probability distribution is not one."""


class AsymmetricMatrixError(ValidationError):
    """A matrix expected to be symmetric is not, beyond tolerance."""


class EigenConvergenceError(ModkitError):
    """Power iteration failed to reach the residual tolerance.

    Attributes
    ----------
    residual : float
        Relative residual ``||Mv - lam*v|| / scale`` at the last iterate.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DegenerateScoresError(ModkitError):
    """All candidate scores are equal; no temperature can shape them."""


class TemperatureBracketError(ModkitError):
    """The requested entropy is outside what the bracket can achieve.

    Attributes
    ----------
    target : float
        Requested entropy (after clamping).
    achievable : tuple[float, float]
        Entropy at the low and high ends of the temperature bracket.
    bracket : tuple[float, float]
        The temperature bracket that was searched.
    """

    def __init__(self, message: str, target: float,
                 achievable: tuple[float, float], bracket: tuple[float, float]):
        super().__init__(message)
        self.target = target
        self.achievable = achievable
        self.bracket = bracket


class IdxFormatError(ModkitError):
    """An IDX file is malformed.

    Attributes
    ----------
    offset : int
        Byte offset in the file at which the problem was detected.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ModelIOError(ModkitError):
    """A model or similarity file is malformed or inconsistent."""


class TrainingDivergedError(ModkitError):
    """Loss became non-finite during training.

    Attributes
    ----------
    epoch : int
        Zero-based epoch index at which divergence was detected.
    batch : int
        Zero-based batch index within the epoch.
    """

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class ClusteringError(ModkitError):
    """Clustering preconditions were violated."""
