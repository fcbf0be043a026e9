"""Exception types raised across the package.

Every error carries its class name as the diagnostic the CLI prints, so the
names here are part of the command-line contract.
"""


class LesionEnsembleError(Exception):
    """Base class for all package errors."""


class InvalidVolume(LesionEnsembleError):
    pass


class InvalidThreshold(LesionEnsembleError):
    pass


class CorruptFile(LesionEnsembleError):
    pass


class WrongFormat(LesionEnsembleError):
    pass


class ShapeMismatch(LesionEnsembleError):
    pass


class PatchTooLarge(LesionEnsembleError):
    pass


class IncompleteCoverage(LesionEnsembleError):
    pass


class DegenerateInput(LesionEnsembleError):
    pass


class NonDifferentiable(LesionEnsembleError):
    pass


class NoTrainingData(LesionEnsembleError):
    pass


class EmptyMask(LesionEnsembleError):
    pass


class EmptyReference(LesionEnsembleError):
    pass


class PlacementFailed(LesionEnsembleError):
    pass


class InvalidSplit(LesionEnsembleError):
    pass
