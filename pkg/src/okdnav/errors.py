"""Exception types shared across the package."""


class RangeError(ValueError):
    """An argument fell outside its documented range."""


class PlacementInfeasibleError(RuntimeError):
    """Scene sampling exhausted its rejection budget."""


class RenderFromCollisionError(RuntimeError):
    """A camera pose inside an obstacle or outside the arena cannot be rendered."""


class PolicyFaultError(RuntimeError):
    """A policy produced a non-finite action; the episode is aborted."""


class ShapeError(ValueError):
    """Tensor shape does not match what a layer or loader expects."""


class NonFiniteGradientError(FloatingPointError):
    """A gradient contained NaN/Inf; training aborts before corrupting weights."""


class ZeroNormError(ValueError):
    """A zero vector reached an operation that needs a nonzero norm."""


class BatchTooSmallError(ValueError):
    """Contrastive batches need at least two rows."""


class SequenceLengthError(ValueError):
    """Student sequences must have exactly the configured length."""


class SpacingInfeasibleError(RuntimeError):
    """No batch satisfying the pairwise spacing constraint exists."""


class ModalityError(ValueError):
    """The dataset lacks a modality the policy needs."""


class ConfigError(ValueError):
    """Invalid configuration key or cross-field constraint violation."""


class MissingArtifactError(FileNotFoundError):
    """A required input file is missing; the message names the command that produces it."""


class FormatError(ValueError):
    """A binary or text artifact failed format validation."""
