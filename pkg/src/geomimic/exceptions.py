"""Exception and warning types shared across the package."""


class GeomimicError(Exception):
    """Base class for all package errors."""


class DegenerateLine(GeomimicError):
    """Two points are too close to define a line."""


class TooFewFeatures(GeomimicError):
    """A frame does not carry enough features to instantiate a graph."""


class DimensionMismatch(GeomimicError):
    """Descriptor or embedding dimensions disagree with the parameters."""


class NoValidCandidates(GeomimicError):
    """Every candidate instance was filtered out as degenerate or absent."""


class NonFiniteLoss(GeomimicError):
    """A loss or gradient evaluated to NaN/Inf."""


class MissingCorrespondence(GeomimicError):
    """No candidate instance is shared between the two frames of a sample."""


class ShapeMismatch(GeomimicError):
    """Two parameter sets do not share identical array shapes."""


class EmptyDataset(GeomimicError):
    """Dataset preparation produced no usable samples."""


class PlantFault(GeomimicError):
    """The controlled plant rejected a command or observation."""


class BehindCamera(GeomimicError):
    """A scene point fell behind the camera's near plane."""


class InfeasibleGoal(GeomimicError):
    """No pose satisfies the requested goal constraints in view."""


class MissingGroundTruth(GeomimicError):
    """The video carries no ground-truth constraint bindings."""


class SeriesTooShort(GeomimicError):
    """A time series is too short for the requested statistic."""


class DivergenceDetected(GeomimicError):
    """The servo error has grown persistently beyond its initial size."""


class ConfigError(GeomimicError):
    """A run configuration is malformed or carries unknown keys."""


class SingularProbe(UserWarning):
    """An exploratory motion produced a near-zero Jacobian column."""


class DegenerateStep(UserWarning):
    """A Broyden update was skipped because the step was near zero."""


class ZeroNormEmbedding(UserWarning):
    """A probability-weighted embedding had near-zero norm in a cosine."""
