"""Exception hierarchy shared by every stage of the toolkit."""


class GeomReidError(Exception):
    """Base class; the CLI turns these into structured error messages."""


class InvalidFrame(GeomReidError, ValueError):
    pass


class InvalidSequence(GeomReidError, ValueError):
    pass


class InvalidArg(GeomReidError, ValueError):
    pass


# PLY ingestion
class PlyError(GeomReidError):
    pass


class MalformedHeader(PlyError):
    pass


class UnsupportedProperty(PlyError):
    pass


class TruncatedBody(PlyError):
    pass


class MalformedBody(PlyError):
    pass


# manifests
class ParseError(GeomReidError):
    pass


class DuplicateSequenceId(GeomReidError):
    pass


class MissingFile(GeomReidError):
    pass


class DegenerateFrame(UserWarning):
    """Emitted (not raised) when a frame has no horizontal spread to align."""


# rendering
class EmptyProjection(GeomReidError):
    def __init__(self, message, frame_index=None):
        super().__init__(message)
        self.frame_index = frame_index


# embedding
class TooFewFrames(GeomReidError):
    pass


class NoColorData(GeomReidError):
    pass


class DimensionMismatch(GeomReidError, ValueError):
    pass


class NormalizationDegenerate(GeomReidError):
    pass


class SingletonLabel(GeomReidError):
    pass


class InsufficientData(GeomReidError):
    pass


# evaluation
class TooFewSurgeries(GeomReidError):
    pass


class NoPositive(GeomReidError):
    pass


class UnknownProbeIdentity(GeomReidError):
    pass


class IncompleteTable(GeomReidError):
    pass


# saliency
class NonDifferentiablePath(GeomReidError):
    pass


class ShapeMismatch(GeomReidError, ValueError):
    pass


class ConfigError(GeomReidError):
    pass
