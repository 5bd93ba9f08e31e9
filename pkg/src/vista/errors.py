"""Exception hierarchy shared across the pipeline."""


class VistaError(Exception):
    """Base class for all pipeline errors."""


# --- heatmap / keyframe ---

class EmptyInputError(VistaError):
    pass


class ZeroMassError(VistaError):
    pass


class ShapeError(VistaError):
    pass


class InsufficientFramesError(VistaError):
    pass


class InvalidArgumentError(VistaError):
    pass


# --- captions ---

class SentenceCountError(VistaError):
    def __init__(self, found_n: int, message: str = ""):
        self.found_n = found_n
        super().__init__(message or f"expected exactly 4 sentences, found {found_n}")


class FutureTenseWarning(UserWarning):
    """Sentence 3 carries no future-reference marker; recoverable, flagged for review."""


class IncompleteCaptionError(VistaError):
    pass


# --- vlm client ---

class AssetNotFoundError(VistaError):
    pass


class TransportError(VistaError):
    pass


class MalformedResponseError(VistaError):
    def __init__(self, message: str, raw_body: str = ""):
        self.raw_body = raw_body
        super().__init__(message)


class InvalidProbeSetError(VistaError):
    pass


# --- metrics ---

class EmptyReferenceError(VistaError):
    pass


class BackendError(VistaError):
    pass


class EmptyReportError(VistaError):
    pass


# --- lora kernel ---

class DivergenceError(VistaError):
    def __init__(self, message: str, trace=None):
        self.trace = trace
        super().__init__(message)


# --- dataset store ---

class DuplicateSampleError(VistaError):
    pass


class InsufficientSamplesError(VistaError):
    pass


class ProvenanceOrderError(VistaError):
    pass


class NotFoundError(VistaError):
    pass


class InvalidTransition(VistaError):
    pass


class RangeError(VistaError):
    """Likert value outside 1..5."""


# --- cli / pipeline ---

class PrerequisiteError(VistaError):
    pass


class StageAlreadyCompletedError(VistaError):
    pass


class StoreLockedError(VistaError):
    pass


class ConfigError(VistaError):
    pass
