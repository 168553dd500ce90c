"""Exception hierarchy shared by every module.

Validation problems (bad inputs, schema or range violations) derive from
:class:`ValidationError`; everything else that goes wrong at run time derives
from :class:`VoiceAdaptError` directly.  The CLI maps the two families to exit
codes 2 and 3.
"""


class VoiceAdaptError(Exception):
    """Base class for runtime failures."""


class ValidationError(VoiceAdaptError, ValueError):
    """Input failed a schema, range or precondition check."""


class ClipTooShortError(ValidationError):
    pass


class UnreliableDecayError(VoiceAdaptError):
    pass


class ShapeError(ValidationError):
    pass


class UnsupportedVersionError(ValidationError):
    pass


class CorruptWeightsError(ValidationError):
    pass


class TrainingDiverged(VoiceAdaptError):
    """Raised when a loss or gradient becomes non-finite.

    ``last_good`` holds the best checkpoint seen before divergence (or None
    when training diverged before the first evaluation), ``history`` the
    metrics records collected so far.
    """

    def __init__(self, message="diverged", last_good=None, history=None):
        super().__init__(message)
        self.last_good = last_good
        self.history = history or []


class ConvergenceError(VoiceAdaptError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class DegeneratePairingError(ValidationError):
    pass


class IngestError(ValidationError):
    """Row-level validation failure; ``errors`` is a list of (line, message)."""

    def __init__(self, path, errors):
        self.path = str(path)
        self.errors = list(errors)
        shown = "; ".join(f"line {ln}: {msg}" for ln, msg in self.errors[:10])
        more = f" (+{len(self.errors) - 10} more)" if len(self.errors) > 10 else ""
        super().__init__(f"{self.path}: {shown}{more}")


class StageError(VoiceAdaptError):
    """Wraps a failure inside one stage of the adaptation pipeline."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
