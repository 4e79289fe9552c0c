"""Exceptions raised by the adversarial PPM benchmark."""

from typing import Any, Optional


class AdversarialPPMError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(AdversarialPPMError):
    """Invalid or inconsistent run configuration."""


class IngestionError(AdversarialPPMError):
    """Event log could not be parsed."""

    def __init__(self, message: str, column: Optional[str] = None,
                 case_id: Optional[str] = None, row: Optional[int] = None):
        super().__init__(message)
        self.column = column
        self.case_id = case_id
        self.row = row


class SplitError(AdversarialPPMError):
    """Temporal split precondition violated."""


class EncodingError(AdversarialPPMError):
    """Prefix cannot be encoded with the given vocabulary or length bound."""


class TrainingError(AdversarialPPMError):
    """Model training failed."""

    def __init__(self, message: str, epoch: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch


class PredictionError(AdversarialPPMError):
    """Input does not match the classifier's expected shape."""


class EvaluationError(AdversarialPPMError):
    """Evaluation precondition violated (e.g. a single-class test set)."""


class UnsupportedOperationError(AdversarialPPMError):
    """Operation is not available for this model kind."""


class AttackPreconditionError(AdversarialPPMError):
    """Attack was called on a prefix it must not attack."""


class SelectionError(AdversarialPPMError):
    """Closest-candidate selection was given no candidates."""


class MetricError(AdversarialPPMError):
    """Distance inputs are incompatible."""


class ProfilingError(AdversarialPPMError):
    """Profile population is too small."""


class ArtifactError(AdversarialPPMError):
    """Stored artifact is missing, malformed or built on another vocabulary."""


class ReportError(AdversarialPPMError):
    """Report cannot be emitted."""


class PipelineError(AdversarialPPMError):
    """A pipeline stage failed; carries the stage name and the partial manifest."""

    def __init__(self, stage: str, message: str, manifest: Any = None):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
        self.manifest = manifest
