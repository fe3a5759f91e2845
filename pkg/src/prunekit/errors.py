"""Exception hierarchy shared across the toolkit."""


class PrunekitError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(PrunekitError):
    """Model document is malformed (bad JSON, missing fields, unknown kinds)."""


class ValidationError(PrunekitError):
    """Graph is structurally inconsistent (cycles, dangling edges, bad tags)."""


class ShapeError(ValidationError):
    """Shape inference failed; message names the offending node."""


class DependencyError(PrunekitError):
    """Annotations contradict graph structure during dependency analysis."""


class MissingWeightError(PrunekitError):
    """A layer has no tensor in the weight store."""


class ShapeMismatchError(PrunekitError):
    """A tensor's shape disagrees with what the graph declares."""


class InfeasibleTargetError(PrunekitError):
    """Pruning target unreachable while keeping one filter per layer."""

    def __init__(self, message: str, max_achievable: float):
        super().__init__(message)
        self.max_achievable = max_achievable


class NonFiniteError(PrunekitError):
    """A loss or gradient became NaN/Inf."""


class EmptySplitError(PrunekitError):
    """Evaluation requested on an empty data split."""


class PlanMismatchError(PrunekitError):
    """Prune plans are not comparable (different graphs or cardinalities)."""


class FormatError(PrunekitError):
    """Dataset file violates the binary record format."""


class UnknownClassError(PrunekitError):
    """Subset references a class absent from the dataset."""


class ConfigError(PrunekitError):
    """Run configuration is invalid or references missing paths."""
