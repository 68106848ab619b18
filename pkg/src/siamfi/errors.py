"""Exception hierarchy shared across the package."""


class SiamfiError(Exception):
    """Base class for all package errors."""


class SchemaError(SiamfiError):
    """A manifest or config document is malformed; message names the field."""


class DimensionError(SiamfiError):
    """Array shapes disagree with the declared dimensions."""


class DataError(SiamfiError):
    """Session content is unusable (empty, inconsistent, corrupt)."""


class ConfigError(SiamfiError):
    """A scenario or run configuration is invalid."""


class UninitializedNormalizerError(SiamfiError):
    """Normalization statistics requested before fit()."""


class InsufficientSupportError(SiamfiError):
    """A class has fewer samples than the requested shot count."""


class CoverageError(SiamfiError):
    """Inference requested with a class that has no template and no fallback."""


class CheckpointError(SiamfiError):
    """Checkpoint missing, corrupt, or of an incompatible format version."""
