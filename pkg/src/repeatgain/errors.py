"""Exception hierarchy shared across the package.

Errors are grouped by the exit-code categories the CLI maps them to:
usage/config (1), data (2), oracle/transport (3), internal invariant (4).
"""


class RepeatGainError(Exception):
    """Base class for all package errors."""


class ConfigError(RepeatGainError):
    """Invalid configuration value or combination."""


class DimensionError(RepeatGainError):
    """Array shapes incompatible with the requested operation."""


class DegenerateInputError(RepeatGainError):
    """Input is structurally valid but degenerate (zero norm, < 2 elements, ...)."""


class InternalError(RepeatGainError):
    """A package invariant was violated; indicates a bug, not bad input."""


# --- data / file format ------------------------------------------------------


class SampleLoadError(RepeatGainError):
    """Base class for feature-file loading failures."""


class MissingBlobError(SampleLoadError):
    """Manifest references a blob file that does not exist."""


class BlobSizeError(SampleLoadError):
    """Blob byte length disagrees with the extents declared in the manifest."""


class NonFiniteValueError(SampleLoadError):
    """A loaded array contains NaN or Inf."""


class SimilarityRangeError(SampleLoadError):
    """Stored similarities fall outside [-1, 1] or disagree with the embeddings."""


class ManifestError(SampleLoadError):
    """Manifest is missing, malformed, or has inconsistent fields."""


class CheckpointError(RepeatGainError):
    """Checkpoint file is corrupt, truncated, or has an unsupported version."""


# --- oracles -----------------------------------------------------------------


class OracleError(RepeatGainError):
    """Base class for oracle evaluation failures."""


class ReplayMissError(OracleError):
    """Replay oracle has no stored value for the requested (sample, sequence)."""


class OracleTransportError(OracleError):
    """Remote oracle unreachable: timeout, connection failure, or non-2xx."""


class OracleProtocolError(OracleError):
    """Remote oracle answered, but the response violates the wire protocol."""


class RunError(RepeatGainError):
    """A whole run failed (e.g. every training sample was skipped)."""
