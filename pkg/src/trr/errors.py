"""Exception hierarchy shared across the package.

Every error raised by this library derives from :class:`TrrError`, so callers
can catch one base class at an API boundary. File-format problems additionally
derive from :class:`FeatureFormatError`.
"""


class TrrError(Exception):
    """Base class for all errors raised by this package."""


# ---------------------------------------------------------------------------
# Binary container / projection sidecar parsing
# ---------------------------------------------------------------------------

class FeatureFormatError(TrrError):
    """Base class for malformed feature or projection files."""


class BadMagicError(FeatureFormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersionError(FeatureFormatError):
    """Declared format version is not supported by this reader."""


class TruncatedPayloadError(FeatureFormatError):
    """File ends before the declared payload is complete."""


class NonFiniteValueError(FeatureFormatError):
    """A NaN or infinity was found in a float payload."""


class FrameCountMismatchError(FeatureFormatError):
    """Layers within one file declare different frame counts."""


class LayerOrderError(FeatureFormatError):
    """Layer indices are not strictly increasing."""


class InvalidShapeError(FeatureFormatError):
    """A layer declares a zero frame count or zero channel count."""


class TrailingDataError(FeatureFormatError):
    """Bytes remain after the declared payload."""


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

class MissingLayerError(TrrError):
    """A requested layer index is not present in the feature map."""


class DimensionMismatchError(TrrError):
    """Vector or matrix dimensions do not agree."""


class ZeroGramError(TrrError):
    """Features are identically zero; no direction can be normalized."""


class InsufficientFramesError(TrrError):
    """Not enough frames to fit the requested projection."""


# ---------------------------------------------------------------------------
# Knowledge base / dataset
# ---------------------------------------------------------------------------

class MalformedJsonError(TrrError):
    """Dataset file is not valid JSON or violates the record schema."""


class MissingFieldError(TrrError):
    """A dataset record lacks a required field."""

    def __init__(self, field: str, detail: str = ""):
        self.field = field
        super().__init__(f"missing field {field!r}" + (f" ({detail})" if detail else ""))


class DuplicateIdError(TrrError):
    """Two dataset records share a record id."""


class TooFewGroupsError(TrrError):
    """Not enough distinct groups to build the requested split."""


class UnknownIdError(TrrError):
    """A record id is not present in the collection being queried."""


class MissingRangeError(TrrError):
    """No physical range is configured for a parameter key."""

    def __init__(self, key: str):
        self.key = key
        super().__init__(f"no range configured for parameter key {key!r}")


# ---------------------------------------------------------------------------
# Text index / retrieval
# ---------------------------------------------------------------------------

class EmptyCorpusError(TrrError):
    """Cannot build a lexical index over zero records."""


class EmptyIndexError(TrrError):
    """Cannot rank against an empty embedding index."""


class ZeroQueryError(TrrError):
    """Query vector has zero norm and no direction."""


class ZeroVectorError(TrrError):
    """A stored vector has zero norm and cannot be unit-normalized."""


class BothModalitiesDegradedError(TrrError):
    """Both the text and the audio side of a fused query are unusable."""


# ---------------------------------------------------------------------------
# Parameter metrics
# ---------------------------------------------------------------------------

class NonFiniteLeafError(TrrError):
    """A numeric parameter leaf is NaN or infinite."""

    def __init__(self, path: str):
        self.path = path
        super().__init__(f"non-finite numeric leaf at {path!r}")


class EmptyUnionError(TrrError):
    """Metric undefined: the union key set of the two vectors is empty."""


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

class TooFewResamplesError(TrrError):
    """Bootstrap resample count below the supported minimum."""


class ZeroVarianceError(TrrError):
    """Effect size undefined: all paired differences are identical."""


# ---------------------------------------------------------------------------
# Protocols
# ---------------------------------------------------------------------------

class DirtySplitError(TrrError):
    """Split shares group keys across its two sides."""


class MissingGroundTruthError(TrrError):
    """A query record has no usable ground-truth parameters."""


class MissingLayerInFeaturesError(TrrError):
    """An ablation grid point requests a layer absent from the feature maps."""


class ClockUnavailableError(TrrError):
    """No monotonic clock is available for latency profiling."""
