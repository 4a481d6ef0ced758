"""Exception taxonomy shared across the package.

Every failure mode raised by the library derives from AnneError so callers
(and the CLI exit-code mapping) can distinguish configuration problems,
I/O problems and computation problems.
"""


class AnneError(Exception):
    """Base class for all library errors."""


# --- configuration / validation -------------------------------------------

class ConfigError(AnneError):
    """Bad experiment configuration; message names the offending field."""


class InvalidSpec(ConfigError):
    """Cluster or noise specification violates its invariants."""


class InvalidMapping(ConfigError):
    """Asymmetric-noise mapping is not a fixed-point-free permutation."""


# --- dataset / file format -------------------------------------------------

class IoFailure(AnneError):
    """Underlying file system error while reading or writing."""


class MalformedHeader(AnneError):
    """Dataset file header missing, unparsable, or inconsistent."""


class SizeMismatch(AnneError):
    """Declared sizes do not match the file payload."""


class NonFiniteFeature(AnneError):
    """A feature row contains NaN or Inf."""


class ZeroVector(AnneError):
    """An operation that needs a nonzero vector hit an all-zero row."""


class MissingTrueLabels(AnneError):
    """Operation requires hidden ground-truth labels that are absent."""


class DimensionMismatch(AnneError):
    """Feature dimensions of two datasets (or model/data) disagree."""


class LengthMismatch(AnneError):
    """Aligned containers have different lengths."""


class InsufficientOodPool(AnneError):
    """Out-of-distribution pool too small for the requested noise rate."""


# --- selection -------------------------------------------------------------

class DegenerateScores(AnneError):
    """Confidence scores admit no valid threshold split."""


class DegenerateLosses(AnneError):
    """Loss values have zero variance; mixture fit undefined."""


class EmptyPool(AnneError):
    """Neighbor pool is empty."""


class EmptyNeighborhood(AnneError):
    """Vote requested over an empty neighbor set."""


class EmptySubset(AnneError):
    """Selection requested on an empty index subset."""


class InsufficientSamples(AnneError):
    """Too few samples for the requested computation."""


class NoConvergence(AnneError):
    """Iterative solver failed to converge within its iteration cap."""


class NotNormalized(AnneError):
    """Vector expected to be unit-norm is not."""


# --- training ---------------------------------------------------------------

class EmptyBatch(AnneError):
    """Batch operation received no samples."""


class EmptyCleanSet(AnneError):
    """Oversampling requires a nonempty clean set."""


class EmptyTestSet(AnneError):
    """Evaluation requires a nonempty test set."""


class NonFiniteLoss(AnneError):
    """Loss or gradient became NaN/Inf."""
