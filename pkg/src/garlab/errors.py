"""Exception types shared across the package."""


class GarlabError(Exception):
    """Base class for every error raised by garlab."""


class DimensionMismatchError(GarlabError):
    """Vectors (or a batch and a model) disagree on dimension."""


class DegenerateVectorError(GarlabError):
    """A vector is unusable: NaN/Inf components, or zero norm where a
    direction is required."""


class DegenerateWeightsError(GarlabError):
    """Aggregation weights are negative or sum to zero."""


class EmptySetError(GarlabError):
    """An operation over a collection received no elements."""


class InfeasibleError(GarlabError):
    """The (n, f) or (n, k) configuration violates a rule's precondition."""


class DatasetFormatError(GarlabError):
    """An input dataset file is malformed."""


class ConfigError(GarlabError):
    """An experiment configuration is invalid."""
