"""Exception types shared across the package."""


class EhcPoolError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(EhcPoolError):
    """An array has the wrong shape for the requested operation."""


class IndexOutOfRange(EhcPoolError):
    """An edge endpoint refers to a node index outside [0, n)."""


class SelfLoop(EhcPoolError):
    """An edge connects a node to itself."""


class DuplicateEdge(EhcPoolError):
    """The same undirected node pair appears more than once."""


class NonFinite(EhcPoolError):
    """A feature or intermediate value is NaN or infinite."""


class ParseError(EhcPoolError):
    """A dataset file record is malformed."""


class DimensionMismatch(EhcPoolError):
    """Graphs in one dataset disagree on feature dimensions."""


class NotScalar(EhcPoolError):
    """Reverse sweep was asked to start from a non-scalar tensor."""


class EmptyGraph(EhcPoolError):
    """Clustering requires at least one node."""


class ConfigError(EhcPoolError):
    """A configuration value violates its documented constraints."""


class NonFiniteLoss(EhcPoolError):
    """Training loss diverged (NaN or above the divergence bound)."""


class EmptySet(EhcPoolError):
    """Evaluation requires a non-empty labeled set."""


class TooFewSamples(EhcPoolError):
    """Cross-validation needs at least as many samples as folds."""


class UnknownFixture(EhcPoolError):
    """Requested toy-graph fixture name is not defined."""


class CheckpointMismatch(EhcPoolError):
    """A checkpoint's dimensions disagree with the supplied data."""
