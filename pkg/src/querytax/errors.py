"""Exception hierarchy shared across the package.

Every error a caller may want to catch derives from ``QuerytaxError``.
Errors that carry a useful datum (a line number, an id, a row index)
expose it as an attribute so callers can report precisely.
"""


class QuerytaxError(Exception):
    """Base class for all package errors."""


# --- corpus ---------------------------------------------------------------

class DuplicateId(QuerytaxError):
    def __init__(self, id_):
        self.id = id_
        super().__init__(f"duplicate id {id_}")


class EmptyText(QuerytaxError):
    def __init__(self, line):
        self.line = line
        super().__init__(f"empty query text at line {line}")


class ParseError(QuerytaxError):
    def __init__(self, line, reason=""):
        self.line = line
        msg = f"malformed row at line {line}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class FormatError(QuerytaxError):
    """File does not follow the declared binary or textual format."""


class TruncatedFile(QuerytaxError):
    """Payload is shorter than the header claims."""


class NonFiniteValue(QuerytaxError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"non-finite embedding value in row {row}")


class NoOverlap(QuerytaxError):
    """Query ids and embedding ids share no common element."""


# --- sampling -------------------------------------------------------------

class InsufficientPoints(QuerytaxError):
    """Requested more selections than points available."""


class EmptyRequest(QuerytaxError):
    """A selection of zero items was requested."""


class DimMismatch(QuerytaxError):
    """Vector dimensionalities disagree."""


class EmptyVotes(QuerytaxError):
    """A vote aggregation received no votes."""


# --- classifier -----------------------------------------------------------

class InsufficientData(QuerytaxError):
    """Split or training request exceeds the available labelled data."""


class DegenerateTraining(QuerytaxError):
    """Training set contains a single class."""


class LengthMismatch(QuerytaxError):
    """Paired sequences have different lengths."""


class UndefinedMetricCI(QuerytaxError):
    def __init__(self, metric):
        self.metric = metric
        super().__init__(f"metric {metric!r} undefined in every bootstrap resample")


# --- reduce ---------------------------------------------------------------

class KTooLarge(QuerytaxError):
    """Neighbourhood size must be smaller than the number of points."""


class SigmaSolveFailure(QuerytaxError):
    def __init__(self, point):
        self.point = point
        super().__init__(f"bandwidth solve failed for point {point}")


class EmptyGraph(QuerytaxError):
    """Layout received a graph with no vertices."""


class ConfigError(QuerytaxError):
    """Configuration violates a precondition."""


# --- cluster --------------------------------------------------------------

class ParamTooLarge(QuerytaxError):
    """min_samples exceeds the number of points."""


class TooFewPoints(QuerytaxError):
    """Operation needs at least two points."""


class EmptyInput(QuerytaxError):
    """Operation received an empty collection."""


# --- validate -------------------------------------------------------------

class UndefinedDbcv(QuerytaxError):
    """Fewer than two clusters of size >= 2; the index is undefined."""


class SizeOne(QuerytaxError):
    """A cluster of size one cannot have a core distance."""


# --- search ---------------------------------------------------------------

class NoStableConfig(QuerytaxError):
    """No configuration passed the cross-seed stability filter."""


class AllSeedsFailed(QuerytaxError):
    """Every seed of a consistency run failed to produce metrics."""


# --- interpret ------------------------------------------------------------

class EmptyCluster(QuerytaxError):
    """A summary was requested for a cluster with no members."""


class IdfUndefined(QuerytaxError):
    """TF-IDF needs at least two cluster documents."""


class UnmappedCluster(QuerytaxError):
    def __init__(self, cluster_id):
        self.cluster_id = cluster_id
        super().__init__(f"cluster {cluster_id} missing from merge map")


class SizeMismatch(QuerytaxError):
    """Totals disagree between a taxonomy and its corpus."""
