"""Exception hierarchy shared by all modules."""


class OtkError(Exception):
    """Base class for all library errors."""


class CyclicGraph(OtkError):
    """The adjacency matrix contains a directed cycle."""


class MissingInputOrOutput(OtkError):
    """No usable input node, output node, or input-to-output path."""


class UnknownOperation(OtkError):
    """A node label is outside the operation vocabulary."""


class EmptyMeasure(OtkError):
    """The requested measure has no support (no interior nodes or paths)."""


class UnsupportedN(OtkError):
    """Operation trees are only defined for 1-gram and 2-gram atoms."""


class UnknownNode(OtkError):
    """Node id does not exist in the tree."""


class AtomNotInTree(OtkError):
    """A measure atom has no corresponding tree node."""


class DimensionMismatch(OtkError):
    """Cost matrix and weight vectors have incompatible shapes."""


class SingularKernel(OtkError):
    """Kernel matrix could not be factorized even at maximum jitter."""


class RankDeficient(OtkError):
    """Requested subset size exceeds the numerical rank of the kernel."""

    def __init__(self, b, rank):
        super().__init__(f"cannot sample {b} items from a rank-{rank} kernel")
        self.b = b
        self.rank = rank


class SingularConditioningBlock(OtkError):
    """The conditioning block of a Schur complement is not invertible."""


class PoolTooSmall(OtkError):
    """Candidate pool is smaller than the requested batch."""


class SpaceTooLarge(OtkError):
    """Search space is too large to enumerate into a table."""


class ParseError(OtkError):
    """A text input (taxonomy, config, or tabular file) is malformed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InvalidArchitecture(OtkError):
    """A tabular row decodes to an architecture that fails validation."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnknownArchitecture(OtkError):
    """Architecture key is absent from the benchmark table."""


class ConfigError(OtkError):
    """Experiment configuration is inconsistent or incomplete."""
