"""Exception hierarchy shared by every cmseq module."""


class CMSeqError(ValueError):
    """Base class for all cmseq errors."""


class NotPositiveDefinite(CMSeqError):
    """A covariance or precision block is not positive definite."""


class DimensionMismatch(CMSeqError):
    pass


class IndexOutOfRange(CMSeqError):
    pass


class IndexOverlap(CMSeqError):
    pass


class IncompleteParameters(CMSeqError):
    """A model is missing a parameter block it needs for the requested operation."""


class NotReciprocal(CMSeqError):
    pass


class BoundaryNotMarkov(CMSeqError):
    """The boundary of a CM_L model does not make its D_0 block vanish."""


class MalformedInput(CMSeqError):
    """An input file is not valid JSON or does not follow the expected layout."""
