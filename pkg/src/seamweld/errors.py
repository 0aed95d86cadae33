class SeamweldError(Exception):
    """Base class for every error raised by the package."""


class InvalidInputError(SeamweldError, ValueError):
    pass


class ImageReadError(InvalidInputError):
    pass


class DimensionMismatchError(InvalidInputError):
    pass


class EmptyOverlapError(InvalidInputError):
    pass


class ConstraintConflictError(SeamweldError):
    """A node is forced to both labels."""


class UnanchoredCutError(SeamweldError):
    """The overlap has no hard anchor for one of the two labels."""


class EmptySeamError(SeamweldError):
    """The label mask has no 0/1 boundary, so there is no seam."""


class PatchSkipped(SeamweldError):
    """Raised inside the patch loop; the patch is left unprocessed."""
