"""Exception types shared across the package."""


class SynoeError(Exception):
    """Base class for all package errors."""


class ParseError(SynoeError):
    """Input file is not valid JSON / not readable as the expected format."""


class SchemaError(SynoeError):
    """JSON parsed but required fields are missing or badly typed."""


class InvariantError(SynoeError):
    """Structurally valid data violates a semantic invariant.

    Messages name the offending image/annotation ids so runs fail loudly
    and debuggably instead of producing corrupt datasets.
    """


class DegenerateTarget(SynoeError):
    """Crop target has non-positive extent."""


class MaskMismatch(SynoeError):
    """Road mask dimensions differ from the image dimensions."""


class EmptyCatalog(SynoeError):
    """Prompt catalog contains no usable entries."""


class TransportError(SynoeError):
    """Model service unreachable after retries."""


class ServiceError(SynoeError):
    """Model service answered with a non-success status."""


class DimensionMismatch(SynoeError):
    """Inpainting service returned an image of the wrong size."""


class UnknownVariant(SynoeError):
    """Requested dataset variant name is not defined."""


class CategoryMismatch(SynoeError):
    """Detection dump references categories absent from the registry."""


class UnknownAnnotation(SynoeError):
    """Review decision targets an annotation id that does not exist."""


class InvalidClass(SynoeError):
    """Review reassignment names a class outside the ID registry."""
