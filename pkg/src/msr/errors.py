"""Exception types raised across the package."""


class MsrError(Exception):
    """Base class for all errors raised by :mod:`msr`."""


class DimensionError(MsrError, ValueError):
    pass


class NormalizationError(MsrError, ValueError):
    pass


class NonReflectionError(MsrError):
    """The composed reflection/registration map has no eigenvalue near -1."""

    def __init__(self, eigenvalue, message=None):
        self.eigenvalue = eigenvalue
        if message is None:
            message = (
                "registration produced non-reflection composition "
                f"(closest real eigenvalue to -1: {eigenvalue!r})"
            )
        super().__init__(message)


class UnderdeterminedPlaneError(MsrError, ValueError):
    pass


class DegeneratePatchError(MsrError, ValueError):
    pass


class DetectionFailure(MsrError):
    """No usable symmetry estimate could be produced.

    ``diagnostics`` holds one entry per attempted run.
    """

    def __init__(self, message, diagnostics=()):
        self.diagnostics = list(diagnostics)
        super().__init__(message)


class ParseError(MsrError, ValueError):
    pass
