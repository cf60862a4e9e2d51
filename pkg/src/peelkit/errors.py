"""Exception types raised across peelkit."""


class PeelkitError(Exception):
    pass


class EmptyMesh(PeelkitError, ValueError):
    pass


class EmptySet(PeelkitError, ValueError):
    pass


class DimensionMismatch(PeelkitError, ValueError):
    pass


class ResolutionMismatch(PeelkitError, ValueError):
    pass


class NonPositiveScale(PeelkitError, ValueError):
    pass


class InvertedRange(PeelkitError, ValueError):
    pass


class TooFewPoints(PeelkitError, ValueError):
    pass


class MeshParseError(PeelkitError, ValueError):
    """Raised with a ``path:line:`` prefix pointing at the offending input."""


class FormatError(PeelkitError, ValueError):
    pass
