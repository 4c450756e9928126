"""Exception hierarchy shared by all solvers and the study runner."""


class HlabError(Exception):
    """Base class for all package errors."""


class ConfigError(HlabError):
    """Invalid study/run configuration (bad key, bad value, CFL violation)."""


class GeometryError(HlabError):
    """Inconsistent perforation geometry (touching holes, bad radii)."""


class AlignmentError(HlabError):
    """Grid spacing does not divide the lattice period or the box."""


class UnsupportedDimensionError(HlabError):
    """Operation not defined for this spatial dimension."""


class IterationLimitError(HlabError):
    """Iterative solver ran out of iterations.

    Carries the last residual so studies can record it.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class InstabilityError(HlabError):
    """Explicit march blew up or violated its CFL bound mid-run."""


class CompatibilityError(HlabError):
    """Initial/boundary data violate a problem precondition."""


class DegenerateSolutionError(HlabError):
    """Fixed-point iteration collapsed onto the trivial zero solution."""


class MonotonicityError(HlabError):
    """Monotone iteration produced an increase beyond the allowed slack."""


class PositivityLossError(HlabError):
    """Nonnegative quantity dipped below the configured tolerance."""


class RegimeError(HlabError):
    """Operation requires a different scaling regime (e.g. CRITICAL)."""


class EmptySelectionError(HlabError):
    """A node selection (layer, band, comparison set) came out empty."""


class PreconditionError(HlabError):
    """Structural precondition on supplied data failed.

    ``nodes`` lists (a bounded number of) offending flat node indices.
    """

    def __init__(self, message, nodes=None):
        super().__init__(message)
        self.nodes = list(nodes) if nodes is not None else []
