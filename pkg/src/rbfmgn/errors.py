"""Exception types shared across the package."""


class RbfMgnError(Exception):
    """Base class for library errors."""


class ConfigurationError(RbfMgnError):
    """Invalid, inconsistent, or unparseable user-supplied configuration."""


class GeometryError(RbfMgnError):
    """Node sampling or triangulation failure."""


class DegenerateGeometryError(GeometryError):
    """Input nodes are collinear or the domain has no usable interior."""


class DuplicateNodeError(GeometryError):
    """Two nodes coincide within tolerance."""


class SamplingCapacityError(GeometryError):
    """Rejection sampling could not place the requested number of nodes."""


class StencilError(RbfMgnError):
    """Local stencil construction failure."""


class StencilConditioningError(StencilError):
    """Condition estimate of a local saddle system exceeded the safe bound."""


class InstabilityError(RbfMgnError):
    """A direct rollout produced non-finite values."""


class DivergenceError(RbfMgnError):
    """Training loss exploded past the abort threshold."""
