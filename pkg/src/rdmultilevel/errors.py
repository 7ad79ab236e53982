"""Exception types raised across the package."""


class MeshError(ValueError):
    """Invalid mesh request (size too small, inclusion box off the lattice)."""


class GeometryError(ValueError):
    """Degenerate or inverted simplex."""


class ConfigurationError(ValueError):
    """Inconsistent problem configuration (e.g. missing subdomain coefficient)."""


class StructureError(ValueError):
    """Mismatched hierarchy, transfer or operator dimensions."""


class DomainError(ValueError):
    """Quantity undefined for the given input (e.g. jump ratio with a zero value)."""


class InsufficientDataError(ValueError):
    """Not enough iterations/samples to form an estimate."""


class DefinitenessError(ArithmeticError):
    """An operator expected to be SPD produced a non-positive quantity."""


class CoarseSolveError(DefinitenessError):
    """The coarsest-level operator could not be factorized."""


class DivergenceError(ArithmeticError):
    """A stationary iteration diverged."""
