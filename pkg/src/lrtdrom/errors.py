"""Exception types shared across the package."""


class LrtdRomError(Exception):
    """Base class for all package-specific errors."""


class GeometryError(LrtdRomError):
    """Invalid domain geometry (misplaced holes, unreachable cell size)."""


class AssemblyError(LrtdRomError):
    """Finite element assembly failed (degenerate elements, bad data)."""


class DomainError(LrtdRomError):
    """A parameter vector lies outside the configured parameter box."""


class SolverError(LrtdRomError):
    """A linear system could not be factored or is numerically singular."""


class FormatError(LrtdRomError):
    """A binary file does not conform to the expected layout."""


class ConfigError(LrtdRomError):
    """A study configuration is malformed or inconsistent."""


class BudgetError(LrtdRomError):
    """A requested allocation exceeds the configured memory budget."""
