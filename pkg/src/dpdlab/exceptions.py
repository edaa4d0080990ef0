"""Exception types shared across the package."""


class DpdlabError(Exception):
    """Base class for package-specific failures."""


class FormatError(DpdlabError):
    """A file does not conform to its declared format."""


class ConditioningError(DpdlabError):
    """A least-squares system is numerically singular."""


class TrainingDivergedError(DpdlabError):
    """Training produced a non-finite loss."""
