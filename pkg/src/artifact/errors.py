"""Exception types shared across the package."""


class ArtifactError(Exception):
    """Base class for all errors raised by this package."""


class AliasError(ArtifactError):
    """Populated Fourier modes reach the grid Nyquist frequency."""


class SupportError(ArtifactError):
    """Right-hand side has energy outside the annulus of a localized operator."""


class DriftError(ArtifactError):
    """Transported phase gradient drifted too far from its initial value."""


class OutOfRangeError(ArtifactError):
    """Requested time lies outside the stored time grid."""


class SearchExhausted(ArtifactError):
    """Integer frequency search found no table below the size cap."""


class NegativeDiscriminant(ArtifactError):
    """A squared coefficient became nonpositive while solving a quadratic system."""


class AdmissibilityError(ArtifactError):
    """The frequency growth parameter is below the admissibility threshold."""


class WellPreparednessError(ArtifactError):
    """Input flow does not have the well-prepared structure a stage needs."""


class IntervalTooShort(ArtifactError):
    """A time interval is shorter than the natural time scale requires."""


class DomainError(ArtifactError):
    """Argument outside the domain of a closed-form formula."""


class ConfigError(ArtifactError):
    """Malformed or inconsistent run configuration."""
