"""Exception types shared across the package."""


class DistrictError(Exception):
    """Base class for all domain errors."""


class NetworkStructureError(DistrictError):
    """Malformed network structure: unknown ids, self-edges, duplicate ids."""


class ValidationError(DistrictError):
    """Declared metadata contradicts the network structure."""


class CalibrationError(DistrictError):
    """Financial record cannot be turned into model parameters."""


class IntegrationError(DistrictError):
    """Numerical integration failed; carries the last good time reached."""

    def __init__(self, message: str, last_good_time: float | None = None):
        super().__init__(message)
        self.last_good_time = last_good_time


class InputFormatError(DistrictError):
    """Input file could not be parsed or is missing required fields."""
