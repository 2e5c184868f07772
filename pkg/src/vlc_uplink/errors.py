"""Exception types shared across the simulator."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class ScenarioError(ValueError):
    """A scenario document could not be parsed or failed validation.

    ``field`` names the offending key path (``room.reflectivity_floor``) when
    one is known.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class UndefinedMetricError(ValueError):
    """A metric was requested for a branch that received no power."""


class AcquisitionError(RuntimeError):
    """Beam acquisition found no receiver inside the transmitter coverage."""
