"""Exception hierarchy shared by every faulttwin module."""


class FaultTwinError(Exception):
    """Base class for all toolkit errors."""


class SimulationDivergence(FaultTwinError):
    def __init__(self, channel: str, step: int | None = None):
        self.channel = channel
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"simulation diverged: channel {channel!r} is non-finite{where}")


class InvalidScenario(FaultTwinError):
    pass


class InsufficientData(FaultTwinError):
    pass


class InvalidData(FaultTwinError):
    pass


class DegenerateLabels(FaultTwinError):
    pass


class ShapeMismatch(FaultTwinError):
    pass


class OracleTooLarge(FaultTwinError):
    pass


class EncodingError(FaultTwinError):
    pass


class IllConditionedSurrogate(FaultTwinError):
    pass


class ProtocolError(FaultTwinError):
    pass


class StepwiseError(FaultTwinError):
    pass


class EmptyInput(FaultTwinError):
    pass


class CannotDrop(FaultTwinError):
    pass


class IntegrityError(FaultTwinError):
    pass


class TamperError(IntegrityError):
    pass


class ConfigError(FaultTwinError):
    """Raised for invalid configuration; ``field`` names the offending key path."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
