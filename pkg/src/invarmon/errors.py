"""Exception types shared across the simulator."""


class SimulationError(Exception):
    """Base class for all simulator errors."""


class BoundsError(SimulationError):
    """Physical access outside the backing store."""


class TranslationFault(SimulationError):
    """Virtual address range touches an unmapped page."""


class AllocationError(SimulationError):
    """Guest population does not fit in the configured memory."""


class LifecycleError(SimulationError):
    """Operation attempted in the wrong boot/seal phase."""


class RegistrationError(SimulationError):
    """Malformed or rejected protection-record batch."""


class AttackError(SimulationError):
    """Ill-formed attack script (bad slot, no-op rogue value, ...)."""


class ConfigError(SimulationError):
    """Scenario configuration failed validation.

    ``field`` is a dotted path into the config document, so CLI users can
    locate the offending entry.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")
