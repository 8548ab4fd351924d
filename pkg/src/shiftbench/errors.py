"""Exception types shared across the toolkit."""


class ShiftbenchError(Exception):
    """Base class for all toolkit errors."""


class ShapeMismatchError(ShiftbenchError):
    """Input tensor dimensions do not match a model's input spec."""


class UnsupportedCapabilityError(ShiftbenchError):
    """A model was asked for a capability it does not advertise."""


class NonFiniteError(ShiftbenchError):
    """A loss or gradient became NaN/inf."""


class ConfigError(ShiftbenchError):
    """Invalid configuration or declarative experiment document."""


class StageError(ShiftbenchError):
    """A pipeline stage failed; details recorded in the run ledger."""


class BridgeError(ShiftbenchError):
    """Base class for external-model bridge transport failures."""


class BridgeProtocolError(BridgeError):
    """Handshake/version mismatch or malformed frame from the peer."""


class BridgeTimeoutError(BridgeError):
    """Peer did not answer within the configured deadline."""


class BridgeRemoteError(BridgeError):
    """Peer answered ok=false; carries the remote error code."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.remote_message = message
