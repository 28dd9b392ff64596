"""Exception hierarchy shared by every m2pkit module."""


class M2PError(Exception):
    """Base class for all errors raised by m2pkit."""


class TraceError(M2PError, ValueError):
    pass


class TraceParseError(TraceError):
    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class TraceOrderError(TraceError):
    pass


class EmptyTraceError(TraceError):
    pass


class InsufficientSamplesError(TraceError):
    pass


class UnknownChannelError(M2PError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class QuaternionError(M2PError, ValueError):
    pass


class DegenerateQuaternionError(QuaternionError):
    pass


class InsufficientDataError(M2PError, ValueError):
    pass


class LengthMismatchError(M2PError, ValueError):
    pass


class ConfigError(M2PError, ValueError):
    pass


class TraceTooShortError(M2PError, ValueError):
    pass


class ProbeError(M2PError):
    pass


class CorruptPayloadError(ProbeError, ValueError):
    pass


class ProtocolError(ProbeError, ValueError):
    pass
