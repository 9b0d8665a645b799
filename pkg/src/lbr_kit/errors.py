"""Exception hierarchy shared by the wire codec, session machine and runtime."""


class LbrError(Exception):
    """Base class for every error raised by this package."""


# --- frame codec -------------------------------------------------------------

class FrameDecodeError(LbrError):
    """A datagram could not be decoded into a frame."""


class BadMagic(FrameDecodeError):
    pass


class BadChecksum(FrameDecodeError):
    pass


class Truncated(FrameDecodeError):
    pass


class BadLength(FrameDecodeError):
    """Frame length fields disagree with the actual byte count."""


class UnknownWireType(FrameDecodeError):
    pass


class UnknownMessageType(FrameDecodeError):
    pass


class ModeFieldMismatch(FrameDecodeError):
    """A command's optional fields do not match its command mode."""


class InvariantViolation(LbrError):
    """A message value violates its declared invariants."""


class Overflow(LbrError):
    """Encoded payload would exceed the 16-bit length field."""


# --- session / protocol logic -------------------------------------------------

class NoCommonVersion(LbrError):
    """Client and server share no protocol version."""


class IllegalEvent(LbrError):
    """A session event is not legal in the current state."""


class ModeNotSupported(LbrError):
    """Command mode is not available under the negotiated protocol version."""


# --- models / configuration ---------------------------------------------------

class UnknownVariant(LbrError):
    """Requested robot variant has no shipped config."""


class ConfigError(LbrError):
    """A config file or CLI parameter is invalid."""


# --- client runtime -------------------------------------------------------------

class SessionAborted(LbrError):
    """The client session was torn down (Bye sent) due to an error."""


class CallbackPanic(SessionAborted):
    """A user callback raised; the session was aborted."""


class InvalidCommand(SessionAborted):
    """A user callback returned a non-finite or malformed command."""


class UsageError(LbrError):
    """Client API used out of lifecycle order."""
