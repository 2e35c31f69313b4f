"""Error types and the wire error-code registry.

Every failure that can cross the wire maps to exactly one u16 code; codes
0x0001..0x00FF mirror the per-module error enums.
"""


class GirpError(Exception):
    """Base class for all runtime errors."""


# --- SPIR-V container / reflection ------------------------------------------

class ReflectError(GirpError):
    pass


class TooShort(ReflectError):
    pass


class BadMagic(ReflectError):
    pass


class BadSchema(ReflectError):
    pass


class Misaligned(ReflectError):
    pass


class ZeroWordCount(ReflectError):
    pass


class TruncatedInstruction(ReflectError):
    pass


class DuplicateEntryPointName(ReflectError):
    pass


class DuplicateBinding(ReflectError):
    pass


# --- interpreter / executor ---------------------------------------------------

class InterpError(GirpError):
    pass


class UnsupportedOpcode(InterpError):
    def __init__(self, opcodes):
        if isinstance(opcodes, int):
            opcodes = [opcodes]
        self.opcodes = list(opcodes)
        super().__init__("unsupported opcode(s): %s" % ", ".join(map(str, self.opcodes)))


class MissingBinding(InterpError):
    def __init__(self, dset, binding):
        self.set = dset
        self.binding = binding
        super().__init__(f"missing binding (set={dset}, binding={binding})")


class OutOfBoundsAccess(InterpError):
    def __init__(self, buffer, offset):
        self.buffer = buffer
        self.offset = offset
        super().__init__(f"out-of-bounds access: buffer {buffer} offset {offset}")


class LimitExceeded(InterpError):
    pass


class EntryNotFound(InterpError):
    pass


class BackendReject(GirpError):
    pass


class UnknownModule(GirpError):
    pass


class NotCompute(GirpError):
    pass


class UnknownBuffer(GirpError):
    pass


class ExecError(GirpError):
    pass


# --- wire protocol ------------------------------------------------------------

class WireError(GirpError):
    pass


class FrameBadMagic(WireError):
    pass


class BadVersion(WireError):
    pass


class UnknownMsgType(WireError):
    def __init__(self, msg_type):
        self.msg_type = msg_type
        super().__init__(f"unknown message type 0x{msg_type:02x}")


class Truncated(WireError):
    pass


class TrailingBytes(WireError):
    pass


class Oversize(WireError):
    pass


class Timeout(WireError):
    pass


# --- session ------------------------------------------------------------------

class SessionError(GirpError):
    pass


class OutOfRange(SessionError):
    pass


class DigestMismatch(SessionError):
    pass


class FormatVersionUnsupported(SessionError):
    pass


class Busy(SessionError):
    pass


class UnknownSession(SessionError):
    pass


class BadRequest(SessionError):
    pass


# --- client -------------------------------------------------------------------

class NoLocalMirror(GirpError):
    pass


class NotConnected(GirpError):
    pass


# --- bench --------------------------------------------------------------------

class Empty(GirpError):
    pass


class InvalidModel(GirpError):
    pass


# --- the closed u16 registry ---------------------------------------------------

ERROR_CODES = {
    TooShort: 0x0001,
    BadMagic: 0x0002,
    BadSchema: 0x0003,
    Misaligned: 0x0004,
    ZeroWordCount: 0x0005,
    TruncatedInstruction: 0x0006,
    DuplicateEntryPointName: 0x0007,
    DuplicateBinding: 0x0008,
    UnsupportedOpcode: 0x0010,
    MissingBinding: 0x0011,
    OutOfBoundsAccess: 0x0012,
    LimitExceeded: 0x0013,
    EntryNotFound: 0x0014,
    UnknownModule: 0x0020,
    NotCompute: 0x0021,
    UnknownBuffer: 0x0022,
    ExecError: 0x0023,
    BackendReject: 0x0024,
    OutOfRange: 0x0030,
    DigestMismatch: 0x0031,
    FormatVersionUnsupported: 0x0032,
    Busy: 0x0033,
    UnknownSession: 0x0034,
    BadRequest: 0x0035,
    UnknownMsgType: 0x0040,
    Oversize: 0x0041,
}

CODE_NAMES = {code: cls.__name__ for cls, code in ERROR_CODES.items()}


def error_code(exc: Exception) -> int:
    """Map an exception to its registry code (0x00FF for unregistered)."""
    for cls in type(exc).__mro__:
        if cls in ERROR_CODES:
            return ERROR_CODES[cls]
    return 0x00FF
