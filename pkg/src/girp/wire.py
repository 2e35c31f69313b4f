"""Bit-exact framing and typed messages for all client/server traffic.

Frame layout (all multi-byte integers little-endian):

    offset size  field
    0      4     magic "GIRP"
    4      1     version (= 1)
    5      1     msg_type
    6      2     flags (bit 0 = DEGRADED-data marker; rest reserved, zero on emit)
    8      2     reserved (zero on emit, ignored on receive)
    10     16    session_id
    26     8     request_id
    34     4     payload_len
    38     ...   payload (payload_len bytes, <= 64 MiB)

Total frame size is exactly 38 + payload_len. The encoder and decoder are pure
functions; golden byte vectors for every message type live in the test fixtures.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass

from .errors import (
    BadVersion,
    FrameBadMagic,
    Oversize,
    Timeout,
    TrailingBytes,
    Truncated,
    UnknownMsgType,
)

MAGIC = b"GIRP"
PROTOCOL_VERSION = 1
HEADER_LEN = 38
MAX_PAYLOAD = 64 * 1024 * 1024
FLAG_DEGRADED = 0x0001
DEFAULT_PORT = 47001

ZERO_SESSION = bytes(16)

# msg_type registry
T_HELLO = 0x01
T_HELLO_ACK = 0x02
T_LOAD_MODULE = 0x03
T_MODULE_ACK = 0x04
T_CREATE_PIPELINE = 0x05
T_PIPELINE_ACK = 0x06
T_ALLOC_BUFFER = 0x07
T_WRITE_BUFFER = 0x08
T_DISPATCH = 0x09
T_DISPATCH_ACK = 0x0A
T_READ_BUFFER = 0x0B
T_BUFFER_DATA = 0x0C
T_EXPORT_SESSION = 0x0D
T_SESSION_SNAPSHOT = 0x0E
T_IMPORT_SESSION = 0x0F
T_PING = 0x10
T_PONG = 0x11
T_ERROR = 0x12
T_ACK = 0x13

CLIENT_KIND_UE = 0
CLIENT_KIND_SERVER = 1

@dataclass(frozen=True)
class Frame:
    msg_type: int
    flags: int
    session_id: bytes
    request_id: int
    payload_len: int


class _Reader:
    """Bounds-checked cursor over a payload; never reads past the input."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise Truncated(f"payload needs {n} more bytes at offset {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def str16(self) -> str:
        return self.take(self.u16()).decode("utf-8")

    def bytes32(self) -> bytes:
        return self.take(self.u32())

    def done(self) -> None:
        if self.pos != len(self.data):
            raise TrailingBytes(
                f"{len(self.data) - self.pos} unconsumed payload bytes"
            )


def _str16(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _bytes32(data: bytes) -> bytes:
    return struct.pack("<I", len(data)) + bytes(data)


@dataclass(frozen=True)
class Hello:
    msg_type = T_HELLO
    client_kind: int = CLIENT_KIND_UE
    spirv_min: int = 0x00010000
    spirv_max: int = 0x00010600
    backend: str = ""

    def encode_payload(self) -> bytes:
        return struct.pack("<BII", self.client_kind, self.spirv_min,
                           self.spirv_max) + _str16(self.backend)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "Hello":
        return cls(client_kind=r.u8(), spirv_min=r.u32(), spirv_max=r.u32(),
                   backend=r.str16())


@dataclass(frozen=True)
class HelloAck:
    msg_type = T_HELLO_ACK
    session_id: bytes = ZERO_SESSION
    capabilities: str = ""

    def encode_payload(self) -> bytes:
        return self.session_id + _str16(self.capabilities)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "HelloAck":
        return cls(session_id=r.take(16), capabilities=r.str16())


@dataclass(frozen=True)
class LoadModule:
    msg_type = T_LOAD_MODULE
    content_hash: bytes = bytes(32)
    module_bytes: bytes = b""

    def encode_payload(self) -> bytes:
        return self.content_hash + _bytes32(self.module_bytes)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "LoadModule":
        return cls(content_hash=r.take(32), module_bytes=r.bytes32())


@dataclass(frozen=True)
class ModuleAck:
    msg_type = T_MODULE_ACK
    content_hash: bytes = bytes(32)
    already_cached: int = 0

    def encode_payload(self) -> bytes:
        return self.content_hash + struct.pack("<B", self.already_cached)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "ModuleAck":
        return cls(content_hash=r.take(32), already_cached=r.u8())


@dataclass(frozen=True)
class CreatePipeline:
    msg_type = T_CREATE_PIPELINE
    content_hash: bytes = bytes(32)
    entry: str = "main"

    def encode_payload(self) -> bytes:
        return self.content_hash + _str16(self.entry)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "CreatePipeline":
        return cls(content_hash=r.take(32), entry=r.str16())


@dataclass(frozen=True)
class PipelineAck:
    msg_type = T_PIPELINE_ACK
    pipeline_id: int = 0

    def encode_payload(self) -> bytes:
        return struct.pack("<Q", self.pipeline_id)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "PipelineAck":
        return cls(pipeline_id=r.u64())


@dataclass(frozen=True)
class AllocBuffer:
    msg_type = T_ALLOC_BUFFER
    buffer_id: int = 0
    size: int = 0

    def encode_payload(self) -> bytes:
        return struct.pack("<QQ", self.buffer_id, self.size)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "AllocBuffer":
        return cls(buffer_id=r.u64(), size=r.u64())


@dataclass(frozen=True)
class WriteBuffer:
    msg_type = T_WRITE_BUFFER
    buffer_id: int = 0
    offset: int = 0
    data: bytes = b""

    def encode_payload(self) -> bytes:
        return struct.pack("<QQ", self.buffer_id, self.offset) + _bytes32(self.data)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "WriteBuffer":
        return cls(buffer_id=r.u64(), offset=r.u64(), data=r.bytes32())


@dataclass(frozen=True)
class Dispatch:
    msg_type = T_DISPATCH
    pipeline_id: int = 0
    groups: tuple[int, int, int] = (1, 1, 1)
    bindings: tuple[tuple[int, int, int], ...] = ()  # (set, binding, buffer_id)

    def encode_payload(self) -> bytes:
        out = struct.pack("<QIIIH", self.pipeline_id, *self.groups,
                          len(self.bindings))
        for dset, binding, buffer_id in self.bindings:
            out += struct.pack("<IIQ", dset, binding, buffer_id)
        return out

    @classmethod
    def decode_payload(cls, r: _Reader) -> "Dispatch":
        pipeline_id = r.u64()
        groups = (r.u32(), r.u32(), r.u32())
        count = r.u16()
        bindings = tuple((r.u32(), r.u32(), r.u64()) for _ in range(count))
        return cls(pipeline_id=pipeline_id, groups=groups, bindings=bindings)


@dataclass(frozen=True)
class DispatchAck:
    msg_type = T_DISPATCH_ACK
    prepare_ns: int = 0
    execute_ns: int = 0
    readback_ns: int = 0

    def encode_payload(self) -> bytes:
        return struct.pack("<QQQ", self.prepare_ns, self.execute_ns,
                           self.readback_ns)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "DispatchAck":
        return cls(prepare_ns=r.u64(), execute_ns=r.u64(), readback_ns=r.u64())


@dataclass(frozen=True)
class ReadBuffer:
    msg_type = T_READ_BUFFER
    buffer_id: int = 0
    offset: int = 0
    length: int = 0

    def encode_payload(self) -> bytes:
        return struct.pack("<QQI", self.buffer_id, self.offset, self.length)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "ReadBuffer":
        return cls(buffer_id=r.u64(), offset=r.u64(), length=r.u32())


@dataclass(frozen=True)
class BufferData:
    msg_type = T_BUFFER_DATA
    data: bytes = b""

    def encode_payload(self) -> bytes:
        return _bytes32(self.data)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "BufferData":
        return cls(data=r.bytes32())


@dataclass(frozen=True)
class ExportSession:
    msg_type = T_EXPORT_SESSION

    def encode_payload(self) -> bytes:
        return b""

    @classmethod
    def decode_payload(cls, r: _Reader) -> "ExportSession":
        return cls()


@dataclass(frozen=True)
class SessionSnapshotMsg:
    msg_type = T_SESSION_SNAPSHOT
    snapshot: bytes = b""

    def encode_payload(self) -> bytes:
        return _bytes32(self.snapshot)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "SessionSnapshotMsg":
        return cls(snapshot=r.bytes32())


@dataclass(frozen=True)
class ImportSession:
    msg_type = T_IMPORT_SESSION
    snapshot: bytes = b""

    def encode_payload(self) -> bytes:
        return _bytes32(self.snapshot)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "ImportSession":
        return cls(snapshot=r.bytes32())


@dataclass(frozen=True)
class Ping:
    msg_type = T_PING
    echo_token: int = 0

    def encode_payload(self) -> bytes:
        return struct.pack("<Q", self.echo_token)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "Ping":
        return cls(echo_token=r.u64())


@dataclass(frozen=True)
class Pong:
    msg_type = T_PONG
    echo_token: int = 0

    def encode_payload(self) -> bytes:
        return struct.pack("<Q", self.echo_token)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "Pong":
        return cls(echo_token=r.u64())


@dataclass(frozen=True)
class Error:
    msg_type = T_ERROR
    code: int = 0
    message: str = ""

    def encode_payload(self) -> bytes:
        return struct.pack("<H", self.code) + _str16(self.message)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "Error":
        return cls(code=r.u16(), message=r.str16())


@dataclass(frozen=True)
class Ack:
    """General acknowledgement for requests without a data-bearing response.

    `value` carries the new epoch after IMPORT_SESSION and is zero otherwise.
    """

    msg_type = T_ACK
    value: int = 0

    def encode_payload(self) -> bytes:
        return struct.pack("<Q", self.value)

    @classmethod
    def decode_payload(cls, r: _Reader) -> "Ack":
        return cls(value=r.u64())


MESSAGE_TYPES = {
    cls.msg_type: cls
    for cls in (
        Hello, HelloAck, LoadModule, ModuleAck, CreatePipeline, PipelineAck,
        AllocBuffer, WriteBuffer, Dispatch, DispatchAck, ReadBuffer, BufferData,
        ExportSession, SessionSnapshotMsg, ImportSession, Ping, Pong, Error, Ack,
    )
}

RESPONSE_TYPE = {
    T_HELLO: T_HELLO_ACK,
    T_LOAD_MODULE: T_MODULE_ACK,
    T_CREATE_PIPELINE: T_PIPELINE_ACK,
    T_ALLOC_BUFFER: T_ACK,
    T_WRITE_BUFFER: T_ACK,
    T_DISPATCH: T_DISPATCH_ACK,
    T_READ_BUFFER: T_BUFFER_DATA,
    T_EXPORT_SESSION: T_SESSION_SNAPSHOT,
    T_IMPORT_SESSION: T_ACK,
    T_PING: T_PONG,
}


def encode(message, session_id: bytes = ZERO_SESSION, request_id: int = 0,
           flags: int = 0) -> bytes:
    """Encode one message into a complete frame."""
    payload = message.encode_payload()
    if len(payload) > MAX_PAYLOAD:
        raise Oversize(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    if len(session_id) != 16:
        raise ValueError("session_id must be exactly 16 bytes")
    return (
        MAGIC
        + struct.pack("<BBHH", PROTOCOL_VERSION, message.msg_type,
                      flags & 0xFFFF, 0)
        + session_id
        + struct.pack("<QI", request_id, len(payload))
        + payload
    )


def decode(data: bytes) -> tuple[Frame, object]:
    """Decode one complete frame; total over any byte input."""
    if len(data) < HEADER_LEN:
        raise Truncated(f"frame header needs {HEADER_LEN} bytes, got {len(data)}")
    if data[:4] != MAGIC:
        raise FrameBadMagic(f"bad frame magic {data[:4]!r}")
    version, msg_type, flags, _reserved = struct.unpack_from("<BBHH", data, 4)
    if version != PROTOCOL_VERSION:
        raise BadVersion(f"protocol version {version} unsupported")
    session_id = data[10:26]
    request_id, payload_len = struct.unpack_from("<QI", data, 26)
    if payload_len > MAX_PAYLOAD:
        raise Oversize(f"declared payload of {payload_len} bytes exceeds {MAX_PAYLOAD}")
    if len(data) < HEADER_LEN + payload_len:
        raise Truncated(
            f"frame declares {payload_len} payload bytes, "
            f"{len(data) - HEADER_LEN} present"
        )
    if len(data) > HEADER_LEN + payload_len:
        raise TrailingBytes(f"{len(data) - HEADER_LEN - payload_len} bytes after frame")
    cls = MESSAGE_TYPES.get(msg_type)
    if cls is None:
        raise UnknownMsgType(msg_type)
    reader = _Reader(data[HEADER_LEN:])
    message = cls.decode_payload(reader)
    reader.done()
    frame = Frame(msg_type=msg_type, flags=flags, session_id=session_id,
                  request_id=request_id, payload_len=payload_len)
    return frame, message


# --- stream transport ------------------------------------------------------


class Connection:
    """One serial request/response stream over a reliable ordered transport.

    `sock` is anything with sendall/recv/settimeout/close (a TCP socket or one
    end of a socketpair). One in-flight request at a time.
    """

    def __init__(self, sock, session_id: bytes = ZERO_SESSION):
        self.sock = sock
        self.session_id = session_id
        self._next_request_id = 1

    def _recv_exact(self, n: int, deadline: float | None = None) -> bytes:
        out = bytearray()
        while len(out) < n:
            if deadline is not None:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise Timeout("receive deadline exceeded")
                self.sock.settimeout(remaining)
            try:
                chunk = self.sock.recv(n - len(out))
            except (TimeoutError, OSError) as exc:
                if deadline is not None and isinstance(exc, TimeoutError):
                    raise Timeout("receive deadline exceeded") from None
                raise
            if not chunk:
                raise ConnectionError("peer closed the connection")
            out.extend(chunk)
        return bytes(out)

    def send(self, message, request_id: int | None = None, flags: int = 0,
             session_id: bytes | None = None) -> int:
        if request_id is None:
            request_id = self._next_request_id
            self._next_request_id += 1
        frame = encode(message, session_id=session_id or self.session_id,
                       request_id=request_id, flags=flags)
        self.sock.sendall(frame)
        return request_id

    def recv(self, timeout_s: float | None = None) -> tuple[Frame, object]:
        deadline = time.monotonic() + timeout_s if timeout_s is not None else None
        if deadline is None:
            self.sock.settimeout(None)
        header = self._recv_exact(HEADER_LEN, deadline)
        payload_len = struct.unpack_from("<I", header, 34)[0]
        if payload_len > MAX_PAYLOAD:
            raise Oversize(f"declared payload of {payload_len} bytes")
        payload = self._recv_exact(payload_len, deadline) if payload_len else b""
        return decode(header + payload)

    def request(self, message, timeout_s: float | None = None,
                flags: int = 0) -> tuple[Frame, object]:
        """Send one request and wait for its matching response."""
        request_id = self.send(message, flags=flags)
        deadline = time.monotonic() + timeout_s if timeout_s is not None else None
        while True:
            remaining = None
            if deadline is not None:
                remaining = max(deadline - time.monotonic(), 0.000001)
            frame, response = self.recv(remaining)
            if frame.request_id == request_id:
                return frame, response
            # unmatched response (e.g. stale pong): discard and keep waiting

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def measure_rtt(conn: Connection, echo_token: int | None = None,
                timeout_s: float = 1.0) -> int:
    """Monotonic PING->PONG delta in nanoseconds, matched by echo token."""
    if echo_token is None:
        echo_token = int.from_bytes(__import__("os").urandom(8), "little")
    start = time.perf_counter_ns()
    request_id = conn.send(Ping(echo_token=echo_token))
    deadline = time.monotonic() + timeout_s
    while True:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise Timeout("no matching PONG within the timeout")
        frame, msg = conn.recv(remaining)
        if isinstance(msg, Pong) and msg.echo_token == echo_token:
            return time.perf_counter_ns() - start
        _ = frame, request_id  # mismatched replies are discarded
