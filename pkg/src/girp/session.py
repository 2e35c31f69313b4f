"""Server-side session state: module cache, buffers, pipelines, migration.

Each session is a single-worker state machine fed wire messages; every failed
request leaves the session unchanged. A session serializes to a self-validating
snapshot (SHA-256 over the body) that a fresh server can import bit-exactly,
which is what makes millisecond migration possible.
"""

from __future__ import annotations

import hashlib
import os
import struct
import threading
import time
from dataclasses import dataclass

from . import wire
from .errors import (
    BadRequest,
    Busy,
    DigestMismatch,
    FormatVersionUnsupported,
    GirpError,
    OutOfRange,
    Oversize,
    UnknownBuffer,
    error_code,
)
from .executor import InterpreterExecutor, PipelineHandle
from .reflect import SpirvModule

SNAPSHOT_FORMAT_VERSION = 1


@dataclass
class SessionSnapshot:
    """Portable serialized session state; ordering is normative.

    Modules sorted by hash ascending; pipelines and buffers by id ascending,
    so exporting twice without intervening requests is byte-identical.
    """

    format_version: int
    session_id: bytes
    epoch: int
    modules: list[tuple[bytes, bytes]]              # (hash, module bytes)
    pipelines: list[tuple[int, bytes, str]]         # (id, module_hash, entry)
    buffers: list[tuple[int, bytes]]                # (id, contents)

    def to_bytes(self) -> bytes:
        out = bytearray()
        out += struct.pack("<H", self.format_version)
        out += self.session_id
        out += struct.pack("<Q", self.epoch)
        out += struct.pack("<I", len(self.modules))
        for mhash, mbytes in sorted(self.modules):
            out += mhash
            out += struct.pack("<I", len(mbytes))
            out += mbytes
        out += struct.pack("<I", len(self.pipelines))
        for pid, mhash, entry in sorted(self.pipelines):
            raw = entry.encode("utf-8")
            out += struct.pack("<Q", pid) + mhash + struct.pack("<H", len(raw)) + raw
        out += struct.pack("<I", len(self.buffers))
        for bid, data in sorted(self.buffers, key=lambda b: b[0]):
            out += struct.pack("<QQ", bid, len(data)) + data
        out += hashlib.sha256(out).digest()
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SessionSnapshot":
        if len(data) < 32:
            raise DigestMismatch("snapshot shorter than its digest")
        body, digest = data[:-32], data[-32:]
        if hashlib.sha256(body).digest() != digest:
            raise DigestMismatch("snapshot digest does not match its contents")
        r = wire._Reader(body)
        version = r.u16()
        if version != SNAPSHOT_FORMAT_VERSION:
            raise FormatVersionUnsupported(f"snapshot format version {version}")
        session_id = r.take(16)
        epoch = r.u64()
        modules = []
        for _ in range(r.u32()):
            mhash = r.take(32)
            modules.append((mhash, r.take(r.u32())))
        pipelines = []
        for _ in range(r.u32()):
            pid = r.u64()
            mhash = r.take(32)
            pipelines.append((pid, mhash, r.str16()))
        buffers = []
        for _ in range(r.u32()):
            bid = r.u64()
            size = r.u64()
            buffers.append((bid, r.take(size)))
        r.done()
        snap = cls(format_version=version, session_id=session_id, epoch=epoch,
                   modules=modules, pipelines=pipelines, buffers=buffers)
        module_hashes = {h for h, _ in modules}
        for _pid, mhash, _entry in pipelines:
            if mhash not in module_hashes:
                raise DigestMismatch("snapshot pipeline references an absent module")
        return snap


def new_session_id() -> bytes:
    return os.urandom(16)


class Session:
    """One offload session: content-addressed modules, buffers, pipelines."""

    def __init__(self, session_id: bytes | None = None, executor=None):
        self.session_id = session_id or new_session_id()
        self.executor = executor or InterpreterExecutor()
        self.modules: dict[bytes, SpirvModule] = {}
        self.pipelines: dict[int, tuple[bytes, str, PipelineHandle]] = {}
        self.buffers: dict[int, bytearray] = {}
        self.epoch = 0
        self.last_pipeline_id = 0
        self._next_pipeline_id = 1
        self._lock = threading.Lock()
        self._in_flight = False
        self.last_export_ns = 0
        self.last_import_ns = 0

    # --- request servicing -------------------------------------------------

    def handle(self, message, flags: int = 0):
        """Service one request; returns the response message (never raises
        registry errors: they become wire.Error responses)."""
        with self._lock:
            self._in_flight = True
            try:
                return self._dispatch_message(message)
            except GirpError as exc:
                return wire.Error(code=error_code(exc), message=str(exc))
            finally:
                self._in_flight = False

    def _dispatch_message(self, message):
        if isinstance(message, wire.Ping):
            return wire.Pong(echo_token=message.echo_token)
        if isinstance(message, wire.LoadModule):
            return self._load_module(message)
        if isinstance(message, wire.CreatePipeline):
            return self._create_pipeline(message)
        if isinstance(message, wire.AllocBuffer):
            return self._alloc_buffer(message)
        if isinstance(message, wire.WriteBuffer):
            return self._write_buffer(message)
        if isinstance(message, wire.Dispatch):
            return self._dispatch(message)
        if isinstance(message, wire.ReadBuffer):
            return self._read_buffer(message)
        if isinstance(message, wire.ExportSession):
            snapshot = self.export_session(_locked=True)
            return wire.SessionSnapshotMsg(snapshot=snapshot.to_bytes())
        if isinstance(message, wire.ImportSession):
            epoch = self.import_session(
                SessionSnapshot.from_bytes(message.snapshot), _locked=True
            )
            return wire.Ack(value=epoch)
        raise BadRequest(f"message {type(message).__name__} is not a request")

    def _load_module(self, msg: wire.LoadModule):
        module = SpirvModule.from_bytes(msg.module_bytes)
        if msg.content_hash != module.content_hash:
            raise BadRequest("declared content hash does not match module bytes")
        if module.content_hash in self.modules:
            return wire.ModuleAck(content_hash=module.content_hash, already_cached=1)
        self.executor.load(module)
        self.modules[module.content_hash] = module
        return wire.ModuleAck(content_hash=module.content_hash, already_cached=0)

    def _create_pipeline(self, msg: wire.CreatePipeline):
        handle = self.executor.create_pipeline(msg.content_hash, msg.entry)
        pid = self._next_pipeline_id
        self._next_pipeline_id += 1
        self.pipelines[pid] = (msg.content_hash, msg.entry, handle)
        self.last_pipeline_id = pid
        return wire.PipelineAck(pipeline_id=pid)

    def _alloc_buffer(self, msg: wire.AllocBuffer):
        if msg.size > self.executor.capabilities().max_buffer_bytes:
            raise Oversize(f"buffer of {msg.size} bytes exceeds the backend limit")
        self.buffers[msg.buffer_id] = bytearray(msg.size)  # zero-filled
        return wire.Ack()

    def _write_buffer(self, msg: wire.WriteBuffer):
        if msg.buffer_id not in self.buffers:
            raise UnknownBuffer(f"buffer {msg.buffer_id} not allocated")
        buf = self.buffers[msg.buffer_id]
        if msg.offset + len(msg.data) > len(buf):
            raise OutOfRange(
                f"write of {len(msg.data)} bytes at {msg.offset} "
                f"exceeds buffer size {len(buf)}"
            )
        buf[msg.offset : msg.offset + len(msg.data)] = msg.data
        return wire.Ack()

    def _dispatch(self, msg: wire.Dispatch):
        if msg.pipeline_id not in self.pipelines:
            raise BadRequest(f"pipeline {msg.pipeline_id} does not exist")
        _mhash, _entry, handle = self.pipelines[msg.pipeline_id]
        bound: dict[tuple[int, int], bytearray] = {}
        for dset, binding, buffer_id in msg.bindings:
            if buffer_id not in self.buffers:
                raise UnknownBuffer(f"buffer {buffer_id} not allocated")
            bound[(dset, binding)] = self.buffers[buffer_id]
        timing = self.executor.dispatch(handle, msg.groups, bound)
        return wire.DispatchAck(
            prepare_ns=timing.prepare_ns,
            execute_ns=timing.execute_ns,
            readback_ns=timing.readback_ns,
        )

    def _read_buffer(self, msg: wire.ReadBuffer):
        if msg.buffer_id not in self.buffers:
            raise UnknownBuffer(f"buffer {msg.buffer_id} not allocated")
        buf = self.buffers[msg.buffer_id]
        if msg.offset + msg.length > len(buf):
            raise OutOfRange(
                f"read of {msg.length} bytes at {msg.offset} "
                f"exceeds buffer size {len(buf)}"
            )
        return wire.BufferData(data=bytes(buf[msg.offset : msg.offset + msg.length]))

    # --- migration ----------------------------------------------------------

    def export_session(self, _locked: bool = False) -> SessionSnapshot:
        """Snapshot the full session; the source stays live and unmodified."""
        if not _locked and self._in_flight:
            raise Busy("a request is in flight")
        start = time.perf_counter_ns()
        snapshot = SessionSnapshot(
            format_version=SNAPSHOT_FORMAT_VERSION,
            session_id=self.session_id,
            epoch=self.epoch,
            modules=[(h, m.to_bytes()) for h, m in self.modules.items()],
            pipelines=[(pid, mh, entry) for pid, (mh, entry, _h) in self.pipelines.items()],
            buffers=[(bid, bytes(data)) for bid, data in self.buffers.items()],
        )
        self.last_export_ns = time.perf_counter_ns() - start
        return snapshot

    def import_session(self, snapshot: SessionSnapshot, _locked: bool = False) -> int:
        """Replace this session's state with the snapshot; returns the new epoch."""
        start = time.perf_counter_ns()
        # stage everything against the executor before committing state
        staged_modules: dict[bytes, SpirvModule] = {}
        for mhash, mbytes in snapshot.modules:
            module = SpirvModule.from_bytes(mbytes)
            if module.content_hash != mhash:
                raise DigestMismatch("snapshot module bytes do not match their hash")
            staged_modules[mhash] = module
        for module in staged_modules.values():
            self.executor.load(module)  # BackendReject propagates before commit
        staged_pipelines: dict[int, tuple[bytes, str, PipelineHandle]] = {}
        for pid, mhash, entry in snapshot.pipelines:
            staged_pipelines[pid] = (mhash, entry,
                                     self.executor.create_pipeline(mhash, entry))
        self.session_id = snapshot.session_id
        self.modules = staged_modules
        self.pipelines = staged_pipelines
        self.buffers = {bid: bytearray(data) for bid, data in snapshot.buffers}
        self._next_pipeline_id = max(staged_pipelines, default=0) + 1
        self.last_pipeline_id = max(staged_pipelines, default=0)
        self.epoch = snapshot.epoch + 1
        self.last_import_ns = time.perf_counter_ns() - start
        return self.epoch
