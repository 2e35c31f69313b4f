"""UE-side offload client: remote execution with a local mirror and fallback.

The client write-through-caches every module and buffer it touches. A heartbeat
thread detects a dead server (PING misses) and flips the client into Degraded
mode, where dispatches run on the local reference interpreter over the
last-synced data, always tagged with a staleness marker. Reconnecting resyncs
per buffer, last writer wins.
"""

from __future__ import annotations

import logging
import queue
import socket
import threading
import time
from dataclasses import dataclass, field
from enum import Enum

from . import wire
from .errors import (
    BackendReject,
    GirpError,
    NoLocalMirror,
    NotConnected,
    Timeout,
)
from .executor import InterpreterExecutor, TimingBreakdown
from .interp import InterpLimits
from .reflect import SpirvModule

log = logging.getLogger("girp.client")

DEFAULT_HEARTBEAT_INTERVAL_MS = 100
DEFAULT_MISS_THRESHOLD = 3


class ClientState(Enum):
    Connected = "Connected"
    Degraded = "Degraded"
    Closed = "Closed"


class Origin(Enum):
    Remote = "Remote"
    LocalDegraded = "LocalDegraded"


@dataclass
class StateEvent:
    old: ClientState
    new: ClientState
    detection_latency_ms: float | None = None


@dataclass
class _MirrorBuffer:
    data: bytearray
    sync_epoch: int = 0
    dirty: bool = False


@dataclass
class DispatchResult:
    buffers: dict[int, bytes]
    timing: TimingBreakdown
    origin: Origin
    staleness: dict[int, int] = field(default_factory=dict)  # buffer_id -> sync_epoch


class OffloadClient:
    def __init__(
        self,
        address: tuple[str, int],
        heartbeat_interval_ms: int = DEFAULT_HEARTBEAT_INTERVAL_MS,
        miss_threshold: int = DEFAULT_MISS_THRESHOLD,
        request_timeout_s: float = 10.0,
        limits: InterpLimits | None = None,
        start_heartbeat: bool = True,
    ):
        self.address = address
        self.heartbeat_interval_ms = heartbeat_interval_ms
        self.miss_threshold = miss_threshold
        self.request_timeout_s = request_timeout_s
        self.events: "queue.Queue[StateEvent]" = queue.Queue()

        self._state = ClientState.Closed
        self._state_lock = threading.Lock()
        self._conn: wire.Connection | None = None
        self._conn_lock = threading.Lock()
        self._hb_thread: threading.Thread | None = None
        self._hb_stop = threading.Event()
        self._start_heartbeat = start_heartbeat

        # local mirror + fallback executor
        self._modules: dict[bytes, bytes] = {}
        self._buffers: dict[int, _MirrorBuffer] = {}
        self._pipelines: dict[int, tuple[bytes, str]] = {}   # client pid -> (hash, entry)
        self._server_pid: dict[int, int] = {}                # client pid -> server pid
        self._next_pid = 1
        self._local = InterpreterExecutor(limits=limits)
        self._local_ok: dict[bytes, bool] = {}
        self.last_pipeline = 0

        self.connect()

    # --- state machine ----------------------------------------------------

    @property
    def state(self) -> ClientState:
        return self._state

    def _transition(self, new: ClientState, latency_ms: float | None = None) -> None:
        with self._state_lock:
            old = self._state
            if old is new:
                return
            self._state = new
        log.info("state %s -> %s", old.value, new.value)
        self.events.put(StateEvent(old=old, new=new, detection_latency_ms=latency_ms))

    @property
    def session_id(self) -> bytes:
        if self._conn is None:
            raise NotConnected("no active session")
        return self._conn.session_id

    def wait_for_state(self, state: ClientState, timeout_s: float) -> bool:
        deadline = time.monotonic() + timeout_s
        while time.monotonic() < deadline:
            if self._state is state:
                return True
            time.sleep(0.005)
        return self._state is state

    # --- connection -----------------------------------------------------------

    def connect(self) -> None:
        sock = socket.create_connection(self.address, timeout=self.request_timeout_s)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        conn = wire.Connection(sock)
        caps = self._local.capabilities()
        conn.send(wire.Hello(client_kind=wire.CLIENT_KIND_UE,
                             backend=caps.backend))
        _frame, ack = conn.recv(self.request_timeout_s)
        if not isinstance(ack, wire.HelloAck):
            raise NotConnected(f"handshake failed: {ack!r}")
        conn.session_id = ack.session_id
        self._conn = conn
        self.server_capabilities = ack.capabilities
        self._transition(ClientState.Connected)
        if self._start_heartbeat:
            self._hb_stop.clear()
            self._hb_thread = threading.Thread(target=self._heartbeat_loop, daemon=True)
            self._hb_thread.start()

    def close(self) -> None:
        self._hb_stop.set()
        if self._conn is not None:
            self._conn.close()
            self._conn = None
        self._transition(ClientState.Closed)

    def _request(self, message, flags: int = 0):
        """One remote round trip; raises the decoded error on ERROR responses."""
        if self._state is not ClientState.Connected or self._conn is None:
            raise NotConnected(f"client is {self._state.value}")
        with self._conn_lock:
            _frame, response = self._conn.request(
                message, timeout_s=self.request_timeout_s, flags=flags
            )
        if isinstance(response, wire.Error):
            raise GirpError(f"server error 0x{response.code:04x}: {response.message}")
        return response

    # --- heartbeat / disconnect detection ----------------------------------------

    def _heartbeat_loop(self) -> None:
        interval = self.heartbeat_interval_ms / 1000.0
        misses = 0
        first_miss: float | None = None
        while not self._hb_stop.is_set():
            self._hb_stop.wait(interval)
            if self._hb_stop.is_set() or self._state is not ClientState.Connected:
                return
            if not self._conn_lock.acquire(blocking=False):
                continue  # a request is in flight; the link is clearly alive
            try:
                wire.measure_rtt(self._conn, timeout_s=interval)
                misses = 0
                first_miss = None
            except (Timeout, ConnectionError, OSError):
                misses += 1
                if first_miss is None:
                    first_miss = time.monotonic()
            finally:
                self._conn_lock.release()
            if misses >= self.miss_threshold:
                latency_ms = (time.monotonic() - first_miss) * 1000.0 + \
                    self.heartbeat_interval_ms
                self._transition(ClientState.Degraded, latency_ms=latency_ms)
                with self._conn_lock:  # drop the dead socket
                    if self._conn is not None:
                        self._conn.close()
                        self._conn = None
                return

    def detect_disconnect(self, timeout_s: float) -> StateEvent | None:
        """Block until the next state transition event (or timeout)."""
        try:
            return self.events.get(timeout=timeout_s)
        except queue.Empty:
            return None

    # --- mirrored operations ---------------------------------------------------

    def load_module(self, module_bytes: bytes) -> bytes:
        module = SpirvModule.from_bytes(module_bytes)
        response = self._request(
            wire.LoadModule(content_hash=module.content_hash,
                            module_bytes=module_bytes)
        )
        assert isinstance(response, wire.ModuleAck)
        self._mirror_module(module)
        return module.content_hash

    def _mirror_module(self, module: SpirvModule) -> None:
        self._modules[module.content_hash] = module.to_bytes()
        try:
            self._local.load(module)
            self._local_ok[module.content_hash] = True
        except BackendReject as exc:
            self._local_ok[module.content_hash] = False
            log.warning("module %s has no degraded-mode fallback: %s",
                        module.content_hash.hex()[:16], exc)

    def create_pipeline(self, module_hash: bytes, entry: str) -> int:
        response = self._request(
            wire.CreatePipeline(content_hash=module_hash, entry=entry)
        )
        assert isinstance(response, wire.PipelineAck)
        pid = self._next_pid
        self._next_pid += 1
        self._pipelines[pid] = (module_hash, entry)
        self._server_pid[pid] = response.pipeline_id
        self.last_pipeline = pid
        return pid

    def alloc(self, buffer_id: int, size: int) -> None:
        self._request(wire.AllocBuffer(buffer_id=buffer_id, size=size))
        self._buffers[buffer_id] = _MirrorBuffer(data=bytearray(size), sync_epoch=1)

    def write(self, buffer_id: int, offset: int, data: bytes) -> None:
        self._request(wire.WriteBuffer(buffer_id=buffer_id, offset=offset, data=data))
        mirror = self._buffers[buffer_id]
        mirror.data[offset : offset + len(data)] = data
        mirror.sync_epoch += 1

    def read(self, buffer_id: int, offset: int, length: int) -> bytes:
        if self._state is ClientState.Degraded:
            mirror = self._buffers.get(buffer_id)
            if mirror is None:
                raise NoLocalMirror(f"buffer {buffer_id} was never synced")
            return bytes(mirror.data[offset : offset + length])
        response = self._request(
            wire.ReadBuffer(buffer_id=buffer_id, offset=offset, length=length)
        )
        assert isinstance(response, wire.BufferData)
        mirror = self._buffers.get(buffer_id)
        if mirror is not None:
            mirror.data[offset : offset + length] = response.data
            mirror.sync_epoch += 1
        return response.data

    def offload_dispatch(
        self,
        pipeline: int,
        groups: tuple[int, int, int],
        bindings: list[tuple[int, int, int]],
    ) -> DispatchResult:
        """Run remotely when Connected, locally (flagged stale) when Degraded."""
        if pipeline not in self._pipelines:
            raise NoLocalMirror(f"pipeline {pipeline} was never created")
        if self._state is ClientState.Degraded:
            return self._dispatch_local(pipeline, groups, bindings)
        response = self._request(
            wire.Dispatch(
                pipeline_id=self._server_pid[pipeline],
                groups=groups,
                bindings=tuple(bindings),
            )
        )
        assert isinstance(response, wire.DispatchAck)
        out: dict[int, bytes] = {}
        for _dset, _binding, buffer_id in bindings:
            mirror = self._buffers[buffer_id]
            data = self.read(buffer_id, 0, len(mirror.data))
            out[buffer_id] = data
        timing = TimingBreakdown(
            prepare_ns=response.prepare_ns,
            execute_ns=response.execute_ns,
            readback_ns=response.readback_ns,
        )
        return DispatchResult(buffers=out, timing=timing, origin=Origin.Remote)

    def _dispatch_local(self, pipeline, groups, bindings) -> DispatchResult:
        module_hash, entry = self._pipelines[pipeline]
        if module_hash not in self._modules:
            raise NoLocalMirror(
                f"module {module_hash.hex()[:16]} was never cached locally"
            )
        if not self._local_ok.get(module_hash, False):
            raise BackendReject(
                "mirrored module is outside the local interpreter subset"
            )
        handle = self._local.create_pipeline(module_hash, entry)
        bound: dict[tuple[int, int], bytearray] = {}
        staleness: dict[int, int] = {}
        for dset, binding, buffer_id in bindings:
            mirror = self._buffers.get(buffer_id)
            if mirror is None:
                raise NoLocalMirror(f"buffer {buffer_id} was never synced")
            bound[(dset, binding)] = mirror.data
            staleness[buffer_id] = mirror.sync_epoch
        timing = self._local.dispatch(handle, groups, bound)
        out: dict[int, bytes] = {}
        for _dset, _binding, buffer_id in bindings:
            self._buffers[buffer_id].dirty = True
            out[buffer_id] = bytes(self._buffers[buffer_id].data)
        return DispatchResult(
            buffers=out, timing=timing, origin=Origin.LocalDegraded,
            staleness=staleness,
        )

    # --- reconnect / resync -----------------------------------------------------

    def reconnect(self) -> None:
        """Re-establish the connection and resync mirrored state.

        Modules are re-uploaded (content-addressed), pipelines recreated, and
        buffers resolved last-writer-wins: locally dirtied buffers are pushed
        (their frames carry the DEGRADED flag), the rest are re-pushed as the
        last-synced content.
        """
        if self._state is ClientState.Closed:
            raise NotConnected("client is closed")
        self._hb_stop.set()
        if self._hb_thread is not None and self._hb_thread.is_alive():
            self._hb_thread.join(timeout=2 * self.heartbeat_interval_ms / 1000.0 + 1)
        if self._conn is not None:
            self._conn.close()
        self._state = ClientState.Degraded  # silent: connect() emits the event
        self.connect()
        for module_bytes in self._modules.values():
            module = SpirvModule.from_bytes(module_bytes)
            self._request(wire.LoadModule(content_hash=module.content_hash,
                                          module_bytes=module_bytes))
        for pid, (module_hash, entry) in self._pipelines.items():
            response = self._request(
                wire.CreatePipeline(content_hash=module_hash, entry=entry)
            )
            self._server_pid[pid] = response.pipeline_id
        for buffer_id, mirror in self._buffers.items():
            self._request(wire.AllocBuffer(buffer_id=buffer_id,
                                           size=len(mirror.data)))
            flags = wire.FLAG_DEGRADED if mirror.dirty else 0
            self._request(
                wire.WriteBuffer(buffer_id=buffer_id, offset=0,
                                 data=bytes(mirror.data)),
                flags=flags,
            )
            mirror.dirty = False
            mirror.sync_epoch += 1

    # --- local cold start ---------------------------------------------------------

    def cold_start_local(
        self,
        module_bytes: bytes,
        groups: tuple[int, int, int],
        buffers: dict[tuple[int, int], bytearray],
        entry: str = "main",
    ) -> tuple[dict[tuple[int, int], bytes], int]:
        """Time the full local pipeline: reflect, load, pipeline, dispatch, readback."""
        start = time.perf_counter_ns()
        executor = InterpreterExecutor(limits=self._local.limits)
        module = SpirvModule.from_bytes(module_bytes)
        executor.load(module)
        handle = executor.create_pipeline(module.content_hash, entry)
        executor.dispatch(handle, groups, buffers)
        outputs = {slot: bytes(data) for slot, data in buffers.items()}
        elapsed = time.perf_counter_ns() - start
        return outputs, elapsed
