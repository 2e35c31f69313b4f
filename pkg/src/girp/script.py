"""Line-oriented script format driving an offload target.

Used by the CLI (`girp client ... run <script>`), the tests, and the bench
harness. Grammar (one command per line, `#` comments):

    load <file.spv>
    pipeline <hash|@last> <entry>
    alloc <id> <size>
    write <id> <offset> <file>
    dispatch <pipeline|@last> <gx> <gy> <gz> <set:binding:id>...
    read <id> <offset> <len> [> file]
    sleep <ms>

A target is anything exposing load_module / create_pipeline / alloc / write /
dispatch-style operations; adapters below cover the network client and an
in-process session.
"""

from __future__ import annotations

import time
from pathlib import Path

from . import wire
from .errors import BadRequest, GirpError
from .reflect import SpirvModule
from .session import Session


class SessionTarget:
    """Drives an in-process Session through its wire message handler."""

    def __init__(self, session: Session):
        self.session = session
        self.last_pipeline = 0

    def _handle(self, message):
        response = self.session.handle(message)
        if isinstance(response, wire.Error):
            raise GirpError(f"error 0x{response.code:04x}: {response.message}")
        return response

    def load_module(self, module_bytes: bytes) -> bytes:
        module_hash = SpirvModule.from_bytes(module_bytes).content_hash
        self._handle(wire.LoadModule(content_hash=module_hash,
                                     module_bytes=module_bytes))
        return module_hash

    def create_pipeline(self, module_hash: bytes, entry: str) -> int:
        ack = self._handle(wire.CreatePipeline(content_hash=module_hash, entry=entry))
        self.last_pipeline = ack.pipeline_id
        return ack.pipeline_id

    def alloc(self, buffer_id: int, size: int) -> None:
        self._handle(wire.AllocBuffer(buffer_id=buffer_id, size=size))

    def write(self, buffer_id: int, offset: int, data: bytes) -> None:
        self._handle(wire.WriteBuffer(buffer_id=buffer_id, offset=offset, data=data))

    def dispatch(self, pipeline: int, groups, bindings) -> None:
        self._handle(wire.Dispatch(pipeline_id=pipeline, groups=groups,
                                   bindings=tuple(bindings)))

    def read(self, buffer_id: int, offset: int, length: int) -> bytes:
        ack = self._handle(wire.ReadBuffer(buffer_id=buffer_id, offset=offset,
                                           length=length))
        return ack.data


class ClientTarget:
    """Drives a connected OffloadClient."""

    def __init__(self, client):
        self.client = client

    @property
    def last_pipeline(self) -> int:
        return self.client.last_pipeline

    def load_module(self, module_bytes: bytes) -> bytes:
        return self.client.load_module(module_bytes)

    def create_pipeline(self, module_hash: bytes, entry: str) -> int:
        return self.client.create_pipeline(module_hash, entry)

    def alloc(self, buffer_id: int, size: int) -> None:
        self.client.alloc(buffer_id, size)

    def write(self, buffer_id: int, offset: int, data: bytes) -> None:
        self.client.write(buffer_id, offset, data)

    def dispatch(self, pipeline: int, groups, bindings) -> None:
        self.client.offload_dispatch(pipeline, groups, list(bindings))

    def read(self, buffer_id: int, offset: int, length: int) -> bytes:
        return self.client.read(buffer_id, offset, length)


def run_script(text: str, target, base_dir: Path | str = ".",
               out=None) -> dict[int, bytes]:
    """Execute a script; returns the data of every `read` keyed by line number."""
    base = Path(base_dir)
    last_hash: bytes | None = None
    reads: dict[int, bytes] = {}

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        cmd = parts[0]
        try:
            if cmd == "load":
                last_hash = target.load_module((base / parts[1]).read_bytes())
            elif cmd == "pipeline":
                ref = parts[1]
                module_hash = last_hash if ref == "@last" else bytes.fromhex(ref)
                if module_hash is None:
                    raise BadRequest("pipeline @last before any load")
                target.create_pipeline(module_hash, parts[2])
            elif cmd == "alloc":
                target.alloc(int(parts[1]), int(parts[2]))
            elif cmd == "write":
                target.write(int(parts[1]), int(parts[2]),
                             (base / parts[3]).read_bytes())
            elif cmd == "dispatch":
                pipeline = (target.last_pipeline if parts[1] == "@last"
                            else int(parts[1]))
                groups = (int(parts[2]), int(parts[3]), int(parts[4]))
                bindings = []
                for spec in parts[5:]:
                    dset, binding, bid = spec.split(":")
                    bindings.append((int(dset), int(binding), int(bid)))
                target.dispatch(pipeline, groups, bindings)
            elif cmd == "read":
                data = target.read(int(parts[1]), int(parts[2]), int(parts[3]))
                reads[lineno] = data
                if len(parts) >= 6 and parts[4] == ">":
                    (base / parts[5]).write_bytes(data)
                elif out is not None:
                    out.write(f"read {parts[1]}@{parts[2]}+{parts[3]}: "
                              f"{data[:32].hex()}{'...' if len(data) > 32 else ''}\n")
            elif cmd == "sleep":
                time.sleep(int(parts[1]) / 1000.0)
            else:
                raise BadRequest(f"unknown command {cmd!r}")
        except (IndexError, ValueError) as exc:
            raise BadRequest(f"line {lineno}: malformed {cmd!r}: {exc}") from None
    return reads
