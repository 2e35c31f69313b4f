"""The pluggable compute-backend boundary.

The session layer owns buffers and serializes calls; an executor owns modules
and pipelines and performs synchronous dispatches with a three-phase timing
breakdown (prepare / execute / readback). The reference interpreter backend is
always available; a real-GPU backend plugs in behind the same surface.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from . import interp
from .errors import (
    BackendReject,
    EntryNotFound,
    ExecError,
    MissingBinding,
    NotCompute,
    UnknownModule,
)
from .interp.program import Program, lower
from .reflect import ExecutionModel, ModuleInfo, SpirvModule, reflect


@dataclass(frozen=True)
class PipelineHandle:
    id: int
    module_hash: bytes
    entry: str
    local_size: tuple[int, int, int]


@dataclass(frozen=True)
class TimingBreakdown:
    prepare_ns: int
    execute_ns: int
    readback_ns: int

    @property
    def total_ns(self) -> int:
        return self.prepare_ns + self.execute_ns + self.readback_ns


@dataclass(frozen=True)
class Capabilities:
    backend: str
    full_spirv: bool
    max_buffer_bytes: int
    max_invocations: int


class InterpreterExecutor:
    """Reference backend: sequential interpreter over the supported subset.

    Dispatch executes on a scratch copy of each bound buffer (the "device"
    copy) and the readback phase copies results into the caller's buffers,
    mirroring the dispatch/execute/copy-back structure of a real device.
    """

    MAX_BUFFER_BYTES = 1 << 30

    def __init__(self, limits: interp.InterpLimits | None = None):
        self.limits = limits or interp.InterpLimits()
        self._modules: dict[bytes, SpirvModule] = {}
        self._infos: dict[bytes, ModuleInfo] = {}
        self._pipelines: dict[int, PipelineHandle] = {}
        self._programs: dict[int, Program] = {}
        self._creation_ns: dict[int, int] = {}
        self._next_pipeline_id = 1

    # --- contract ----------------------------------------------------------

    def capabilities(self) -> Capabilities:
        return Capabilities(
            backend=f"reference-interp/{interp.kernel_name()}",
            full_spirv=False,
            max_buffer_bytes=self.MAX_BUFFER_BYTES,
            max_invocations=self.limits.max_invocations,
        )

    @property
    def resident_modules(self) -> int:
        return len(self._modules)

    def load(self, module: SpirvModule) -> bytes:
        """Make a module resident; idempotent by content hash."""
        if module.content_hash in self._modules:
            return module.content_hash
        info = reflect(module)
        bad: list[int] = []
        for ep in info.entry_points:
            if ep.execution_model is ExecutionModel.GLCompute:
                report = interp.dry_run(module, ep.name, info=info)
                bad.extend(op for op in report.unsupported if op not in bad)
        if bad:
            raise BackendReject(
                "module uses opcodes outside the interpreter subset: %s"
                % ", ".join(map(str, sorted(bad)))
            )
        self._modules[module.content_hash] = module
        self._infos[module.content_hash] = info
        return module.content_hash

    def create_pipeline(self, module_hash: bytes, entry: str) -> PipelineHandle:
        if module_hash not in self._modules:
            raise UnknownModule(f"module {module_hash.hex()[:16]}... not resident")
        start = time.perf_counter_ns()
        info = self._infos[module_hash]
        ep = info.entry(entry)
        if ep is None:
            raise EntryNotFound(f"no entry point named {entry!r}")
        if ep.execution_model is not ExecutionModel.GLCompute:
            raise NotCompute(f"entry {entry!r} is not a compute entry point")
        program = lower(self._modules[module_hash], entry, info=info)
        handle = PipelineHandle(
            id=self._next_pipeline_id,
            module_hash=module_hash,
            entry=entry,
            local_size=ep.local_size or (1, 1, 1),
        )
        self._next_pipeline_id += 1
        self._pipelines[handle.id] = handle
        self._programs[handle.id] = program
        self._creation_ns[handle.id] = time.perf_counter_ns() - start
        return handle

    def pipeline_creation_ns(self, handle: PipelineHandle) -> int:
        return self._creation_ns[handle.id]

    def destroy_pipeline(self, handle: PipelineHandle) -> None:
        self._pipelines.pop(handle.id, None)
        self._programs.pop(handle.id, None)
        self._creation_ns.pop(handle.id, None)

    def dispatch(
        self,
        handle: PipelineHandle,
        groups: tuple[int, int, int],
        buffers: dict[tuple[int, int], bytearray],
    ) -> TimingBreakdown:
        """Synchronous dispatch; results visible in `buffers` on return."""
        if handle.id not in self._pipelines:
            raise ExecError(f"pipeline {handle.id} does not exist")
        program = self._programs[handle.id]
        module = self._modules[handle.module_hash]

        t0 = time.perf_counter_ns()
        scratch: dict[tuple[int, int], bytearray] = {}
        for slot in program.bindings:
            if slot not in buffers:
                raise MissingBinding(slot[0], slot[1])
            scratch[slot] = bytearray(buffers[slot])
        t1 = time.perf_counter_ns()
        interp.execute(module, handle.entry, groups, scratch,
                       limits=self.limits, program=program)
        t2 = time.perf_counter_ns()
        for slot, data in scratch.items():
            buffers[slot][:] = data
        t3 = time.perf_counter_ns()
        return TimingBreakdown(
            prepare_ns=t1 - t0, execute_ns=t2 - t1, readback_ns=t3 - t2
        )
