"""Word-level SPIR-V parsing and metadata reflection.

Pure functions over immutable byte input; safe for concurrent use. Only the
metadata the runtime needs is extracted: entry points, compute local sizes,
and descriptor bindings. Unknown opcodes are skipped by word count so real-world
modules reflect cleanly even when they use features the interpreter rejects.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

from .errors import (
    BadMagic,
    BadSchema,
    DuplicateBinding,
    DuplicateEntryPointName,
    Misaligned,
    TooShort,
    TruncatedInstruction,
    ZeroWordCount,
)

SPIRV_MAGIC = 0x07230203
HEADER_WORDS = 5

# Opcode and enum values from the SPIR-V specification, frozen here and pinned
# by the fixture conformance tests.
OP_ENTRY_POINT = 15
OP_EXECUTION_MODE = 16
OP_TYPE_POINTER = 32
OP_VARIABLE = 59
OP_DECORATE = 71
OP_MEMBER_DECORATE = 72

EXEC_MODE_LOCAL_SIZE = 17

DECOR_BLOCK = 2
DECOR_BUFFER_BLOCK = 3
DECOR_BUILTIN = 11
DECOR_BINDING = 33
DECOR_DESCRIPTOR_SET = 34
DECOR_OFFSET = 35

EXEC_MODEL_VERTEX = 0
EXEC_MODEL_FRAGMENT = 4
EXEC_MODEL_GLCOMPUTE = 5

STORAGE_UNIFORM = 2
STORAGE_STORAGE_BUFFER = 12


class ExecutionModel(Enum):
    GLCompute = "GLCompute"
    Vertex = "Vertex"
    Fragment = "Fragment"
    Other = "Other"


class BindingKind(Enum):
    StorageBuffer = "StorageBuffer"
    Other = "Other"


@dataclass(frozen=True)
class SpirvModule:
    """A raw SPIR-V binary plus its content identity."""

    words: tuple[int, ...]
    byte_len: int
    content_hash: bytes

    @classmethod
    def from_bytes(cls, data: bytes) -> "SpirvModule":
        parse_header(data)  # validates length, alignment, magic, schema
        words = tuple(struct.unpack(f"<{len(data) // 4}I", data))
        return cls(words=words, byte_len=len(data), content_hash=hash_module(data))

    def to_bytes(self) -> bytes:
        return struct.pack(f"<{len(self.words)}I", *self.words)


@dataclass(frozen=True)
class EntryPoint:
    name: str
    execution_model: ExecutionModel
    model_code: int
    function_id: int
    local_size: tuple[int, int, int] | None = None


@dataclass(frozen=True)
class BindingSlot:
    set: int
    binding: int
    result_id: int
    kind: BindingKind


@dataclass(frozen=True)
class ModuleInfo:
    version: tuple[int, int]
    bound: int
    entry_points: tuple[EntryPoint, ...] = ()
    bindings: tuple[BindingSlot, ...] = ()

    def entry(self, name: str) -> EntryPoint | None:
        for ep in self.entry_points:
            if ep.name == name:
                return ep
        return None


def hash_module(data: bytes) -> bytes:
    """SHA-256 of the exact bytes; the content-address used everywhere."""
    return hashlib.sha256(data).digest()


def parse_header(data: bytes) -> tuple[tuple[int, int], int, int]:
    """Validate the 5-word container header; returns (version, generator, bound)."""
    if len(data) < HEADER_WORDS * 4:
        raise TooShort(f"need at least 20 bytes, got {len(data)}")
    if len(data) % 4 != 0:
        raise Misaligned(f"length {len(data)} is not a multiple of 4")
    magic, version, generator, bound, schema = struct.unpack_from("<5I", data)
    if magic != SPIRV_MAGIC:
        raise BadMagic(f"magic 0x{magic:08x} != 0x{SPIRV_MAGIC:08x}")
    if schema != 0:
        raise BadSchema(f"schema word {schema} != 0")
    major = (version >> 16) & 0xFF
    minor = (version >> 8) & 0xFF
    return (major, minor), generator, bound


def iter_instructions(words, start: int = HEADER_WORDS) -> Iterator[tuple[int, int, int]]:
    """Yield (opcode, operand_start, word_count) over the instruction stream.

    Never reads past the word buffer; malformed lengths raise.
    """
    i = start
    n = len(words)
    while i < n:
        wc = words[i] >> 16
        opcode = words[i] & 0xFFFF
        if wc == 0:
            raise ZeroWordCount(f"zero word count at word index {i}")
        if i + wc > n:
            raise TruncatedInstruction(
                f"instruction at word {i} declares {wc} words, {n - i} remain"
            )
        yield opcode, i + 1, wc - 1
        i += wc


def decode_string(words, start: int, limit: int) -> tuple[str, int]:
    """Decode a nul-terminated, word-padded SPIR-V literal string.

    Returns (text, words_consumed).
    """
    raw = bytearray()
    consumed = 0
    for i in range(start, start + limit):
        chunk = struct.pack("<I", words[i])
        consumed += 1
        if 0 in chunk:
            raw.extend(chunk[: chunk.index(0)])
            return raw.decode("utf-8"), consumed
        raw.extend(chunk)
    raise TruncatedInstruction("unterminated literal string")


def _execution_model(code: int) -> ExecutionModel:
    return {
        EXEC_MODEL_GLCOMPUTE: ExecutionModel.GLCompute,
        EXEC_MODEL_VERTEX: ExecutionModel.Vertex,
        EXEC_MODEL_FRAGMENT: ExecutionModel.Fragment,
    }.get(code, ExecutionModel.Other)


def reflect(module: SpirvModule) -> ModuleInfo:
    """Walk the instruction stream and collect dispatch-relevant metadata."""
    words = module.words
    version, _generator, bound = parse_header(module.to_bytes())

    entries: list[dict] = []
    local_sizes: dict[int, tuple[int, int, int]] = {}
    descriptor_sets: dict[int, int] = {}
    bindings: dict[int, int] = {}
    var_storage: dict[int, int] = {}      # variable id -> storage class
    var_pointee: dict[int, int] = {}      # variable id -> pointee type id
    pointer_pointee: dict[int, int] = {}  # pointer type id -> pointee type id
    buffer_block_types: set[int] = set()

    for opcode, opstart, oplen in iter_instructions(words):
        if opcode == OP_ENTRY_POINT and oplen >= 2:
            model = words[opstart]
            fn_id = words[opstart + 1]
            name, _ = decode_string(words, opstart + 2, oplen - 2)
            entries.append({"name": name, "model": model, "fn": fn_id})
        elif opcode == OP_EXECUTION_MODE and oplen >= 2:
            if words[opstart + 1] == EXEC_MODE_LOCAL_SIZE and oplen >= 5:
                local_sizes[words[opstart]] = (
                    words[opstart + 2],
                    words[opstart + 3],
                    words[opstart + 4],
                )
        elif opcode == OP_DECORATE and oplen >= 2:
            target, decoration = words[opstart], words[opstart + 1]
            if decoration == DECOR_DESCRIPTOR_SET and oplen >= 3:
                descriptor_sets[target] = words[opstart + 2]
            elif decoration == DECOR_BINDING and oplen >= 3:
                bindings[target] = words[opstart + 2]
            elif decoration == DECOR_BUFFER_BLOCK:
                buffer_block_types.add(target)
        elif opcode == OP_TYPE_POINTER and oplen >= 3:
            pointer_pointee[words[opstart]] = words[opstart + 2]
        elif opcode == OP_VARIABLE and oplen >= 3:
            var_id = words[opstart + 1]
            var_storage[var_id] = words[opstart + 2]
            var_pointee[var_id] = pointer_pointee.get(words[opstart], 0)

    seen_names: set[str] = set()
    entry_points = []
    for e in entries:
        if e["name"] in seen_names or not e["name"]:
            raise DuplicateEntryPointName(f"entry point name {e['name']!r}")
        seen_names.add(e["name"])
        model = _execution_model(e["model"])
        local = local_sizes.get(e["fn"]) if model is ExecutionModel.GLCompute else None
        entry_points.append(
            EntryPoint(
                name=e["name"],
                execution_model=model,
                model_code=e["model"],
                function_id=e["fn"],
                local_size=local,
            )
        )

    slots = []
    seen_slots: set[tuple[int, int]] = set()
    for var_id in sorted(set(descriptor_sets) | set(bindings)):
        dset = descriptor_sets.get(var_id, 0)
        binding = bindings.get(var_id, 0)
        if (dset, binding) in seen_slots:
            raise DuplicateBinding(f"duplicate (set={dset}, binding={binding})")
        seen_slots.add((dset, binding))
        storage = var_storage.get(var_id)
        if storage == STORAGE_STORAGE_BUFFER or (
            storage == STORAGE_UNIFORM and var_pointee.get(var_id) in buffer_block_types
        ):
            kind = BindingKind.StorageBuffer
        else:
            kind = BindingKind.Other
        slots.append(BindingSlot(set=dset, binding=binding, result_id=var_id, kind=kind))
    slots.sort(key=lambda s: (s.set, s.binding))

    return ModuleInfo(
        version=version,
        bound=bound,
        entry_points=tuple(entry_points),
        bindings=tuple(slots),
    )
