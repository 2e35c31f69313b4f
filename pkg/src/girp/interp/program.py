"""Lowering of subset-compliant SPIR-V into a flat register program.

The interpreter executes one straight-line block per invocation. Lowering
resolves SSA ids to dense registers, folds constant access-chain offsets, and
encodes pointers as (space, byte offset) packed into a u64: space 0 is
function-local memory, space k>0 is the k-1'th bound storage buffer.

The same lowered program feeds both the compiled kernel and the pure-Python
fallback, so the two can only differ in speed.
"""

from __future__ import annotations

import struct
from array import array
from dataclasses import dataclass, field

from .. import spvasm
from ..errors import EntryNotFound, NotCompute, UnsupportedOpcode
from ..reflect import ModuleInfo, SpirvModule, iter_instructions, reflect
from ..spvasm import (
    DECOR_ARRAY_STRIDE,
    DECOR_BUFFER_BLOCK,
    DECOR_BUILTIN,
    DECOR_OFFSET,
)

# lowered opcodes
L_GID = 1
L_IADD = 2
L_ISUB = 3
L_IMUL = 4
L_UDIV = 5
L_SDIV = 6
L_FADD = 7
L_FSUB = 8
L_FMUL = 9
L_FDIV = 10
L_ACHAIN = 11
L_LOAD = 12
L_STORE = 13
L_RET = 14

_ARITH = {
    spvasm.OP_IADD: L_IADD,
    spvasm.OP_ISUB: L_ISUB,
    spvasm.OP_IMUL: L_IMUL,
    spvasm.OP_UDIV: L_UDIV,
    spvasm.OP_SDIV: L_SDIV,
    spvasm.OP_FADD: L_FADD,
    spvasm.OP_FSUB: L_FSUB,
    spvasm.OP_FMUL: L_FMUL,
    spvasm.OP_FDIV: L_FDIV,
}

PTR_SHIFT = 40
PTR_OFFSET_MASK = (1 << PTR_SHIFT) - 1
LOCAL_SPACE = 0

BUILTIN_GLOBAL_INVOCATION_ID = 28
STORAGE_INPUT = 1
STORAGE_UNIFORM = 2
STORAGE_STORAGE_BUFFER = 12
STORAGE_FUNCTION = 7

# every opcode the interpreter subset admits inside a function body
SUPPORTED_BODY_OPCODES = frozenset(
    [
        spvasm.OP_LABEL,
        spvasm.OP_RETURN,
        spvasm.OP_VARIABLE,
        spvasm.OP_ACCESS_CHAIN,
        spvasm.OP_LOAD,
        spvasm.OP_STORE,
        spvasm.OP_COMPOSITE_EXTRACT,
    ]
    + list(_ARITH)
)

_SPEC_CONSTANT_OPCODES = frozenset({48, 49, 50, 51, 52})


@dataclass
class Program:
    """A lowered, directly executable kernel body."""

    n_regs: int
    template: "array"            # u64 per register: constants + pointer literals
    ops: "array"                 # i32 lowered opcode per instruction
    dst: "array"
    opa: "array"
    opb: "array"
    imm: "array"                 # u64 immediate (access-chain base pointers)
    bindings: tuple[tuple[int, int], ...]  # slot order: space = index + 1
    local_bytes: int
    local_size: tuple[int, int, int]

    @property
    def instructions_per_invocation(self) -> int:
        return len(self.ops)


@dataclass
class ComplianceReport:
    compliant: bool
    unsupported: tuple[int, ...] = ()


def _find_function_body(words, fn_id: int):
    body = []
    in_fn = False
    for opcode, opstart, oplen in iter_instructions(words):
        if opcode == spvasm.OP_FUNCTION and oplen >= 2 and words[opstart + 1] == fn_id:
            in_fn = True
            continue
        if in_fn:
            if opcode == spvasm.OP_FUNCTION_END:
                return body
            body.append((opcode, tuple(words[opstart : opstart + oplen])))
    return None


def _entry_function(module: SpirvModule, info: ModuleInfo, entry: str):
    ep = info.entry(entry)
    if ep is None:
        raise EntryNotFound(f"no entry point named {entry!r}")
    if ep.execution_model.value != "GLCompute":
        raise NotCompute(f"entry {entry!r} is {ep.execution_model.value}, not GLCompute")
    body = _find_function_body(module.words, ep.function_id)
    if body is None:
        raise EntryNotFound(f"entry {entry!r} has no function body")
    return ep, body


def check_subset(module: SpirvModule, entry: str, info: ModuleInfo | None = None) -> ComplianceReport:
    """Scan the entry's body against the opcode table without executing."""
    info = info or reflect(module)
    _, body = _entry_function(module, info, entry)
    bad = sorted({op for op, _ in body if op not in SUPPORTED_BODY_OPCODES})
    for opcode, _opstart, _oplen in iter_instructions(module.words):
        if opcode in _SPEC_CONSTANT_OPCODES and opcode not in bad:
            bad.append(opcode)
    if bad:
        return ComplianceReport(compliant=False, unsupported=tuple(sorted(bad)))
    return ComplianceReport(compliant=True)


class _Scan:
    """Module-scope facts needed by lowering."""

    def __init__(self, module: SpirvModule):
        words = module.words
        self.types: dict[int, tuple] = {}
        self.constants: dict[int, int] = {}       # id -> 32-bit value
        self.globals: dict[int, tuple[int, int]] = {}  # var id -> (storage, pointee tid)
        self.member_offsets: dict[tuple[int, int], int] = {}
        self.array_strides: dict[int, int] = {}
        self.builtins: dict[int, int] = {}         # var id -> builtin code
        self.buffer_blocks: set[int] = set()
        self.set_of: dict[int, int] = {}
        self.binding_of: dict[int, int] = {}

        for opcode, s, n in iter_instructions(words):
            w = words
            if opcode == spvasm.OP_TYPE_INT and n >= 3:
                self.types[w[s]] = ("int", w[s + 1], w[s + 2])
            elif opcode == spvasm.OP_TYPE_FLOAT and n >= 2:
                self.types[w[s]] = ("float", w[s + 1])
            elif opcode == spvasm.OP_TYPE_VECTOR and n >= 3:
                self.types[w[s]] = ("vector", w[s + 1], w[s + 2])
            elif opcode == spvasm.OP_TYPE_RUNTIME_ARRAY and n >= 2:
                self.types[w[s]] = ("rtarray", w[s + 1])
            elif opcode == 28 and n >= 3:  # OpTypeArray
                self.types[w[s]] = ("array", w[s + 1], w[s + 2])
            elif opcode == spvasm.OP_TYPE_STRUCT:
                self.types[w[s]] = ("struct", tuple(w[s + 1 : s + n]))
            elif opcode == spvasm.OP_TYPE_POINTER and n >= 3:
                self.types[w[s]] = ("ptr", w[s + 1], w[s + 2])
            elif opcode == spvasm.OP_CONSTANT and n >= 3:
                self.constants[w[s + 1]] = w[s + 2] & 0xFFFFFFFF
            elif opcode == spvasm.OP_VARIABLE and n >= 3:
                ptr_t = self.types.get(w[s])
                pointee = ptr_t[2] if ptr_t and ptr_t[0] == "ptr" else 0
                self.globals[w[s + 1]] = (w[s + 2], pointee)
            elif opcode == spvasm.OP_DECORATE and n >= 2:
                target, dec = w[s], w[s + 1]
                if dec == DECOR_BUILTIN and n >= 3:
                    self.builtins[target] = w[s + 2]
                elif dec == DECOR_ARRAY_STRIDE and n >= 3:
                    self.array_strides[target] = w[s + 2]
                elif dec == DECOR_BUFFER_BLOCK:
                    self.buffer_blocks.add(target)
                elif dec == 34 and n >= 3:  # DescriptorSet
                    self.set_of[target] = w[s + 2]
                elif dec == 33 and n >= 3:  # Binding
                    self.binding_of[target] = w[s + 2]
            elif opcode == spvasm.OP_MEMBER_DECORATE and n >= 4 and w[s + 2] == DECOR_OFFSET:
                self.member_offsets[(w[s], w[s + 1])] = w[s + 3]

    def scalar_size(self, tid: int) -> int:
        t = self.types.get(tid)
        if t and t[0] in ("int", "float"):
            return 4
        raise UnsupportedOpcode(spvasm.OP_ACCESS_CHAIN)


def lower(module: SpirvModule, entry: str, info: ModuleInfo | None = None) -> Program:
    """Lower the entry function to a Program; raises on subset violations."""
    info = info or reflect(module)
    ep, body = _entry_function(module, info, entry)
    scan = _Scan(module)

    # binding slots, canonical (set, binding) order
    slot_vars = sorted(
        (v for v in scan.globals if v in scan.set_of or v in scan.binding_of),
        key=lambda v: (scan.set_of.get(v, 0), scan.binding_of.get(v, 0)),
    )
    bindings = tuple(
        (scan.set_of.get(v, 0), scan.binding_of.get(v, 0)) for v in slot_vars
    )
    var_space = {v: i + 1 for i, v in enumerate(slot_vars)}

    gid_vars = {v for v, b in scan.builtins.items() if b == BUILTIN_GLOBAL_INVOCATION_ID}

    regs: dict[int, int] = {}
    template: list[int] = []
    sym: dict[int, tuple] = {}  # id -> symbolic value ('gidptr', c) / ('gidvec',)

    def reg_of(rid: int) -> int:
        if rid not in regs:
            regs[rid] = len(template)
            template.append(0)
        return regs[rid]

    def const_reg(rid: int) -> int:
        r = reg_of(rid)
        template[r] = scan.constants[rid]
        return r

    for cid in scan.constants:
        const_reg(cid)

    ops, dst, opa, opb, imm = [], [], [], [], []

    def emit(op, d=-1, a=-1, b=0, im=0):
        ops.append(op)
        dst.append(d)
        opa.append(a)
        opb.append(b)
        imm.append(im)

    local_bytes = 0
    local_ptrs: dict[int, int] = {}  # var id -> encoded pointer

    def element_step(tid: int, index_id: int):
        """Resolve one access-chain index; returns (type, const_offset_delta, dyn)."""
        t = scan.types.get(tid)
        if t is None:
            raise UnsupportedOpcode(spvasm.OP_ACCESS_CHAIN)
        if t[0] == "struct":
            member = scan.constants.get(index_id)
            if member is None:
                raise UnsupportedOpcode(spvasm.OP_ACCESS_CHAIN)
            members = t[1]
            if member >= len(members):
                raise UnsupportedOpcode(spvasm.OP_ACCESS_CHAIN)
            moff = scan.member_offsets.get((tid, member), 4 * member)
            return members[member], moff, None
        if t[0] in ("rtarray", "array"):
            elem = t[1]
            stride = scan.array_strides.get(tid, scan.scalar_size(elem))
            if index_id in scan.constants:
                return elem, scan.constants[index_id] * stride, None
            return elem, 0, (index_id, stride)
        raise UnsupportedOpcode(spvasm.OP_ACCESS_CHAIN)

    for opcode, operands in body:
        if opcode == spvasm.OP_LABEL:
            continue
        if opcode == spvasm.OP_RETURN:
            emit(L_RET)
            break
        if opcode == spvasm.OP_VARIABLE:
            _tid, rid, storage = operands[0], operands[1], operands[2]
            if storage != STORAGE_FUNCTION:
                raise UnsupportedOpcode(spvasm.OP_VARIABLE)
            ptr = (LOCAL_SPACE << PTR_SHIFT) | local_bytes
            local_ptrs[rid] = ptr
            template[reg_of(rid)] = ptr
            local_bytes += 4
            if len(operands) >= 4:  # initializer
                emit(L_STORE, a=regs[rid], b=const_reg(operands[3]))
            continue
        if opcode == spvasm.OP_ACCESS_CHAIN:
            _tid, rid, base = operands[0], operands[1], operands[2]
            indices = operands[3:]
            if base in gid_vars:
                comp = scan.constants.get(indices[0]) if indices else None
                if comp is None:
                    raise UnsupportedOpcode(spvasm.OP_ACCESS_CHAIN)
                sym[rid] = ("gidptr", comp)
                continue
            if base in local_ptrs and not indices:
                emit(L_ACHAIN, d=reg_of(rid), a=-1, b=0, im=local_ptrs[base])
                continue
            if base not in scan.globals or base not in var_space:
                raise UnsupportedOpcode(spvasm.OP_ACCESS_CHAIN)
            _storage, tid = scan.globals[base]
            offset = 0
            dyn = None
            for index_id in indices:
                tid, delta, d = element_step(tid, index_id)
                offset += delta
                if d is not None:
                    if dyn is not None:
                        raise UnsupportedOpcode(spvasm.OP_ACCESS_CHAIN)
                    dyn = d
            base_ptr = (var_space[base] << PTR_SHIFT) | offset
            if dyn is None:
                emit(L_ACHAIN, d=reg_of(rid), a=-1, b=0, im=base_ptr)
            else:
                emit(L_ACHAIN, d=reg_of(rid), a=reg_of(dyn[0]), b=dyn[1], im=base_ptr)
            continue
        if opcode == spvasm.OP_LOAD:
            _tid, rid, ptr = operands[0], operands[1], operands[2]
            if ptr in gid_vars:
                sym[rid] = ("gidvec",)
                continue
            if ptr in sym and sym[ptr][0] == "gidptr":
                emit(L_GID, d=reg_of(rid), a=sym[ptr][1])
                continue
            emit(L_LOAD, d=reg_of(rid), a=reg_of(ptr))
            continue
        if opcode == spvasm.OP_STORE:
            ptr, value = operands[0], operands[1]
            emit(L_STORE, a=reg_of(ptr), b=reg_of(value))
            continue
        if opcode == spvasm.OP_COMPOSITE_EXTRACT:
            _tid, rid, src = operands[0], operands[1], operands[2]
            if src in sym and sym[src][0] == "gidvec" and len(operands) == 4:
                emit(L_GID, d=reg_of(rid), a=operands[3])
                continue
            raise UnsupportedOpcode(spvasm.OP_COMPOSITE_EXTRACT)
        if opcode in _ARITH:
            _tid, rid, lhs, rhs = operands[0], operands[1], operands[2], operands[3]
            emit(_ARITH[opcode], d=reg_of(rid), a=reg_of(lhs), b=reg_of(rhs))
            continue
        raise UnsupportedOpcode(opcode)

    if not ops or ops[-1] != L_RET:
        emit(L_RET)

    return Program(
        n_regs=len(template),
        template=array("Q", template),
        ops=array("i", ops),
        dst=array("i", dst),
        opa=array("i", opa),
        opb=array("i", opb),
        imm=array("Q", imm),
        bindings=bindings,
        local_bytes=local_bytes,
        local_size=ep.local_size or (1, 1, 1),
    )
