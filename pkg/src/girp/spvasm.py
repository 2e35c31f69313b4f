"""A minimal SPIR-V assembler for building the fixture compute kernels.

Clients normally submit pre-compiled binaries; this builder exists so the test
corpus and benchmarks carry their kernels as code rather than opaque blobs.
It emits classic GLSL-compiler-shaped modules: storage buffers are Uniform-class
variables whose struct type carries BufferBlock, runtime arrays carry
ArrayStride 4, members carry explicit Offsets.
"""

from __future__ import annotations

import struct

from .reflect import SPIRV_MAGIC

# opcodes
OP_MEMORY_MODEL = 14
OP_ENTRY_POINT = 15
OP_EXECUTION_MODE = 16
OP_CAPABILITY = 17
OP_TYPE_VOID = 19
OP_TYPE_BOOL = 20
OP_TYPE_INT = 21
OP_TYPE_FLOAT = 22
OP_TYPE_VECTOR = 23
OP_TYPE_RUNTIME_ARRAY = 29
OP_TYPE_STRUCT = 30
OP_TYPE_POINTER = 32
OP_TYPE_FUNCTION = 33
OP_CONSTANT_TRUE = 41
OP_CONSTANT = 43
OP_FUNCTION = 54
OP_FUNCTION_END = 56
OP_VARIABLE = 59
OP_LOAD = 61
OP_STORE = 62
OP_ACCESS_CHAIN = 65
OP_DECORATE = 71
OP_MEMBER_DECORATE = 72
OP_COMPOSITE_EXTRACT = 81
OP_IADD = 128
OP_FADD = 129
OP_ISUB = 130
OP_FSUB = 131
OP_IMUL = 132
OP_FMUL = 133
OP_UDIV = 134
OP_SDIV = 135
OP_FDIV = 136
OP_LABEL = 248
OP_BRANCH = 249
OP_BRANCH_CONDITIONAL = 250
OP_RETURN = 253

CAP_SHADER = 1
ADDRESSING_LOGICAL = 0
MEMMODEL_GLSL450 = 1
EXEC_MODEL_GLCOMPUTE = 5
EXEC_MODE_LOCAL_SIZE = 17

STORAGE_INPUT = 1
STORAGE_UNIFORM = 2

DECOR_BUFFER_BLOCK = 3
DECOR_ARRAY_STRIDE = 6
DECOR_BUILTIN = 11
DECOR_NON_WRITABLE = 24
DECOR_BINDING = 33
DECOR_DESCRIPTOR_SET = 34
DECOR_OFFSET = 35

BUILTIN_GLOBAL_INVOCATION_ID = 28

FUNCTION_CONTROL_NONE = 0


def string_words(text: str) -> list[int]:
    raw = text.encode("utf-8") + b"\x00"
    raw += b"\x00" * (-len(raw) % 4)
    return list(struct.unpack(f"<{len(raw) // 4}I", raw))


class Assembler:
    """Id allocation plus ordered logical sections of a module."""

    def __init__(self, version: tuple[int, int] = (1, 0), generator: int = 0):
        self.version = version
        self.generator = generator
        self._next_id = 1
        self.capabilities: list[list[int]] = []
        self.header_ins: list[list[int]] = []   # memory model, entry points, modes
        self.decorations: list[list[int]] = []
        self.globals: list[list[int]] = []      # types, constants, module-scope vars
        self.functions: list[list[int]] = []

    def new_id(self) -> int:
        v = self._next_id
        self._next_id += 1
        return v

    @staticmethod
    def _pack(opcode: int, operands: list[int]) -> list[int]:
        return [((len(operands) + 1) << 16) | opcode] + list(operands)

    def emit(self, section: list, opcode: int, *operands: int) -> None:
        section.append(self._pack(opcode, list(operands)))

    def assemble(self) -> bytes:
        words = [
            SPIRV_MAGIC,
            (self.version[0] << 16) | (self.version[1] << 8),
            self.generator,
            self._next_id,
            0,
        ]
        for section in (self.capabilities, self.header_ins, self.decorations,
                        self.globals, self.functions):
            for ins in section:
                words.extend(ins)
        return struct.pack(f"<{len(words)}I", *words)


class KernelBuilder:
    """Builds single-entry GLCompute kernels over 32-bit scalar buffers.

    The body is one straight-line block: exactly the shape the reference
    interpreter executes.
    """

    def __init__(self, local_size: tuple[int, int, int] = (64, 1, 1),
                 entry: str = "main", version: tuple[int, int] = (1, 0)):
        self.asm = Assembler(version=version)
        self.entry = entry
        self.local_size = local_size
        a = self.asm

        a.emit(a.capabilities, OP_CAPABILITY, CAP_SHADER)
        a.emit(a.header_ins, OP_MEMORY_MODEL, ADDRESSING_LOGICAL, MEMMODEL_GLSL450)

        self.t_void = a.new_id()
        self.t_fn = a.new_id()
        self.t_uint = a.new_id()
        self.t_int = a.new_id()
        self.t_float = a.new_id()
        self.t_uvec3 = a.new_id()
        self.t_ptr_in_uvec3 = a.new_id()
        self.t_ptr_in_uint = a.new_id()
        self.gid_var = a.new_id()
        a.emit(a.globals, OP_TYPE_VOID, self.t_void)
        a.emit(a.globals, OP_TYPE_FUNCTION, self.t_fn, self.t_void)
        a.emit(a.globals, OP_TYPE_INT, self.t_uint, 32, 0)
        a.emit(a.globals, OP_TYPE_INT, self.t_int, 32, 1)
        a.emit(a.globals, OP_TYPE_FLOAT, self.t_float, 32)
        a.emit(a.globals, OP_TYPE_VECTOR, self.t_uvec3, self.t_uint, 3)
        a.emit(a.globals, OP_TYPE_POINTER, self.t_ptr_in_uvec3, STORAGE_INPUT, self.t_uvec3)
        a.emit(a.globals, OP_TYPE_POINTER, self.t_ptr_in_uint, STORAGE_INPUT, self.t_uint)
        a.emit(a.globals, OP_VARIABLE, self.t_ptr_in_uvec3, self.gid_var, STORAGE_INPUT)
        a.emit(a.decorations, OP_DECORATE, self.gid_var, DECOR_BUILTIN,
               BUILTIN_GLOBAL_INVOCATION_ID)

        self._scalar_types = {"uint": self.t_uint, "int": self.t_int, "float": self.t_float}
        self._uniform_elem_ptrs: dict[int, int] = {}
        self._consts: dict[tuple[int, int], int] = {}
        self.body: list[list[int]] = []
        self._buffers: list[int] = []

    # --- module-scope pieces ---------------------------------------------

    def _uniform_ptr(self, elem_type: int) -> int:
        if elem_type not in self._uniform_elem_ptrs:
            a = self.asm
            pid = a.new_id()
            a.emit(a.globals, OP_TYPE_POINTER, pid, STORAGE_UNIFORM, elem_type)
            self._uniform_elem_ptrs[elem_type] = pid
        return self._uniform_elem_ptrs[elem_type]

    def const(self, value: int, elem: str = "uint") -> int:
        tid = self._scalar_types[elem]
        if elem == "float":
            bits = struct.unpack("<I", struct.pack("<f", value))[0]
        else:
            bits = value & 0xFFFFFFFF
        key = (tid, bits)
        if key not in self._consts:
            a = self.asm
            cid = a.new_id()
            a.emit(a.globals, OP_CONSTANT, tid, cid, bits)
            self._consts[key] = cid
        return self._consts[key]

    def buffer(self, dset: int, binding: int, elem: str = "uint",
               readonly: bool = False) -> dict:
        """layout(set, binding) buffer { T data[]; } — a runtime-array block."""
        a = self.asm
        elem_t = self._scalar_types[elem]
        t_arr, t_struct, t_ptr, var = a.new_id(), a.new_id(), a.new_id(), a.new_id()
        a.emit(a.globals, OP_TYPE_RUNTIME_ARRAY, t_arr, elem_t)
        a.emit(a.globals, OP_TYPE_STRUCT, t_struct, t_arr)
        a.emit(a.globals, OP_TYPE_POINTER, t_ptr, STORAGE_UNIFORM, t_struct)
        a.emit(a.globals, OP_VARIABLE, t_ptr, var, STORAGE_UNIFORM)
        a.emit(a.decorations, OP_DECORATE, t_arr, DECOR_ARRAY_STRIDE, 4)
        a.emit(a.decorations, OP_DECORATE, t_struct, DECOR_BUFFER_BLOCK)
        a.emit(a.decorations, OP_MEMBER_DECORATE, t_struct, 0, DECOR_OFFSET, 0)
        a.emit(a.decorations, OP_DECORATE, var, DECOR_DESCRIPTOR_SET, dset)
        a.emit(a.decorations, OP_DECORATE, var, DECOR_BINDING, binding)
        if readonly:
            a.emit(a.decorations, OP_DECORATE, var, DECOR_NON_WRITABLE)
        self._buffers.append(var)
        return {"var": var, "elem": elem, "array": True}

    def param_block(self, dset: int, binding: int, fields: list[str]) -> dict:
        """layout(set, binding) buffer { T f0; T f1; ... } — scalar members."""
        a = self.asm
        t_struct, t_ptr, var = a.new_id(), a.new_id(), a.new_id()
        member_types = [self._scalar_types[f] for f in fields]
        a.globals.append(Assembler._pack(OP_TYPE_STRUCT, [t_struct] + member_types))
        a.emit(a.globals, OP_TYPE_POINTER, t_ptr, STORAGE_UNIFORM, t_struct)
        a.emit(a.globals, OP_VARIABLE, t_ptr, var, STORAGE_UNIFORM)
        a.emit(a.decorations, OP_DECORATE, t_struct, DECOR_BUFFER_BLOCK)
        for i in range(len(fields)):
            a.emit(a.decorations, OP_MEMBER_DECORATE, t_struct, i, DECOR_OFFSET, 4 * i)
        a.emit(a.decorations, OP_DECORATE, var, DECOR_DESCRIPTOR_SET, dset)
        a.emit(a.decorations, OP_DECORATE, var, DECOR_BINDING, binding)
        self._buffers.append(var)
        return {"var": var, "elem": fields, "array": False}

    # --- body ---------------------------------------------------------------

    def _body_emit(self, opcode: int, *operands: int) -> None:
        self.body.append(Assembler._pack(opcode, list(operands)))

    def gid(self, component: int = 0) -> int:
        """Load one component of GlobalInvocationId via an access chain."""
        a = self.asm
        ptr, val = a.new_id(), a.new_id()
        self._body_emit(OP_ACCESS_CHAIN, self.t_ptr_in_uint, ptr, self.gid_var,
                        self.const(component))
        self._body_emit(OP_LOAD, self.t_uint, val, ptr)
        return val

    def load(self, buf: dict, index: int) -> int:
        """buf.data[index]; index is a result id holding a uint."""
        a = self.asm
        elem = buf["elem"]
        ptr, val = a.new_id(), a.new_id()
        self._body_emit(OP_ACCESS_CHAIN, self._uniform_ptr(self._scalar_types[elem]),
                        ptr, buf["var"], self.const(0, "int"), index)
        self._body_emit(OP_LOAD, self._scalar_types[elem], val, ptr)
        return val

    def store(self, buf: dict, index: int, value: int) -> None:
        elem = buf["elem"]
        ptr = self.asm.new_id()
        self._body_emit(OP_ACCESS_CHAIN, self._uniform_ptr(self._scalar_types[elem]),
                        ptr, buf["var"], self.const(0, "int"), index)
        self._body_emit(OP_STORE, ptr, value)

    def load_field(self, block: dict, member: int) -> int:
        elem = block["elem"][member]
        ptr, val = self.asm.new_id(), self.asm.new_id()
        self._body_emit(OP_ACCESS_CHAIN, self._uniform_ptr(self._scalar_types[elem]),
                        ptr, block["var"], self.const(member, "int"))
        self._body_emit(OP_LOAD, self._scalar_types[elem], val, ptr)
        return val

    def _binop(self, opcode: int, tid: int, lhs: int, rhs: int) -> int:
        rid = self.asm.new_id()
        self._body_emit(opcode, tid, rid, lhs, rhs)
        return rid

    def iadd(self, a, b):
        return self._binop(OP_IADD, self.t_uint, a, b)

    def isub(self, a, b):
        return self._binop(OP_ISUB, self.t_uint, a, b)

    def imul(self, a, b):
        return self._binop(OP_IMUL, self.t_uint, a, b)

    def udiv(self, a, b):
        return self._binop(OP_UDIV, self.t_uint, a, b)

    def sdiv(self, a, b):
        return self._binop(OP_SDIV, self.t_int, a, b)

    def fadd(self, a, b):
        return self._binop(OP_FADD, self.t_float, a, b)

    def fsub(self, a, b):
        return self._binop(OP_FSUB, self.t_float, a, b)

    def fmul(self, a, b):
        return self._binop(OP_FMUL, self.t_float, a, b)

    def fdiv(self, a, b):
        return self._binop(OP_FDIV, self.t_float, a, b)

    # --- assembly -------------------------------------------------------------

    def finish(self, raw_tail: list[list[int]] | None = None) -> bytes:
        a = self.asm
        fn, label = a.new_id(), a.new_id()
        a.header_ins.insert(
            1,
            Assembler._pack(
                OP_ENTRY_POINT,
                [EXEC_MODEL_GLCOMPUTE, fn] + string_words(self.entry) + [self.gid_var],
            ),
        )
        a.emit(a.header_ins, OP_EXECUTION_MODE, fn, EXEC_MODE_LOCAL_SIZE,
               *self.local_size)
        a.emit(a.functions, OP_FUNCTION, self.t_void, fn, FUNCTION_CONTROL_NONE,
               self.t_fn)
        a.emit(a.functions, OP_LABEL, label)
        a.functions.extend(self.body)
        if raw_tail:
            a.functions.extend(raw_tail)
        else:
            a.emit(a.functions, OP_RETURN)
        a.emit(a.functions, OP_FUNCTION_END)
        return a.assemble()
