"""The fixture kernel corpus used by tests, the CLI demos, and the benchmarks.

Each builder returns the raw SPIR-V bytes of a single-entry GLCompute kernel
within the interpreter's supported subset (except the branch kernel, which is
the deliberate counter-example).
"""

from __future__ import annotations

import struct

from . import spvasm
from .spvasm import KernelBuilder

MULTIPLY_ELEMENTS = 65536
MULTIPLY_GROUPS = (1024, 1, 1)
MULTIPLY_LOCAL = (64, 1, 1)


def multiply_kernel() -> bytes:
    """64k-integer multiply: b[i] = a[i] * b[i], a at (0,0) read-only, b at (0,1).

    Two bindings: the second buffer is both an input and the output.
    """
    kb = KernelBuilder(local_size=MULTIPLY_LOCAL)
    a = kb.buffer(0, 0, "uint", readonly=True)
    b = kb.buffer(0, 1, "uint")
    i = kb.gid(0)
    kb.store(b, i, kb.imul(kb.load(a, i), kb.load(b, i)))
    return kb.finish()


def fma_kernel(scale: int = 2) -> bytes:
    """saxpy-style: y[i] = scale * x[i] + y[i], x at (0,0), y at (0,1)."""
    kb = KernelBuilder(local_size=MULTIPLY_LOCAL)
    x = kb.buffer(0, 0, "uint", readonly=True)
    y = kb.buffer(0, 1, "uint")
    i = kb.gid(0)
    kb.store(y, i, kb.iadd(kb.imul(kb.const(scale), kb.load(x, i)), kb.load(y, i)))
    return kb.finish()


FILL_VALUE = 0xDEADBEEF


def fill_kernel(value: int = FILL_VALUE) -> bytes:
    """out[i] = constant, single binding at (0,0)."""
    kb = KernelBuilder(local_size=MULTIPLY_LOCAL)
    out = kb.buffer(0, 0, "uint")
    kb.store(out, kb.gid(0), kb.const(value))
    return kb.finish()


def float_fma_kernel() -> bytes:
    """Float path coverage: y[i] = x[i] * 0.5 + y[i] in f32."""
    kb = KernelBuilder(local_size=MULTIPLY_LOCAL)
    x = kb.buffer(0, 0, "float", readonly=True)
    y = kb.buffer(0, 1, "float")
    i = kb.gid(0)
    kb.store(y, i, kb.fadd(kb.fmul(kb.load(x, i), kb.const(0.5, "float")), kb.load(y, i)))
    return kb.finish()


FRAME_MIX_A = 2654435761
FRAME_MIX_B = 2246822519


def frame_kernel() -> bytes:
    """Framebuffer generator: fb[i] = frame*A + i*B (wrapping u32).

    Parameters at (0,0): { uint frame }. Framebuffer at (0,1): one u32 RGBA
    pixel per element. Resolution only changes the dispatch size and the
    framebuffer allocation, never the module bytes.
    """
    kb = KernelBuilder(local_size=MULTIPLY_LOCAL)
    params = kb.param_block(0, 0, ["uint"])
    fb = kb.buffer(0, 1, "uint")
    i = kb.gid(0)
    frame = kb.load_field(params, 0)
    pixel = kb.iadd(kb.imul(frame, kb.const(FRAME_MIX_A)), kb.imul(i, kb.const(FRAME_MIX_B)))
    kb.store(fb, i, pixel)
    return kb.finish()


def branch_kernel() -> bytes:
    """Contains OpBranchConditional (opcode 250): outside the interpreter subset."""
    kb = KernelBuilder(local_size=(1, 1, 1))
    out = kb.buffer(0, 0, "uint")
    asm = kb.asm
    t_bool = asm.new_id()
    cond = asm.new_id()
    asm.emit(asm.globals, spvasm.OP_TYPE_BOOL, t_bool)
    asm.emit(asm.globals, spvasm.OP_CONSTANT_TRUE, t_bool, cond)
    l_then, l_else = asm.new_id(), asm.new_id()
    tail = [
        spvasm.Assembler._pack(spvasm.OP_BRANCH_CONDITIONAL, [cond, l_then, l_else]),
        spvasm.Assembler._pack(spvasm.OP_LABEL, [l_then]),
        spvasm.Assembler._pack(spvasm.OP_RETURN, []),
        spvasm.Assembler._pack(spvasm.OP_LABEL, [l_else]),
        spvasm.Assembler._pack(spvasm.OP_RETURN, []),
    ]
    _ = out
    return kb.finish(raw_tail=tail)


def header_only_module() -> bytes:
    """Five header words, no instructions."""
    from .reflect import SPIRV_MAGIC

    return struct.pack("<5I", SPIRV_MAGIC, 0x00010000, 0, 1, 0)


def multiply_inputs(n: int = MULTIPLY_ELEMENTS) -> tuple[bytearray, bytearray]:
    """The canonical workload inputs: a[i] = i, b[i] = 3."""
    a = bytearray(struct.pack(f"<{n}I", *range(n)))
    b = bytearray(struct.pack(f"<{n}I", *([3] * n)))
    return a, b


def multiply_expected(n: int = MULTIPLY_ELEMENTS) -> bytes:
    """Brute-force scalar oracle for the multiply workload."""
    return struct.pack(f"<{n}I", *[(i * 3) & 0xFFFFFFFF for i in range(n)])
