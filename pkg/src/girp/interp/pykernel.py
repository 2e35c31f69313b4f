"""Pure-Python execution kernel: the always-available fallback.

Semantics are the contract; the compiled kernel in _kernel.pyx must match this
bit-for-bit. Integer ops wrap modulo 2**32, float ops are IEEE-754 binary32
round-to-nearest-even (computing in binary64 and rounding once is exact for
+,-,*,/ because 53 >= 2*24 + 2).
"""

from __future__ import annotations

import struct

from ..errors import OutOfBoundsAccess
from .program import (
    L_ACHAIN,
    L_FADD,
    L_FDIV,
    L_FMUL,
    L_FSUB,
    L_GID,
    L_IADD,
    L_IMUL,
    L_ISUB,
    L_LOAD,
    L_RET,
    L_SDIV,
    L_STORE,
    L_UDIV,
    PTR_OFFSET_MASK,
    PTR_SHIFT,
    Program,
)

_F32 = struct.Struct("<f")
_U32 = struct.Struct("<I")

KERNEL_NAME = "python"


def _f32(bits: int) -> float:
    return _F32.unpack(_U32.pack(bits))[0]


def _bits(value: float) -> int:
    try:
        return _U32.unpack(_F32.pack(value))[0]
    except OverflowError:
        return 0x7F800000 if value > 0 else 0xFF800000


def _sext32(v: int) -> int:
    return v - 0x100000000 if v & 0x80000000 else v


def run(program: Program, buffers: list[bytearray],
        groups: tuple[int, int, int]) -> tuple[int, int]:
    """Execute every invocation in canonical order; returns (invocations, instructions)."""
    gx, gy, gz = groups
    lx, ly, lz = program.local_size
    ops = program.ops
    dst = program.dst
    opa = program.opa
    opb = program.opb
    imm = program.imm
    n_ops = len(ops)
    template = list(program.template)
    locmem = bytearray(program.local_bytes)
    spaces = [locmem] + list(buffers)

    invocations = 0
    instructions = 0

    for wz in range(gz):
        for wy in range(gy):
            for wx in range(gx):
                for tz in range(lz):
                    for ty in range(ly):
                        for tx in range(lx):
                            gid = (wx * lx + tx, wy * ly + ty, wz * lz + tz)
                            regs = template.copy()
                            if program.local_bytes:
                                locmem[:] = bytes(program.local_bytes)
                            for pc in range(n_ops):
                                op = ops[pc]
                                if op == L_LOAD:
                                    ptr = regs[opa[pc]]
                                    space = ptr >> PTR_SHIFT
                                    off = ptr & PTR_OFFSET_MASK
                                    mem = spaces[space]
                                    if off + 4 > len(mem):
                                        raise OutOfBoundsAccess(space - 1, off)
                                    regs[dst[pc]] = _U32.unpack_from(mem, off)[0]
                                elif op == L_STORE:
                                    ptr = regs[opa[pc]]
                                    space = ptr >> PTR_SHIFT
                                    off = ptr & PTR_OFFSET_MASK
                                    mem = spaces[space]
                                    if off + 4 > len(mem):
                                        raise OutOfBoundsAccess(space - 1, off)
                                    _U32.pack_into(mem, off, regs[opb[pc]] & 0xFFFFFFFF)
                                elif op == L_ACHAIN:
                                    base = imm[pc]
                                    if opa[pc] >= 0:
                                        base += (regs[opa[pc]] & 0xFFFFFFFF) * opb[pc]
                                    regs[dst[pc]] = base
                                elif op == L_GID:
                                    regs[dst[pc]] = gid[opa[pc]]
                                elif op == L_IADD:
                                    regs[dst[pc]] = (regs[opa[pc]] + regs[opb[pc]]) & 0xFFFFFFFF
                                elif op == L_ISUB:
                                    regs[dst[pc]] = (regs[opa[pc]] - regs[opb[pc]]) & 0xFFFFFFFF
                                elif op == L_IMUL:
                                    regs[dst[pc]] = (regs[opa[pc]] * regs[opb[pc]]) & 0xFFFFFFFF
                                elif op == L_UDIV:
                                    b = regs[opb[pc]] & 0xFFFFFFFF
                                    a = regs[opa[pc]] & 0xFFFFFFFF
                                    regs[dst[pc]] = (a // b) if b else 0
                                elif op == L_SDIV:
                                    b = _sext32(regs[opb[pc]] & 0xFFFFFFFF)
                                    a = _sext32(regs[opa[pc]] & 0xFFFFFFFF)
                                    if b == 0:
                                        q = 0
                                    else:
                                        q = abs(a) // abs(b)
                                        if (a < 0) != (b < 0):
                                            q = -q
                                    regs[dst[pc]] = q & 0xFFFFFFFF
                                elif op == L_FADD:
                                    regs[dst[pc]] = _bits(_f32(regs[opa[pc]] & 0xFFFFFFFF)
                                                          + _f32(regs[opb[pc]] & 0xFFFFFFFF))
                                elif op == L_FSUB:
                                    regs[dst[pc]] = _bits(_f32(regs[opa[pc]] & 0xFFFFFFFF)
                                                          - _f32(regs[opb[pc]] & 0xFFFFFFFF))
                                elif op == L_FMUL:
                                    regs[dst[pc]] = _bits(_f32(regs[opa[pc]] & 0xFFFFFFFF)
                                                          * _f32(regs[opb[pc]] & 0xFFFFFFFF))
                                elif op == L_FDIV:
                                    ab = regs[opa[pc]] & 0xFFFFFFFF
                                    bb = regs[opb[pc]] & 0xFFFFFFFF
                                    fa = _f32(ab)
                                    fb = _f32(bb)
                                    if fb == 0.0:
                                        if fa == 0.0 or fa != fa:
                                            regs[dst[pc]] = 0x7FC00000
                                        else:
                                            regs[dst[pc]] = ((ab ^ bb) & 0x80000000) | 0x7F800000
                                    else:
                                        regs[dst[pc]] = _bits(fa / fb)
                                elif op == L_RET:
                                    instructions += pc + 1
                                    break
                            else:
                                instructions += n_ops
                            invocations += 1
    return invocations, instructions
