# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled execution kernel: same semantics as pykernel.run, C speed.

Selected at import by girp.interp when the extension built; the dispatch loop
here is the hot path of every cold-start and frame-draw measurement.
"""

from libc.stdint cimport int32_t, uint8_t, uint32_t, uint64_t
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy, memset

from ..errors import OutOfBoundsAccess

KERNEL_NAME = "cython"

DEF L_GID = 1
DEF L_IADD = 2
DEF L_ISUB = 3
DEF L_IMUL = 4
DEF L_UDIV = 5
DEF L_SDIV = 6
DEF L_FADD = 7
DEF L_FSUB = 8
DEF L_FMUL = 9
DEF L_FDIV = 10
DEF L_ACHAIN = 11
DEF L_LOAD = 12
DEF L_STORE = 13
DEF L_RET = 14

DEF PTR_SHIFT = 40


cdef inline float _as_f32(uint32_t bits) nogil:
    cdef float f
    memcpy(&f, &bits, 4)
    return f


cdef inline uint32_t _as_bits(float f) nogil:
    cdef uint32_t u
    memcpy(&u, &f, 4)
    return u


def run(program, list buffers, tuple groups):
    """Mirror of girp.interp.pykernel.run over the same lowered Program."""
    cdef int[::1] ops = program.ops
    cdef int[::1] dst = program.dst
    cdef int[::1] opa = program.opa
    cdef int[::1] opb = program.opb
    cdef unsigned long long[::1] imm = program.imm
    cdef unsigned long long[::1] template = program.template

    cdef int n_ops = ops.shape[0]
    cdef int n_regs = template.shape[0]
    cdef int local_bytes = program.local_bytes

    cdef int gx = groups[0], gy = groups[1], gz = groups[2]
    cdef int lx = program.local_size[0]
    cdef int ly = program.local_size[1]
    cdef int lz = program.local_size[2]

    cdef int nbuf = len(buffers)
    cdef int nspace = nbuf + 1
    cdef uint8_t** mem = <uint8_t**>malloc(nspace * sizeof(uint8_t*))
    cdef uint64_t* mlen = <uint64_t*>malloc(nspace * sizeof(uint64_t))
    cdef uint64_t* regs = <uint64_t*>malloc(n_regs * sizeof(uint64_t))
    cdef uint8_t* locmem = NULL
    if local_bytes > 0:
        locmem = <uint8_t*>malloc(local_bytes)

    # keep the buffer views alive for the duration of the loop
    views = []
    cdef unsigned char[::1] view
    cdef int i
    mem[0] = locmem
    mlen[0] = local_bytes
    for i in range(nbuf):
        view = buffers[i]
        views.append(view)
        mem[i + 1] = &view[0] if view.shape[0] > 0 else NULL
        mlen[i + 1] = view.shape[0]

    cdef uint64_t invocations = 0
    cdef uint64_t instructions = 0
    cdef int wx, wy, wz, tx, ty, tz, pc, op
    cdef uint32_t gid0, gid1, gid2
    cdef uint64_t ptr, off
    cdef int space
    cdef uint32_t ua, ub, ur
    cdef int32_t sa, sb
    cdef float fa, fb
    cdef int err_space = -2
    cdef uint64_t err_off = 0
    cdef uint8_t* p

    with nogil:
        for wz in range(gz):
            for wy in range(gy):
                for wx in range(gx):
                    for tz in range(lz):
                        for ty in range(ly):
                            for tx in range(lx):
                                gid0 = <uint32_t>(wx * lx + tx)
                                gid1 = <uint32_t>(wy * ly + ty)
                                gid2 = <uint32_t>(wz * lz + tz)
                                if n_regs > 0:
                                    memcpy(regs, &template[0], n_regs * sizeof(uint64_t))
                                if local_bytes > 0:
                                    memset(locmem, 0, local_bytes)
                                for pc in range(n_ops):
                                    op = ops[pc]
                                    if op == L_LOAD or op == L_STORE:
                                        ptr = regs[opa[pc]]
                                        space = <int>(ptr >> PTR_SHIFT)
                                        off = ptr & ((<uint64_t>1 << PTR_SHIFT) - 1)
                                        if space >= nspace or off + 4 > mlen[space]:
                                            err_space = space - 1
                                            err_off = off
                                            break
                                        p = mem[space] + off
                                        if op == L_LOAD:
                                            memcpy(&ur, p, 4)
                                            regs[dst[pc]] = ur
                                        else:
                                            ur = <uint32_t>regs[opb[pc]]
                                            memcpy(p, &ur, 4)
                                    elif op == L_ACHAIN:
                                        ptr = imm[pc]
                                        if opa[pc] >= 0:
                                            ptr += <uint64_t>(<uint32_t>regs[opa[pc]]) * <uint64_t>opb[pc]
                                        regs[dst[pc]] = ptr
                                    elif op == L_GID:
                                        if opa[pc] == 0:
                                            regs[dst[pc]] = gid0
                                        elif opa[pc] == 1:
                                            regs[dst[pc]] = gid1
                                        else:
                                            regs[dst[pc]] = gid2
                                    elif op == L_IADD:
                                        regs[dst[pc]] = <uint32_t>(<uint32_t>regs[opa[pc]] + <uint32_t>regs[opb[pc]])
                                    elif op == L_ISUB:
                                        regs[dst[pc]] = <uint32_t>(<uint32_t>regs[opa[pc]] - <uint32_t>regs[opb[pc]])
                                    elif op == L_IMUL:
                                        regs[dst[pc]] = <uint32_t>(<uint32_t>regs[opa[pc]] * <uint32_t>regs[opb[pc]])
                                    elif op == L_UDIV:
                                        ua = <uint32_t>regs[opa[pc]]
                                        ub = <uint32_t>regs[opb[pc]]
                                        regs[dst[pc]] = (ua / ub) if ub != 0 else 0
                                    elif op == L_SDIV:
                                        sa = <int32_t><uint32_t>regs[opa[pc]]
                                        sb = <int32_t><uint32_t>regs[opb[pc]]
                                        if sb == 0:
                                            regs[dst[pc]] = 0
                                        elif sb == -1:
                                            regs[dst[pc]] = <uint32_t>(-sa)
                                        else:
                                            regs[dst[pc]] = <uint32_t>(sa / sb)
                                    elif op == L_FADD:
                                        regs[dst[pc]] = _as_bits(_as_f32(<uint32_t>regs[opa[pc]]) + _as_f32(<uint32_t>regs[opb[pc]]))
                                    elif op == L_FSUB:
                                        regs[dst[pc]] = _as_bits(_as_f32(<uint32_t>regs[opa[pc]]) - _as_f32(<uint32_t>regs[opb[pc]]))
                                    elif op == L_FMUL:
                                        regs[dst[pc]] = _as_bits(_as_f32(<uint32_t>regs[opa[pc]]) * _as_f32(<uint32_t>regs[opb[pc]]))
                                    elif op == L_FDIV:
                                        ua = <uint32_t>regs[opa[pc]]
                                        ub = <uint32_t>regs[opb[pc]]
                                        fa = _as_f32(ua)
                                        fb = _as_f32(ub)
                                        if fb == 0.0:
                                            if fa == 0.0 or fa != fa:
                                                regs[dst[pc]] = <uint32_t>0x7FC00000u
                                            else:
                                                regs[dst[pc]] = ((ua ^ ub) & <uint32_t>0x80000000u) | <uint32_t>0x7F800000u
                                        else:
                                            regs[dst[pc]] = _as_bits(fa / fb)
                                    else:  # L_RET
                                        instructions += pc + 1
                                        break
                                else:
                                    instructions += n_ops
                                if err_space != -2:
                                    break
                                invocations += 1
                            if err_space != -2:
                                break
                        if err_space != -2:
                            break
                    if err_space != -2:
                        break
                if err_space != -2:
                    break
            if err_space != -2:
                break

    free(regs)
    free(mem)
    free(mlen)
    if locmem != NULL:
        free(locmem)

    if err_space != -2:
        raise OutOfBoundsAccess(err_space, err_off)
    return invocations, instructions
