import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from girp import errors, fixtures, interp
from girp.interp import InterpLimits, KERNELS, dry_run, execute
from girp.reflect import SpirvModule

# every kernel backend must agree bit-for-bit, so all tests run against each
pytestmark = pytest.mark.parametrize("kernel_name", sorted(KERNELS))


def run(module_bytes, groups, buffers, kernel_name, entry="main", limits=None):
    return execute(
        SpirvModule.from_bytes(module_bytes),
        entry,
        groups,
        buffers,
        limits=limits or InterpLimits(),
        kernel=KERNELS[kernel_name],
    )


class TestOracleEquivalence:
    def test_multiply_64k(self, kernel_name):
        a, b = fixtures.multiply_inputs()
        stats = run(fixtures.multiply_kernel(), fixtures.MULTIPLY_GROUPS,
                    {(0, 0): a, (0, 1): b}, kernel_name)
        assert bytes(b) == fixtures.multiply_expected()
        assert stats.invocations == fixtures.MULTIPLY_ELEMENTS

    def test_fma_small(self, kernel_name):
        n = 64
        x = bytearray(struct.pack(f"<{n}I", *range(n)))
        y = bytearray(struct.pack(f"<{n}I", *[7] * n))
        run(fixtures.fma_kernel(scale=3), (1, 1, 1), {(0, 0): x, (0, 1): y},
            kernel_name)
        # brute-force oracle: y = 3x + 7, wrapping u32
        expected = struct.pack(f"<{n}I", *[(3 * i + 7) & 0xFFFFFFFF for i in range(n)])
        assert bytes(y) == expected

    def test_fill(self, kernel_name):
        out = bytearray(64 * 4)
        run(fixtures.fill_kernel(), (1, 1, 1), {(0, 0): out}, kernel_name)
        assert bytes(out) == struct.pack("<64I", *[fixtures.FILL_VALUE] * 64)

    def test_float_fma(self, kernel_name):
        import math

        n = 64
        xs = [float(i) * 0.25 for i in range(n)]
        ys = [1.5] * n
        x = bytearray(struct.pack(f"<{n}f", *xs))
        y = bytearray(struct.pack(f"<{n}f", *ys))
        run(fixtures.float_fma_kernel(), (1, 1, 1), {(0, 0): x, (0, 1): y},
            kernel_name)
        # oracle: each step rounded to binary32 independently
        def f32(v):
            return struct.unpack("<f", struct.pack("<f", v))[0]

        expected = [f32(f32(xi * 0.5) + yi) for xi, yi in zip(xs, ys)]
        got = struct.unpack(f"<{n}f", bytes(y))
        assert all(
            (math.isnan(a) and math.isnan(b)) or a == b
            for a, b in zip(got, expected)
        )


class TestSemantics:
    def test_u32_wraparound(self, kernel_name):
        # 0x7fffffff + 1 == 0x80000000; 0xffffffff + 1 == 0 (wrap, no trap)
        n = 64
        x = bytearray(struct.pack(f"<{n}I", *([1] * n)))
        y = bytearray(struct.pack(f"<{n}I", *([0x7FFFFFFF] + [0xFFFFFFFF] * (n - 1))))
        run(fixtures.fma_kernel(scale=1), (1, 1, 1), {(0, 0): x, (0, 1): y},
            kernel_name)
        got = struct.unpack(f"<{n}I", bytes(y))
        assert got[0] == 0x80000000
        assert got[1] == 0

    def test_multiply_wrap(self, kernel_name):
        a = bytearray(struct.pack("<64I", *([0x10001] * 64)))
        b = bytearray(struct.pack("<64I", *([0x10001] * 64)))
        run(fixtures.multiply_kernel(), (1, 1, 1), {(0, 0): a, (0, 1): b},
            kernel_name)
        assert struct.unpack_from("<I", b)[0] == (0x10001 * 0x10001) & 0xFFFFFFFF

    def test_empty_dispatch(self, kernel_name):
        a, b = fixtures.multiply_inputs(64)
        before = bytes(b)
        stats = run(fixtures.multiply_kernel(), (0, 1, 1),
                    {(0, 0): a, (0, 1): b}, kernel_name)
        assert stats.invocations == 0
        assert bytes(b) == before

    def test_deterministic(self, kernel_name):
        a1, b1 = fixtures.multiply_inputs(4096)
        a2, b2 = fixtures.multiply_inputs(4096)
        run(fixtures.multiply_kernel(), (64, 1, 1), {(0, 0): a1, (0, 1): b1},
            kernel_name)
        run(fixtures.multiply_kernel(), (64, 1, 1), {(0, 0): a2, (0, 1): b2},
            kernel_name)
        assert bytes(b1) == bytes(b2)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, 2**32 - 1), min_size=64, max_size=64),
           st.lists(st.integers(0, 2**32 - 1), min_size=64, max_size=64))
    def test_multiply_matches_oracle_property(self, kernel_name, xs, ys):
        a = bytearray(struct.pack("<64I", *xs))
        b = bytearray(struct.pack("<64I", *ys))
        run(fixtures.multiply_kernel(), (1, 1, 1), {(0, 0): a, (0, 1): b},
            kernel_name)
        expected = struct.pack("<64I", *[(x * y) & 0xFFFFFFFF for x, y in zip(xs, ys)])
        assert bytes(b) == expected


class TestTraps:
    def test_out_of_bounds_store(self, kernel_name):
        a, b = fixtures.multiply_inputs(64)
        short = bytearray(b[: 32 * 4])  # half-sized output buffer
        with pytest.raises(errors.OutOfBoundsAccess) as ei:
            run(fixtures.multiply_kernel(), (1, 1, 1),
                {(0, 0): a, (0, 1): short}, kernel_name)
        assert ei.value.buffer == (0, 1)

    def test_oob_leaves_valid_prefix_only(self, kernel_name):
        # the trap aborts the dispatch; no write past the end ever happens
        a, b = fixtures.multiply_inputs(64)
        short = bytearray(b[: 32 * 4])
        with pytest.raises(errors.OutOfBoundsAccess):
            run(fixtures.multiply_kernel(), (1, 1, 1),
                {(0, 0): a, (0, 1): short}, kernel_name)
        assert len(short) == 32 * 4

    def test_missing_binding(self, kernel_name):
        a, _ = fixtures.multiply_inputs(64)
        with pytest.raises(errors.MissingBinding) as ei:
            run(fixtures.multiply_kernel(), (1, 1, 1), {(0, 0): a}, kernel_name)
        assert (ei.value.set, ei.value.binding) == (0, 1)

    def test_invocation_limit(self, kernel_name):
        a, b = fixtures.multiply_inputs(64)
        with pytest.raises(errors.LimitExceeded):
            run(fixtures.multiply_kernel(), (1, 1, 1),
                {(0, 0): a, (0, 1): b}, kernel_name,
                limits=InterpLimits(max_invocations=32))

    def test_unsupported_opcode(self, kernel_name):
        report = dry_run(SpirvModule.from_bytes(fixtures.branch_kernel()), "main")
        assert not report.compliant
        assert 250 in report.unsupported

    def test_entry_not_found(self, kernel_name):
        with pytest.raises(errors.EntryNotFound):
            run(fixtures.multiply_kernel(), (1, 1, 1), {}, kernel_name,
                entry="nope")


class TestKernelSelection:
    def test_python_kernel_always_present(self, kernel_name):
        assert "python" in KERNELS

    def test_selected_kernel_reported(self, kernel_name):
        assert interp.kernel_name() in KERNELS
