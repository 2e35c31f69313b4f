import hashlib
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from girp import errors, fixtures
from girp.reflect import (
    ExecutionModel,
    SpirvModule,
    hash_module,
    iter_instructions,
    parse_header,
    reflect,
)

MAGIC = 0x07230203


def header(version=0x00010000, generator=0, bound=100, schema=0) -> bytes:
    return struct.pack("<5I", MAGIC, version, generator, bound, schema)


class TestParseHeader:
    def test_minimal_header(self):
        version, generator, bound = parse_header(header(bound=42, generator=7))
        assert version == (1, 0)
        assert generator == 7
        assert bound == 42

    def test_version_minor(self):
        version, _, _ = parse_header(header(version=0x00010300))
        assert version == (1, 3)

    def test_too_short(self):
        with pytest.raises(errors.TooShort):
            parse_header(header()[:16])

    def test_misaligned(self):
        with pytest.raises(errors.Misaligned):
            parse_header(header() + b"\x00")

    def test_bad_magic(self):
        bad = bytearray(header())
        bad[0] ^= 0xFF
        with pytest.raises(errors.BadMagic):
            parse_header(bytes(bad))

    def test_big_endian_magic_rejected(self):
        # byte-swapped modules are out of scope and must be refused, not guessed
        be = struct.pack(">5I", MAGIC, 0x00010000, 0, 100, 0)
        with pytest.raises(errors.BadMagic):
            parse_header(be)

    def test_bad_schema(self):
        with pytest.raises(errors.BadSchema):
            parse_header(header(schema=1))

    def test_error_priority_short_before_magic(self):
        # a 4-byte garbage input is TooShort, not BadMagic
        with pytest.raises(errors.TooShort):
            parse_header(b"\xff\xff\xff\xff")


class TestIterInstructions:
    def test_zero_word_count(self):
        data = header() + struct.pack("<I", (0 << 16) | 1)
        module = SpirvModule.from_bytes(data)
        with pytest.raises(errors.ZeroWordCount):
            list(iter_instructions(module.words))

    def test_truncated_instruction(self):
        data = header() + struct.pack("<I", (3 << 16) | 1)  # wants 2 more words
        module = SpirvModule.from_bytes(data)
        with pytest.raises(errors.TruncatedInstruction):
            list(iter_instructions(module.words))

    def test_header_only_module_has_no_instructions(self):
        module = SpirvModule.from_bytes(fixtures.header_only_module())
        assert list(iter_instructions(module.words)) == []


class TestReflect:
    def test_multiply_fixture(self, multiply_module):
        info = reflect(SpirvModule.from_bytes(multiply_module))
        assert [ep.name for ep in info.entry_points] == ["main"]
        ep = info.entry_points[0]
        assert ep.execution_model is ExecutionModel.GLCompute
        assert ep.local_size == (64, 1, 1)
        assert [(s.set, s.binding) for s in info.bindings] == [(0, 0), (0, 1)]
        assert all(s.kind.value == "StorageBuffer" for s in info.bindings)

    def test_bindings_sorted(self):
        info = reflect(SpirvModule.from_bytes(fixtures.frame_kernel()))
        slots = [(s.set, s.binding) for s in info.bindings]
        assert slots == sorted(slots)

    def test_content_hash_is_sha256(self, multiply_module):
        module = SpirvModule.from_bytes(multiply_module)
        assert module.content_hash == hashlib.sha256(multiply_module).digest()
        assert hash_module(multiply_module) == module.content_hash

    def test_sha256_empty_is_published_vector(self):
        # the function underlying content addressing, against the published
        # empty-string SHA-256 test vector
        assert hashlib.sha256(b"").hexdigest() == (
            "e3b0c44298fc1c149afbf4c8996fb924"
            "27ae41e4649b934ca495991b7852b855"
        )

    def test_round_trip_bytes(self, multiply_module):
        module = SpirvModule.from_bytes(multiply_module)
        assert module.to_bytes() == multiply_module


class TestReflectFuzz:
    @settings(max_examples=2000, deadline=None)
    @given(st.binary(max_size=256))
    def test_never_crashes_on_garbage(self, data):
        # total: any byte string either reflects or raises a ReflectError
        try:
            reflect(SpirvModule.from_bytes(data))
        except errors.ReflectError:
            pass

    @settings(max_examples=500, deadline=None)
    @given(st.binary(min_size=20, max_size=256).map(lambda b: header() + b))
    def test_never_crashes_on_garbage_body(self, data):
        data = data[: len(data) - len(data) % 4]
        try:
            reflect(SpirvModule.from_bytes(data))
        except errors.ReflectError:
            pass
