"""Regenerates the golden wire-protocol fixtures in this directory.

Every frame here is hand-packed with `struct` alone, straight from the
documented byte layout, deliberately without importing girp.wire: the tests
compare the codec against these files, so the two implementations must stay
independent. Run `python3 tests/golden/make_golden.py` after an intentional
protocol change and review the resulting diff.
"""

import struct
from pathlib import Path

HERE = Path(__file__).parent

SESSION = bytes(range(16))
HASH = bytes(range(32))


def frame(msg_type: int, payload: bytes, *, session=SESSION, request_id=7,
          flags=0) -> bytes:
    return (
        b"GIRP"
        + struct.pack("<BBHH", 1, msg_type, flags, 0)
        + session
        + struct.pack("<QI", request_id, len(payload))
        + payload
    )


def str16(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def bytes32(data: bytes) -> bytes:
    return struct.pack("<I", len(data)) + data


VECTORS = {
    # the documented 46-byte reference frame: zero session, request_id 1
    "ping": frame(0x10, struct.pack("<Q", 0), session=bytes(16), request_id=1),
    "hello": frame(0x01, struct.pack("<BII", 0, 0x00010000, 0x00010600)
                   + str16("interp")),
    "hello_ack": frame(0x02, SESSION + str16("backend=interp;max_payload=67108864")),
    "load_module": frame(0x03, HASH + bytes32(bytes.fromhex("03022307"))),
    "module_ack": frame(0x04, HASH + struct.pack("<B", 1)),
    "create_pipeline": frame(0x05, HASH + str16("main")),
    "pipeline_ack": frame(0x06, struct.pack("<Q", 3)),
    "alloc_buffer": frame(0x07, struct.pack("<QQ", 2, 262144)),
    "write_buffer": frame(0x08, struct.pack("<QQ", 2, 64) + bytes32(b"\x11\x22\x33\x44"),
                          flags=0x0001),
    "dispatch": frame(0x09, struct.pack("<QIIIH", 3, 1024, 1, 1, 2)
                      + struct.pack("<IIQ", 0, 0, 1) + struct.pack("<IIQ", 0, 1, 2)),
    "dispatch_ack": frame(0x0A, struct.pack("<QQQ", 1000, 2000, 3000)),
    "read_buffer": frame(0x0B, struct.pack("<QQI", 2, 0, 32)),
    "buffer_data": frame(0x0C, bytes32(bytes(range(32)))),
    "export_session": frame(0x0D, b""),
    "session_snapshot": frame(0x0E, bytes32(b"\xAA" * 48)),
    "import_session": frame(0x0F, bytes32(b"\xAA" * 48)),
    "pong": frame(0x11, struct.pack("<Q", 0xDEADBEEF)),
    "error": frame(0x12, struct.pack("<H", 0x0030) + str16("offset out of range")),
    "ack": frame(0x13, struct.pack("<Q", 5)),
}


def main() -> None:
    for name, data in VECTORS.items():
        (HERE / f"{name}.bin").write_bytes(data)
    print(f"wrote {len(VECTORS)} vectors to {HERE}")


if __name__ == "__main__":
    main()
