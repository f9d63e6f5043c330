"""Table-driven CRC-64 (the reflected ECMA-182 variant used by xz).

Check value: crc64(b"123456789") == 0x995DC9BBDF1939FA.
"""

from __future__ import annotations

_POLY = 0xC96C5795D7870F42
_MASK = 0xFFFFFFFFFFFFFFFF


def _build_table() -> tuple[int, ...]:
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ _POLY if crc & 1 else crc >> 1
        table.append(crc)
    return tuple(table)


_TABLE = _build_table()


def crc64(data: bytes | bytearray | memoryview) -> int:
    """CRC-64 of a byte string."""
    table = _TABLE
    crc = _MASK
    for b in bytes(data):
        crc = table[(crc ^ b) & 0xFF] ^ (crc >> 8)
    return crc ^ _MASK
