"""Standalone ICEB bundle writer.

This is the exporter's half of the wire contract with the evaluation
engine: the byte layout is reproduced here independently so a bundle
written by this module and read by the engine exercises the format, not a
shared implementation. See the engine documentation for the field-by-field
layout; all integers are little-endian, the trailing 8 bytes are a CRC-64
of everything before them, and the embedded manifest carries a CRC-64 of
the numeric payload region.
"""

from __future__ import annotations

import io
import json
import os
import struct

import numpy as np

MAGIC = b"ICEB"
VERSION = 1
REDUCTION_TAGS = {"single": 0, "centroid": 1, "score_mean": 2}

_POLY = 0xC96C5795D7870F42
_MASK = 0xFFFFFFFFFFFFFFFF


def _build_table():
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ _POLY if crc & 1 else crc >> 1
        table.append(crc)
    return tuple(table)


_TABLE = _build_table()


def crc64(data: bytes) -> int:
    crc = _MASK
    for b in data:
        crc = _TABLE[(crc ^ b) & 0xFF] ^ (crc >> 8)
    return crc ^ _MASK


class ExportError(Exception):
    pass


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def write_iceb(
    path,
    *,
    image_embeddings: np.ndarray,
    caption_embeddings: np.ndarray,
    prototype_members: np.ndarray,
    members_per_class,
    labels,
    class_names,
    reduction: str,
    tau_hint: float,
    manifest: dict,
    caption_texts=None,
) -> None:
    """Write one bundle file; raises ExportError on any inconsistency."""
    img = np.ascontiguousarray(image_embeddings, dtype="<f4")
    cap = np.ascontiguousarray(caption_embeddings, dtype="<f4")
    proto = np.ascontiguousarray(prototype_members, dtype="<f4")
    labels = np.ascontiguousarray(labels, dtype="<u4")
    members_per_class = [int(c) for c in members_per_class]
    class_names = list(class_names)

    if img.ndim != 2 or cap.ndim != 3 or proto.ndim != 2:
        raise ExportError("bad array ranks for bundle payload")
    n, dim = img.shape
    m = len(members_per_class)
    if cap.shape[0] != n or cap.shape[2] != dim or proto.shape[1] != dim:
        raise ExportError("image/caption/prototype shapes disagree")
    if proto.shape[0] != sum(members_per_class):
        raise ExportError("prototype rows do not match the member-count table")
    if len(class_names) != m or m < 2:
        raise ExportError(f"need >= 2 named classes, got {m}")
    if labels.shape != (n,) or (n and int(labels.max()) >= m):
        raise ExportError("labels missing or out of range")
    for name, arr in (("image", img), ("caption", cap), ("prototype", proto)):
        if not np.all(np.isfinite(arr)):
            raise ExportError(f"non-finite {name} embedding; aborting write")
    if reduction not in REDUCTION_TAGS:
        raise ExportError(f"unknown reduction {reduction!r}")
    if caption_texts is not None:
        if len(caption_texts) != n or any(len(r) != cap.shape[1] for r in caption_texts):
            raise ExportError("caption texts must be one string per stored caption")

    payload_crc = crc64(
        img.tobytes() + cap.tobytes() + proto.tobytes() + labels.tobytes()
    )
    manifest = dict(manifest)
    manifest["payload_crc64"] = f"{payload_crc:016x}"

    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IQ", VERSION, 0))
    buf.write(struct.pack("<IIII", dim, n, cap.shape[1], m))
    buf.write(np.asarray(members_per_class, dtype="<u4").tobytes())
    buf.write(struct.pack("<B", REDUCTION_TAGS[reduction]))
    buf.write(struct.pack("<d", float(tau_hint)))
    buf.write(img.tobytes())
    buf.write(cap.tobytes())
    buf.write(proto.tobytes())
    buf.write(labels.tobytes())
    for name in class_names:
        buf.write(_pack_str(name))
    if caption_texts is None:
        buf.write(struct.pack("<B", 0))
    else:
        buf.write(struct.pack("<B", 1))
        for row in caption_texts:
            for text in row:
                buf.write(_pack_str(text))
    buf.write(_pack_str(json.dumps(manifest, sort_keys=True, ensure_ascii=False)))

    body = buf.getvalue()
    body += struct.pack("<Q", crc64(body))

    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(body)
    os.replace(tmp, path)
