"""Bit-exact reading, writing and validation of embedding bundles.

A bundle file packs everything one evaluation needs: image embeddings,
per-image caption embeddings, class prototype members, labels, names and a
manifest. The layout is a fixed little-endian sequence rather than a
self-describing container; it is simple enough that a hand-written
validator beats a schema dependency.

File layout (all integers little-endian):

    offset  size   field
    0       4      magic "ICEB"
    4       4      u32 format version (currently 1)
    8       8      u64 reserved (zero)
    16      4      u32 embedding dimension l
    20      4      u32 image count N
    24      4      u32 captions per image v
    28      4      u32 class count m
    32      4*m    u32 prototype members per class
    ..      1      u8 reduction tag (0 single, 1 centroid, 2 score_mean)
    ..      8      f64 softmax temperature hint
    ..      4*N*l    f32 image embeddings, row-major
    ..      4*N*v*l  f32 caption embeddings
    ..      4*T*l    f32 prototype members (T = sum of per-class counts)
    ..      4*N    u32 labels
    ..      var    m strings: u32 byte length + UTF-8 class name
    ..      1      u8 caption-texts-present flag
    ..      var    if flag: N*v strings (u32 length + UTF-8)
    ..      var    u32 length + manifest JSON (UTF-8)
    ..      8      u64 CRC-64 of every preceding byte

The manifest additionally records a CRC-64 of the numeric payload region
(the four arrays) so corruption is attributable: a bad trailing checksum
with a good payload checksum points at the metadata sections.
"""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .checksum import crc64
from .errors import (
    BadMagicError,
    ChecksumMismatchError,
    InvariantViolationError,
    UnsupportedVersionError,
)
from .prototypes import ClassPrototypeSet, Reduction, build_prototypes

MAGIC = b"ICEB"
VERSION = 1

_REDUCTION_TAGS = {Reduction.SINGLE: 0, Reduction.CENTROID: 1, Reduction.SCORE_MEAN: 2}
_TAG_REDUCTIONS = {v: k for k, v in _REDUCTION_TAGS.items()}


@dataclass(frozen=True)
class DatasetManifest:
    """Provenance carried inside the bundle file."""

    dataset: str = ""
    split: str = ""
    model: str = ""
    caption_prompts: tuple[str, ...] = ()
    created_at: str = ""
    payload_crc64: str | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {
            "dataset": self.dataset,
            "split": self.split,
            "model": self.model,
            "caption_prompts": list(self.caption_prompts),
            "created_at": self.created_at,
            "payload_crc64": self.payload_crc64,
            "extra": self.extra,
        }
        return json.dumps(doc, sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        doc = json.loads(text)
        return cls(
            dataset=doc.get("dataset", ""),
            split=doc.get("split", ""),
            model=doc.get("model", ""),
            caption_prompts=tuple(doc.get("caption_prompts", ())),
            created_at=doc.get("created_at", ""),
            payload_crc64=doc.get("payload_crc64"),
            extra=doc.get("extra", {}),
        )


@dataclass(frozen=True)
class EmbeddingBundle:
    """In-memory bundle: float32 storage, validated on construction."""

    image_embeddings: np.ndarray  # (N, l) float32
    caption_embeddings: np.ndarray  # (N, v, l) float32
    prototype_members: np.ndarray  # (T, l) float32
    members_per_class: tuple[int, ...]
    labels: np.ndarray  # (N,) int64 in [0, m)
    class_names: tuple[str, ...]
    reduction: Reduction
    tau_hint: float = 1.0
    manifest: DatasetManifest = field(default_factory=DatasetManifest)
    caption_texts: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        issues = content_issues(self)
        if issues:
            raise InvariantViolationError("; ".join(issues))
        for arr in (
            self.image_embeddings,
            self.caption_embeddings,
            self.prototype_members,
            self.labels,
        ):
            arr.flags.writeable = False

    @property
    def n_images(self) -> int:
        return self.image_embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.image_embeddings.shape[1]

    @property
    def n_captions(self) -> int:
        return self.caption_embeddings.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.members_per_class)

    def prototype_set(self, reduction: Reduction | str | None = None) -> ClassPrototypeSet:
        """Materialize the stored prototype members as a scoring set.

        ``reduction`` overrides the stored tag, e.g. to compare centroid
        against score-mean scoring on the same multi-member bundle.
        """
        red = Reduction(reduction) if reduction is not None else self.reduction
        groups = []
        start = 0
        for count in self.members_per_class:
            groups.append(self.prototype_members[start : start + count])
            start += count
        return build_prototypes(groups, red, class_names=self.class_names)


def content_issues(bundle: EmbeddingBundle) -> list[str]:
    """All invariant violations in a structurally parsed bundle."""
    issues: list[str] = []
    img, cap, proto = (
        bundle.image_embeddings,
        bundle.caption_embeddings,
        bundle.prototype_members,
    )
    if img.dtype != np.float32 or cap.dtype != np.float32 or proto.dtype != np.float32:
        issues.append("embeddings must be stored as float32")
    if img.ndim != 2:
        issues.append(f"image embeddings must be 2-D, got shape {img.shape}")
        return issues
    if cap.ndim != 3:
        issues.append(f"caption embeddings must be 3-D, got shape {cap.shape}")
        return issues
    if proto.ndim != 2:
        issues.append(f"prototype members must be 2-D, got shape {proto.shape}")
        return issues

    n, dim = img.shape
    m = len(bundle.members_per_class)
    if n < 1:
        issues.append("bundle must contain at least one image")
    if dim < 1:
        issues.append("embedding dimension must be >= 1")
    if m < 2:
        issues.append(f"bundle must describe at least 2 classes, got {m}")
    if cap.shape[0] != n:
        issues.append(f"caption array covers {cap.shape[0]} images, expected {n}")
    if cap.shape[1] < 1:
        issues.append("each image needs at least one caption embedding")
    if cap.shape[2] != dim or proto.shape[1] != dim:
        issues.append("image, caption and prototype dimensions disagree")
    if any(c < 1 for c in bundle.members_per_class):
        issues.append("every class needs at least one prototype member")
    if proto.shape[0] != sum(bundle.members_per_class):
        issues.append(
            f"prototype rows ({proto.shape[0]}) != member-count table total "
            f"({sum(bundle.members_per_class)})"
        )
    if len(bundle.class_names) != m:
        issues.append(f"{len(bundle.class_names)} class names for {m} classes")
    if bundle.reduction is not Reduction.SCORE_MEAN and any(
        c != 1 for c in bundle.members_per_class
    ):
        issues.append(
            f"reduction {bundle.reduction.value!r} requires one member per class"
        )

    for name, arr in (("image", img), ("caption", cap), ("prototype", proto)):
        if not np.all(np.isfinite(arr)):
            bad = int(np.argwhere(~np.isfinite(arr.reshape(-1)))[0][0])
            issues.append(f"{name} embeddings contain non-finite value (flat index {bad})")

    labels = bundle.labels
    if labels.shape != (n,):
        issues.append(f"labels shape {labels.shape}, expected ({n},)")
    else:
        bad = np.nonzero((labels < 0) | (labels >= m))[0]
        if bad.size:
            issues.append(
                f"label out of range [0, {m}) at sample index {int(bad[0])}"
                + (f" (+{bad.size - 1} more)" if bad.size > 1 else "")
            )

    if not np.isfinite(bundle.tau_hint) or bundle.tau_hint <= 0:
        issues.append(f"temperature hint must be finite and > 0, got {bundle.tau_hint}")

    if bundle.caption_texts is not None:
        if len(bundle.caption_texts) != n or any(
            len(row) != cap.shape[1] for row in bundle.caption_texts
        ):
            issues.append("caption texts must be one string per stored caption")
    return issues


def _payload_crc(bundle: EmbeddingBundle) -> str:
    h = crc64(
        bundle.image_embeddings.tobytes()
        + bundle.caption_embeddings.tobytes()
        + bundle.prototype_members.tobytes()
        + bundle.labels.astype("<u4").tobytes()
    )
    return f"{h:016x}"


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _serialize(bundle) -> bytes:
    """Raw little-endian serialization, checksum appended; no validation."""
    manifest = replace(bundle.manifest, payload_crc64=_payload_crc(bundle))

    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IQ", VERSION, 0))
    buf.write(
        struct.pack(
            "<IIII",
            bundle.image_embeddings.shape[1],
            bundle.image_embeddings.shape[0],
            bundle.caption_embeddings.shape[1],
            len(bundle.members_per_class),
        )
    )
    buf.write(np.asarray(bundle.members_per_class, dtype="<u4").tobytes())
    buf.write(struct.pack("<B", _REDUCTION_TAGS[bundle.reduction]))
    buf.write(struct.pack("<d", bundle.tau_hint))
    buf.write(np.ascontiguousarray(bundle.image_embeddings, dtype="<f4").tobytes())
    buf.write(np.ascontiguousarray(bundle.caption_embeddings, dtype="<f4").tobytes())
    buf.write(np.ascontiguousarray(bundle.prototype_members, dtype="<f4").tobytes())
    buf.write(bundle.labels.astype("<u4").tobytes())
    for name in bundle.class_names:
        buf.write(_pack_str(name))
    if bundle.caption_texts is None:
        buf.write(struct.pack("<B", 0))
    else:
        buf.write(struct.pack("<B", 1))
        for row in bundle.caption_texts:
            for text in row:
                buf.write(_pack_str(text))
    buf.write(_pack_str(manifest.to_json()))

    body = buf.getvalue()
    return body + struct.pack("<Q", crc64(body))


def write_bundle(bundle: EmbeddingBundle, path: str | os.PathLike) -> None:
    """Serialize a bundle to ``path`` atomically (temp file + rename)."""
    issues = content_issues(bundle)
    if issues:
        raise InvariantViolationError("; ".join(issues))

    data = _serialize(bundle)
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


class _Cursor:
    """Bounds-checked reader over the checksummed body."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise InvariantViolationError(
                "declared structure overruns the file payload"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def _parse_file(path: str | os.PathLike) -> dict:
    """Structural parse: magic, version, checksum, field extraction.

    Returns the constructor arguments for EmbeddingBundle without running
    the content checks.
    """
    with open(path, "rb") as fh:
        raw = fh.read()

    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a bundle file (bad magic)")
    if len(raw) < 24:
        raise ChecksumMismatchError(f"{path}: file truncated before checksum")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != VERSION:
        raise UnsupportedVersionError(
            f"{path}: format version {version} not supported (expected {VERSION})"
        )
    body, stored = raw[:-8], struct.unpack("<Q", raw[-8:])[0]
    actual = crc64(body)
    if actual != stored:
        raise ChecksumMismatchError(
            f"{path}: checksum mismatch (stored {stored:016x}, computed {actual:016x})"
        )

    cur = _Cursor(body)
    cur.take(16)  # magic, version, reserved
    dim, n, v, m = cur.u32(), cur.u32(), cur.u32(), cur.u32()
    members_per_class = tuple(
        int(x) for x in np.frombuffer(cur.take(4 * m), dtype="<u4")
    )
    tag = cur.u8()
    if tag not in _TAG_REDUCTIONS:
        raise InvariantViolationError(f"unknown reduction tag {tag}")
    tau_hint = cur.f64()

    total_members = sum(members_per_class)
    img = np.frombuffer(cur.take(4 * n * dim), dtype="<f4").reshape(n, dim)
    cap = np.frombuffer(cur.take(4 * n * v * dim), dtype="<f4").reshape(n, v, dim)
    proto = np.frombuffer(cur.take(4 * total_members * dim), dtype="<f4").reshape(
        total_members, dim
    )
    labels = np.frombuffer(cur.take(4 * n), dtype="<u4").astype(np.int64)
    class_names = tuple(cur.string() for _ in range(m))
    caption_texts = None
    if cur.u8():
        caption_texts = tuple(
            tuple(cur.string() for _ in range(v)) for _ in range(n)
        )
    manifest = DatasetManifest.from_json(cur.string())
    if cur.pos != len(body):
        raise InvariantViolationError(
            f"{len(body) - cur.pos} unexpected trailing bytes before checksum"
        )

    return dict(
        image_embeddings=img,
        caption_embeddings=cap,
        prototype_members=proto,
        members_per_class=members_per_class,
        labels=labels,
        class_names=class_names,
        reduction=_TAG_REDUCTIONS[tag],
        tau_hint=tau_hint,
        manifest=manifest,
        caption_texts=caption_texts,
    )


def read_bundle(path: str | os.PathLike) -> EmbeddingBundle:
    """Read and fully validate a bundle file.

    Fail-closed: any magic, version, checksum or invariant problem raises
    before a bundle object exists; a partial bundle is never returned.
    """
    parts = _parse_file(path)
    bundle = EmbeddingBundle(**parts)
    expected_payload = _payload_crc(bundle)
    if bundle.manifest.payload_crc64 != expected_payload:
        raise ChecksumMismatchError(
            f"{path}: payload checksum mismatch (manifest "
            f"{bundle.manifest.payload_crc64}, computed {expected_payload})"
        )
    return bundle


def validate_bundle_file(path: str | os.PathLike) -> list[str]:
    """Itemized validation problems for a bundle file; empty means clean.

    Structural failures (magic, version, checksum, truncation) abort with a
    single item; content checks are collected so one pass reports every
    violated invariant.
    """
    try:
        parts = _parse_file(path)
    except (OSError, BadMagicError, UnsupportedVersionError, ChecksumMismatchError,
            InvariantViolationError) as exc:
        return [str(exc)]

    shell = _BundleShell(**parts)
    issues = content_issues(shell)
    if not issues:
        expected = _payload_crc(shell)
        if shell.manifest.payload_crc64 != expected:
            issues.append(
                f"payload checksum mismatch (manifest {shell.manifest.payload_crc64}, "
                f"computed {expected})"
            )
    return issues


class _BundleShell:
    """Attribute bag with the bundle's fields, used to run content checks
    on parsed data that may violate construction invariants."""

    def __init__(self, **kwargs):
        self.__dict__.update(kwargs)
