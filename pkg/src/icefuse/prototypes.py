"""Per-class text prototypes and query scoring against them.

A prototype set holds one or more text embeddings per class plus the rule
for reducing multiple members to a class score:

* ``single``    - exactly one member per class, scored directly.
* ``centroid``  - members are averaged into one vector at build time.
* ``score_mean`` - members are kept; a query is scored by the mean of its
  cosine similarities to every member of the class.

Centroid-then-cosine and mean-of-cosines are different operations in
general; both are supported because they behave differently on multi-
member descriptor sets.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyClassError,
    InvalidSpecError,
    NonFiniteError,
    ZeroVectorError,
)
from .vecmath import ZERO_NORM_FLOOR


class Reduction(enum.Enum):
    SINGLE = "single"
    CENTROID = "centroid"
    SCORE_MEAN = "score_mean"


@dataclass(frozen=True)
class ClassPrototypeSet:
    """Immutable set of per-class text embeddings with a reduction rule.

    ``members[i]`` is a float64 array of shape ``(n_i, dim)`` holding the
    stored embeddings for class ``i``. Class names are carried for
    reporting only; scoring never inspects them.
    """

    class_names: tuple[str, ...]
    members: tuple[np.ndarray, ...] = field(repr=False)
    reduction: Reduction

    def __post_init__(self):
        if len(self.class_names) != len(self.members):
            raise DimensionMismatchError(
                f"{len(self.class_names)} names for {len(self.members)} classes"
            )
        if self.num_classes < 2:
            raise InvalidSpecError("a prototype set needs at least 2 classes")
        dim = None
        for i, m in enumerate(self.members):
            if m.ndim != 2 or m.shape[0] == 0:
                raise EmptyClassError(f"class {i} has no member embeddings")
            if dim is None:
                dim = m.shape[1]
            elif m.shape[1] != dim:
                raise DimensionMismatchError(
                    f"class {i} members have dim {m.shape[1]}, expected {dim}"
                )
            if not np.all(np.isfinite(m)):
                raise NonFiniteError(f"class {i} members contain NaN or Inf")
            m.flags.writeable = False
        if self.reduction is not Reduction.SCORE_MEAN:
            bad = [i for i, m in enumerate(self.members) if m.shape[0] != 1]
            if bad:
                # centroid sets are collapsed by build_prototypes; a direct
                # construction must already be one-member-per-class
                raise InvalidSpecError(
                    f"reduction {self.reduction.value!r} stores one member per "
                    f"class; classes {bad} have more (use build_prototypes)"
                )

    @property
    def num_classes(self) -> int:
        return len(self.members)

    @property
    def dim(self) -> int:
        return self.members[0].shape[1]

    @property
    def members_per_class(self) -> tuple[int, ...]:
        return tuple(m.shape[0] for m in self.members)

    @cached_property
    def _stacked(self) -> np.ndarray:
        # (sum n_i, dim), rows grouped by class in order
        return np.concatenate(self.members, axis=0)

    @cached_property
    def _offsets(self) -> np.ndarray:
        counts = np.array(self.members_per_class, dtype=np.int64)
        return np.concatenate(([0], np.cumsum(counts)[:-1]))

    @cached_property
    def _member_norms(self) -> np.ndarray:
        norms = np.linalg.norm(self._stacked, axis=1)
        zero = np.nonzero(norms < ZERO_NORM_FLOOR)[0]
        if zero.size:
            raise ZeroVectorError(
                f"prototype member(s) {zero.tolist()} have zero norm "
                "(a class centroid may have cancelled to zero)"
            )
        return norms


def build_prototypes(
    per_class_embeddings: Sequence[Sequence[np.ndarray] | np.ndarray],
    reduction: Reduction | str,
    class_names: Sequence[str] | None = None,
) -> ClassPrototypeSet:
    """Build a prototype set from per-class lists of text embeddings.

    For ``centroid`` the member lists are collapsed to their mean at build
    time (memory for per-query speed); ``score_mean`` keeps every member
    because its reduction depends on the query.
    """
    reduction = Reduction(reduction)
    members: list[np.ndarray] = []
    for i, group in enumerate(per_class_embeddings):
        mat = np.asarray(group, dtype=np.float64)
        if mat.ndim == 1:
            mat = mat[None, :]
        if mat.ndim != 2 or mat.shape[0] == 0:
            raise EmptyClassError(f"class {i} has no member embeddings")
        if reduction is Reduction.CENTROID:
            mat = mat.mean(axis=0, keepdims=True)
        members.append(mat)
    if class_names is None:
        class_names = tuple(f"class_{i}" for i in range(len(members)))
    return ClassPrototypeSet(
        class_names=tuple(class_names),
        members=tuple(members),
        reduction=reduction,
    )


def score_rows(queries: np.ndarray, protos: ClassPrototypeSet, tau: float) -> np.ndarray:
    """Class probability distributions for a batch of query vectors.

    ``queries`` is ``(n, dim)``; returns ``(n, m)`` where each row is the
    softmax (at temperature ``tau``) of the per-class reduced cosine
    similarities for one query.
    """
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim != 2:
        raise DimensionMismatchError("queries must be 2-D")
    if q.shape[1] != protos.dim:
        raise DimensionMismatchError(
            f"query dim {q.shape[1]} != prototype dim {protos.dim}"
        )
    if not np.all(np.isfinite(q)):
        raise NonFiniteError("queries contain NaN or Inf")
    if not (tau > 0.0):
        raise ValueError(f"temperature must be positive, got {tau!r}")
    qnorm = np.linalg.norm(q, axis=1)
    if np.any(qnorm < ZERO_NORM_FLOOR):
        raise ZeroVectorError("query vector has zero norm")

    cos = (q @ protos._stacked.T) / np.outer(qnorm, protos._member_norms)
    if protos.reduction is Reduction.SCORE_MEAN:
        counts = np.array(protos.members_per_class, dtype=np.float64)
        sums = np.add.reduceat(cos, protos._offsets, axis=1)
        per_class = sums / counts
    else:
        # single / centroid: exactly one stored member per class
        per_class = cos

    # row-wise softmax, same operation order as vecmath.softmax
    z = tau * per_class
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def score_image(query: np.ndarray, protos: ClassPrototypeSet, tau: float) -> np.ndarray:
    """Class probability distribution for one query embedding."""
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1:
        raise DimensionMismatchError("query must be a 1-D vector")
    return score_rows(q[None, :], protos, tau)[0]
