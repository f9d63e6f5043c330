"""Top-K anchored fusion of image- and caption-conditioned predictions.

The prediction pipeline per sample:

1. restrict attention to the K classes with the highest image-conditioned
   probability (the anchor set);
2. pick a caption weight ``lambda`` (adaptive, fixed, or 0);
3. predict the anchor class maximizing ``S_image + lambda * S_caption``.

The adaptive weight compares the spread (population std) of the two
distributions restricted to the anchor set: a confident caption against an
unsure image pushes ``lambda`` toward its ceiling ``xi``, and vice versa.
The anchor restriction guarantees the final prediction always lies inside
the image model's Top-K, so a bad caption can only reorder plausible
candidates, never introduce an implausible one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, EmptyInputError, InvalidSpecError
from .prototypes import ClassPrototypeSet, score_image
from .vecmath import centroid, stddev

LAMBDA_MODES = ("adaptive", "fixed", "image_only")


@dataclass(frozen=True)
class IceConfig:
    """Fusion hyperparameters.

    ``k`` is the anchor size, ``xi`` the caption weight ceiling, ``epsilon``
    the division floor in the adaptive weight, ``tau`` the softmax
    temperature applied to cosine scores. ``lambda_fixed`` is only read when
    ``lambda_mode == "fixed"``.
    """

    k: int = 5
    xi: float = 0.08
    epsilon: float = 1e-12
    lambda_mode: str = "adaptive"
    lambda_fixed: float = 0.0
    tau: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise InvalidSpecError(f"K must be >= 1, got {self.k}")
        if self.xi < 0:
            raise InvalidSpecError(f"xi must be >= 0, got {self.xi}")
        if not (self.epsilon > 0):
            raise InvalidSpecError(f"epsilon must be > 0, got {self.epsilon}")
        if self.lambda_mode not in LAMBDA_MODES:
            raise InvalidSpecError(
                f"lambda_mode must be one of {LAMBDA_MODES}, got {self.lambda_mode!r}"
            )
        if self.lambda_fixed < 0:
            raise InvalidSpecError(
                f"fixed lambda must be >= 0, got {self.lambda_fixed}"
            )
        if not (self.tau > 0):
            raise InvalidSpecError(f"tau must be > 0, got {self.tau}")


@dataclass(frozen=True)
class IcePrediction:
    """Outcome of fusing one sample.

    ``top_k_indices`` is the anchor set in descending image-probability
    order; ``fused_scores_on_top_k`` aligns with it. ``predicted_class`` is
    always a member of the anchor set.
    """

    predicted_class: int
    top_k_indices: tuple[int, ...]
    lambda_used: float
    image_argmax: int
    fused_scores_on_top_k: tuple[float, ...]


def top_k_indices(dist, k: int) -> np.ndarray:
    """Indices of the ``min(k, m)`` largest probabilities, descending.

    Ties are broken toward the lower class index, making the order fully
    deterministic. ``k`` larger than the class count clamps to the class
    count (callers surface a warning for that case).
    """
    probs = np.asarray(dist, dtype=np.float64)
    if probs.ndim != 1:
        raise DimensionMismatchError("distribution must be 1-D")
    if k < 1:
        raise InvalidSpecError(f"K must be >= 1, got {k}")
    m = probs.shape[0]
    kk = min(k, m)
    # lexsort: primary key descending probability, secondary ascending index
    order = np.lexsort((np.arange(m), -probs))
    return order[:kk]


def adaptive_lambda(s_image_topk, s_caption_topk, xi: float, epsilon: float) -> float:
    """Caption weight from the relative spread of the two anchored slices.

    ``xi * sigma_c / max(hypot(sigma_i, sigma_c), epsilon)`` where the
    sigmas are population standard deviations of the Top-K probabilities
    (raw, not renormalized). Always lands in ``[0, xi]``; a flat caption
    slice gives exactly 0 and a flat image slice gives exactly ``xi``.
    """
    si = np.asarray(s_image_topk, dtype=np.float64)
    sc = np.asarray(s_caption_topk, dtype=np.float64)
    if si.shape != sc.shape:
        raise DimensionMismatchError(
            f"top-k slices differ in length: {si.shape} vs {sc.shape}"
        )
    if si.size == 0:
        raise EmptyInputError("empty top-k slice")
    sigma_i = stddev(si)
    sigma_c = stddev(sc)
    # hypot(0, x) is exactly x, and the ratio is taken before scaling by
    # xi, which makes both boundary cases (0 and xi) land exactly
    denom = max(math.hypot(sigma_i, sigma_c), epsilon)
    return xi * (sigma_c / denom)


def caption_score(captions, protos: ClassPrototypeSet, tau: float) -> np.ndarray:
    """Class probabilities for the centroid of one sample's caption embeddings.

    With a single caption this is exactly the caption-conditioned
    distribution; with several, the centroid smooths prompt-to-prompt
    variation before scoring.
    """
    cap = np.asarray(captions, dtype=np.float64)
    if cap.ndim == 1:
        cap = cap[None, :]
    if cap.shape[0] == 0:
        raise EmptyInputError("need at least one caption embedding")
    return score_image(centroid(cap), protos, tau)


def ice_predict(s_image, s_caption, cfg: IceConfig) -> IcePrediction:
    """Fuse one sample's image and caption distributions into a prediction.

    Ties in the fused score are broken toward the higher image probability,
    then the lower class index, keeping the fusion conservative toward the
    image prediction. Fused scores are reported raw (not renormalized);
    only their argmax matters.
    """
    si = np.asarray(s_image, dtype=np.float64)
    sc = np.asarray(s_caption, dtype=np.float64)
    if si.shape != sc.shape:
        raise DimensionMismatchError(
            f"distributions differ in length: {si.shape} vs {sc.shape}"
        )
    omega = top_k_indices(si, cfg.k)

    if cfg.lambda_mode == "adaptive":
        lam = adaptive_lambda(si[omega], sc[omega], cfg.xi, cfg.epsilon)
    elif cfg.lambda_mode == "fixed":
        lam = float(cfg.lambda_fixed)
    else:  # image_only
        lam = 0.0

    fused = si[omega] + lam * sc[omega]
    # omega is ordered by (image prob desc, index asc), so the first
    # maximal fused entry realizes the tie-break rule
    best_pos = int(np.argmax(fused))

    return IcePrediction(
        predicted_class=int(omega[best_pos]),
        top_k_indices=tuple(int(i) for i in omega),
        lambda_used=float(lam),
        image_argmax=int(omega[0]),
        fused_scores_on_top_k=tuple(float(x) for x in fused),
    )
