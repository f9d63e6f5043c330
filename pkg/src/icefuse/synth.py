"""Seeded synthetic bundle generator for desk-scale testing.

Builds datasets where the usefulness of captions is a dial: each caption
embedding is a mix of the true class prototype and a distractor class
prototype, so ``caption_signal=1`` makes captions perfectly informative
and ``caption_signal=0`` makes them pure noise pointing at a random class.
Image embeddings are the true prototype plus isotropic noise. Ground truth
is therefore known exactly, which lets tests pin accuracy margins.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bundle import DatasetManifest, EmbeddingBundle
from .errors import InvalidSpecError
from .prototypes import Reduction

# synthetic bundles must be byte-reproducible per seed, so they carry a
# constant timestamp instead of wall-clock time
_FIXED_TIMESTAMP = "1970-01-01T00:00:00Z"


@dataclass(frozen=True)
class SynthSpec:
    """Generator parameters; the bundle is a pure function of these."""

    n_images: int = 1000
    n_classes: int = 10
    dim: int = 32
    n_captions: int = 3
    image_noise: float = 0.5
    caption_noise: float = 0.2  # independent per caption, averaged out by the centroid
    caption_noise_shared: float = 0.0  # per image, shared by its captions
    caption_noise_spread: float = 0.0  # in [0,1]: per-image quality heterogeneity
    caption_image_corr: float = 0.0  # in [0,1]: caption noise follows image noise
    caption_signal: float = 0.8
    tau_hint: float = 30.0
    seed: int = 0

    def __post_init__(self):
        if self.n_images < 1:
            raise InvalidSpecError(f"n_images must be >= 1, got {self.n_images}")
        if self.n_classes < 2:
            raise InvalidSpecError(f"n_classes must be >= 2, got {self.n_classes}")
        if self.dim < 2:
            raise InvalidSpecError(f"dim must be >= 2, got {self.dim}")
        if self.n_captions < 1:
            raise InvalidSpecError(f"n_captions must be >= 1, got {self.n_captions}")
        if not 0.0 <= self.caption_signal <= 1.0:
            raise InvalidSpecError(
                f"caption_signal must be in [0, 1], got {self.caption_signal}"
            )
        if min(self.image_noise, self.caption_noise, self.caption_noise_shared) < 0:
            raise InvalidSpecError("noise levels must be >= 0")
        if not 0.0 <= self.caption_noise_spread <= 1.0:
            raise InvalidSpecError(
                f"caption_noise_spread must be in [0, 1], got {self.caption_noise_spread}"
            )
        if not 0.0 <= self.caption_image_corr <= 1.0:
            raise InvalidSpecError(
                f"caption_image_corr must be in [0, 1], got {self.caption_image_corr}"
            )
        if not self.tau_hint > 0:
            raise InvalidSpecError(f"tau_hint must be > 0, got {self.tau_hint}")


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    return mat / np.linalg.norm(mat, axis=-1, keepdims=True)


def synth_bundle(spec: SynthSpec) -> EmbeddingBundle:
    """Generate a deterministic bundle from a SynthSpec.

    Noise vectors are drawn isotropically with expected norm equal to the
    noise level, so ``image_noise=1`` means noise as strong as the unit
    prototype itself.
    """
    rng = np.random.default_rng(spec.seed)
    n, m, dim, v = spec.n_images, spec.n_classes, spec.dim, spec.n_captions

    protos = _unit_rows(rng.standard_normal((m, dim)))
    labels = rng.integers(0, m, size=n)

    img_z = rng.standard_normal((n, dim))
    images = _unit_rows(protos[labels] + img_z * (spec.image_noise / np.sqrt(dim)))

    # distractor class and shared noise are drawn once per image: caption
    # mistakes correlate across the prompts for the same picture, so the
    # caption centroid can be confidently wrong, not just diffuse. The
    # spread knob scales each image's caption noise by a factor in
    # [1-spread, 1+spread], mixing sharp and mushy captioning in one set.
    # The corr knob points part of the shared caption noise along the
    # image's own noise: both encoders looking at the same ambiguous
    # picture drift toward the same wrong class.
    distractor_classes = rng.integers(0, m, size=n)
    quality = rng.uniform(
        1.0 - spec.caption_noise_spread, 1.0 + spec.caption_noise_spread, size=(n, 1, 1)
    )
    cap_noise = rng.standard_normal((n, v, dim)) * (spec.caption_noise / np.sqrt(dim))
    rho = spec.caption_image_corr
    shared_z = rho * img_z + np.sqrt(1.0 - rho * rho) * rng.standard_normal((n, dim))
    shared_noise = shared_z[:, None, :] * (spec.caption_noise_shared / np.sqrt(dim))
    captions = _unit_rows(
        spec.caption_signal * protos[labels][:, None, :]
        + (1.0 - spec.caption_signal) * protos[distractor_classes][:, None, :]
        + quality * (shared_noise + cap_noise)
    )

    manifest = DatasetManifest(
        dataset=f"synthetic(seed={spec.seed})",
        split="synthetic",
        model="synthetic-generator",
        caption_prompts=tuple(f"synthetic caption {i}" for i in range(v)),
        created_at=_FIXED_TIMESTAMP,
        extra={
            "generator": {
                "n_images": n,
                "n_classes": m,
                "dim": dim,
                "n_captions": v,
                "image_noise": spec.image_noise,
                "caption_noise": spec.caption_noise,
                "caption_noise_shared": spec.caption_noise_shared,
                "caption_noise_spread": spec.caption_noise_spread,
                "caption_image_corr": spec.caption_image_corr,
                "caption_signal": spec.caption_signal,
                "seed": spec.seed,
            }
        },
    )

    return EmbeddingBundle(
        image_embeddings=images.astype(np.float32),
        caption_embeddings=captions.astype(np.float32),
        prototype_members=protos.astype(np.float32),
        members_per_class=(1,) * m,
        labels=labels.astype(np.int64),
        class_names=tuple(f"class_{i}" for i in range(m)),
        reduction=Reduction.SINGLE,
        tau_hint=spec.tau_hint,
        manifest=manifest,
    )
