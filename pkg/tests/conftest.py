import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from icefuse import DatasetManifest, EmbeddingBundle, Reduction


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_bundle(
    rng,
    n=40,
    m=5,
    dim=8,
    v=3,
    members_per_class=None,
    reduction=Reduction.SINGLE,
    caption_texts=False,
    tau_hint=5.0,
):
    """Hand-rolled random bundle, independent of the synthetic generator."""
    if members_per_class is None:
        members_per_class = (1,) * m

    def unit(shape):
        x = rng.standard_normal(shape)
        return (x / np.linalg.norm(x, axis=-1, keepdims=True)).astype(np.float32)

    total = sum(members_per_class)
    texts = None
    if caption_texts:
        texts = tuple(
            tuple(f"caption {i}/{j}" for j in range(v)) for i in range(n)
        )
    return EmbeddingBundle(
        image_embeddings=unit((n, dim)),
        caption_embeddings=unit((n, v, dim)),
        prototype_members=unit((total, dim)),
        members_per_class=tuple(members_per_class),
        labels=rng.integers(0, m, size=n).astype(np.int64),
        class_names=tuple(f"thing_{i}" for i in range(m)),
        reduction=reduction,
        tau_hint=tau_hint,
        manifest=DatasetManifest(
            dataset="handmade",
            split="test",
            model="none",
            caption_prompts=tuple(f"prompt {j}" for j in range(v)),
            created_at="2024-08-17T00:00:00Z",
        ),
        caption_texts=texts,
    )


@pytest.fixture
def small_bundle(rng):
    return make_bundle(rng)
