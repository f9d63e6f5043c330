import math

import numpy as np
import pytest

from icefuse import (
    IceConfig,
    InvalidSpecError,
    Reduction,
    SynthSpec,
    evaluate,
    synth_bundle,
)


class TestDeterminism:
    def test_same_seed_bitwise_identical(self):
        spec = SynthSpec(n_images=50, n_classes=4, dim=8, seed=99)
        a, b = synth_bundle(spec), synth_bundle(spec)
        assert a.image_embeddings.tobytes() == b.image_embeddings.tobytes()
        assert a.caption_embeddings.tobytes() == b.caption_embeddings.tobytes()
        assert a.prototype_members.tobytes() == b.prototype_members.tobytes()
        assert np.array_equal(a.labels, b.labels)
        assert a.manifest == b.manifest

    def test_different_seed_differs(self):
        a = synth_bundle(SynthSpec(n_images=50, n_classes=4, dim=8, seed=1))
        b = synth_bundle(SynthSpec(n_images=50, n_classes=4, dim=8, seed=2))
        assert a.image_embeddings.tobytes() != b.image_embeddings.tobytes()


class TestStructure:
    def test_shapes_and_reduction(self):
        spec = SynthSpec(n_images=30, n_classes=5, dim=16, n_captions=2, seed=0)
        b = synth_bundle(spec)
        assert b.image_embeddings.shape == (30, 16)
        assert b.caption_embeddings.shape == (30, 2, 16)
        assert b.prototype_members.shape == (5, 16)
        assert b.members_per_class == (1,) * 5
        assert b.reduction is Reduction.SINGLE

    def test_rows_unit_norm(self):
        b = synth_bundle(SynthSpec(n_images=40, n_classes=4, dim=12, seed=5))
        for arr in (b.image_embeddings, b.prototype_members):
            norms = np.linalg.norm(arr.astype(np.float64), axis=-1)
            np.testing.assert_allclose(norms, 1.0, atol=1e-6)
        cap_norms = np.linalg.norm(b.caption_embeddings.astype(np.float64), axis=-1)
        np.testing.assert_allclose(cap_norms, 1.0, atol=1e-6)

    def test_generator_settings_recorded(self):
        spec = SynthSpec(n_images=10, n_classes=3, dim=8, seed=42, caption_signal=0.6)
        manifest = synth_bundle(spec).manifest
        gen = manifest.extra["generator"]
        assert gen["seed"] == 42
        assert gen["caption_signal"] == 0.6
        assert manifest.created_at == "1970-01-01T00:00:00Z"


class TestSignalDial:
    def test_perfect_signal_no_noise_perfect_captions(self):
        spec = SynthSpec(
            n_images=300,
            n_classes=8,
            dim=24,
            caption_signal=1.0,
            image_noise=0.0,
            caption_noise=0.0,
            tau_hint=30.0,
            seed=3,
        )
        b = synth_bundle(spec)
        rep = evaluate(b, IceConfig(tau=b.tau_hint))
        assert rep.method("caption_only").top1_pct == 100.0
        assert rep.method("image_only").top1_pct == 100.0
        assert rep.method("ice").top1_pct == 100.0

    def test_zero_signal_no_noise_images_stay_perfect(self):
        spec = SynthSpec(
            n_images=300,
            n_classes=8,
            dim=24,
            caption_signal=0.0,
            image_noise=0.0,
            caption_noise=0.0,
            tau_hint=30.0,
            seed=3,
        )
        b = synth_bundle(spec)
        rep = evaluate(b, IceConfig(tau=b.tau_hint))
        # captions point at random classes but anchored fusion cannot
        # damage a confident, perfect image model
        assert rep.method("image_only").top1_pct == 100.0
        assert rep.method("ice").top1_pct == 100.0

    def test_zero_signal_caption_accuracy_is_chance(self):
        n, m = 2500, 10
        spec = SynthSpec(
            n_images=n,
            n_classes=m,
            dim=32,
            caption_signal=0.0,
            image_noise=0.3,
            caption_noise=0.0,
            tau_hint=30.0,
            seed=11,
        )
        b = synth_bundle(spec)
        rep = evaluate(b, IceConfig(tau=b.tau_hint), methods=("caption_only",))
        acc = rep.method("caption_only").top1_pct / 100.0
        chance = 1.0 / m
        se = math.sqrt(chance * (1 - chance) / n)
        assert abs(acc - chance) <= 3 * se


class TestSpecValidation:
    def test_single_class_rejected(self):
        with pytest.raises(InvalidSpecError):
            SynthSpec(n_classes=1)

    def test_no_images_rejected(self):
        with pytest.raises(InvalidSpecError):
            SynthSpec(n_images=0)

    def test_signal_out_of_range(self):
        with pytest.raises(InvalidSpecError):
            SynthSpec(caption_signal=1.5)

    def test_negative_noise(self):
        with pytest.raises(InvalidSpecError):
            SynthSpec(image_noise=-0.1)

    def test_bad_correlation(self):
        with pytest.raises(InvalidSpecError):
            SynthSpec(caption_image_corr=2.0)

    def test_bad_spread(self):
        with pytest.raises(InvalidSpecError):
            SynthSpec(caption_noise_spread=-0.5)
