"""Vision-language backends: a deterministic offline model and an optional
transformers-backed one.

Every backend exposes the same four methods:

    embed_dim                         latent dimension
    encode_images(images) -> (n, d)   unit-norm image embeddings
    encode_texts(texts)   -> (n, d)   unit-norm text embeddings
    caption(images, prompt) -> [str]  one caption per image for the prompt

The toy backend needs no weights or network: texts are embedded from
hashed character trigrams, images from the trigram embedding of a
canonical color word (the shared image-text space) mixed with a projection
of pooled pixel statistics (image-specific detail), and the captioner
describes the picture's dominant color, brightness and texture. Its point
is to be an honest, fully reproducible stand-in with the same interface as
a real model, not to be accurate on natural images.
"""

from __future__ import annotations

import zlib

import numpy as np
from PIL import Image

TOY_DEFAULT_DIM = 64
_TRIGRAM_BUCKETS = 4096

_COLOR_NAMES = {
    "red": (220, 40, 40),
    "green": (40, 180, 60),
    "blue": (40, 70, 220),
    "yellow": (230, 220, 50),
    "orange": (240, 140, 30),
    "purple": (140, 50, 180),
    "white": (240, 240, 240),
    "gray": (128, 128, 128),
    "black": (20, 20, 20),
    "brown": (130, 90, 50),
}


class ModelUnavailableError(Exception):
    pass


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=-1, keepdims=True)
    norms[norms == 0] = 1.0
    return mat / norms


class ToyVlm:
    """Deterministic, dependency-free encoder + captioner."""

    def __init__(self, dim: int = TOY_DEFAULT_DIM):
        if dim < 8:
            raise ValueError(f"toy model dimension must be >= 8, got {dim}")
        self.embed_dim = dim
        self.model_id = f"toy-vlm-{dim}"
        # fixed projections; seeds are part of the model identity
        img_rng = np.random.default_rng(0x1CEB01)
        txt_rng = np.random.default_rng(0x1CEB02)
        self._w_img = img_rng.standard_normal((72, dim)) / np.sqrt(72)
        self._w_txt = txt_rng.standard_normal((_TRIGRAM_BUCKETS, dim)) / np.sqrt(48)

    # ------------------------------------------------------------ images

    def _image_features(self, image: Image.Image) -> np.ndarray:
        rgb = np.asarray(image.convert("RGB").resize((16, 16)), dtype=np.float64)
        rgb /= 255.0
        # 4x4 mean-pooled grid per channel (48) + 8-bin histogram per channel (24)
        grid = rgb.reshape(4, 4, 4, 4, 3).mean(axis=(1, 3)).reshape(-1)
        hist = np.concatenate(
            [np.histogram(rgb[..., c], bins=8, range=(0, 1))[0] for c in range(3)]
        ) / rgb[..., 0].size
        return np.concatenate([grid, hist])

    def encode_images(self, images) -> np.ndarray:
        # anchor each image in the shared text space through its dominant
        # color word, then mix in pixel statistics as image-specific detail
        rows = []
        for im in images:
            anchor = _unit_rows(
                (self._text_features(f"a {self._dominant_color(im)} image") @ self._w_txt)[
                    None, :
                ]
            )[0]
            detail = _unit_rows((self._image_features(im) @ self._w_img)[None, :])[0]
            rows.append(0.8 * anchor + 0.45 * detail)
        return _unit_rows(np.stack(rows))

    # ------------------------------------------------------------- texts

    def _text_features(self, text: str) -> np.ndarray:
        counts = np.zeros(_TRIGRAM_BUCKETS)
        padded = f"  {text.lower()} "
        for i in range(len(padded) - 2):
            bucket = zlib.crc32(padded[i : i + 3].encode("utf-8")) % _TRIGRAM_BUCKETS
            counts[bucket] += 1.0
        return counts

    def encode_texts(self, texts) -> np.ndarray:
        feats = np.stack([self._text_features(t) for t in texts])
        return _unit_rows(feats @ self._w_txt)

    # ---------------------------------------------------------- captions

    def _dominant_color(self, image: Image.Image) -> str:
        rgb = np.asarray(image.convert("RGB").resize((16, 16)), dtype=np.float64)
        mean = rgb.reshape(-1, 3).mean(axis=0)
        return min(
            _COLOR_NAMES,
            key=lambda name: float(np.sum((mean - np.array(_COLOR_NAMES[name])) ** 2)),
        )

    def _describe(self, image: Image.Image) -> str:
        rgb = np.asarray(image.convert("RGB").resize((16, 16)), dtype=np.float64)
        color = self._dominant_color(image)
        luma = rgb @ np.array([0.299, 0.587, 0.114]) / 255.0
        brightness = "bright" if luma.mean() > 0.6 else "dark" if luma.mean() < 0.3 else "dim"
        texture = "smooth" if luma.std() < 0.08 else "busy"
        return f"a mostly {color} {brightness} picture with {texture} texture"

    def caption(self, images, prompt: str):
        return [f"{prompt} {self._describe(im)}".strip() for im in images]


class HfClipVlm:
    """CLIP embeddings plus an image-to-text captioner via transformers.

    Loading happens eagerly so a missing dependency or unreachable weight
    repository fails fast with ModelUnavailableError.
    """

    def __init__(self, clip_id: str, captioner_id: str | None = None, device: str = "cpu"):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor, pipeline
        except ImportError as exc:
            raise ModelUnavailableError(
                f"transformers backend needs torch+transformers: {exc}"
            ) from exc
        try:
            self._clip = CLIPModel.from_pretrained(clip_id).to(device).eval()
            self._proc = CLIPProcessor.from_pretrained(clip_id)
            self._captioner = None
            if captioner_id:
                self._captioner = pipeline(
                    "image-to-text", model=captioner_id, device=device
                )
        except Exception as exc:
            raise ModelUnavailableError(f"cannot load {clip_id}: {exc}") from exc
        self._torch = torch
        self._device = device
        self.model_id = clip_id + (f"+{captioner_id}" if captioner_id else "")
        self.embed_dim = int(self._clip.config.projection_dim)

    def encode_images(self, images) -> np.ndarray:
        inputs = self._proc(images=list(images), return_tensors="pt").to(self._device)
        with self._torch.no_grad():
            feats = self._clip.get_image_features(**inputs)
        return _unit_rows(feats.cpu().numpy().astype(np.float64))

    def encode_texts(self, texts) -> np.ndarray:
        inputs = self._proc(
            text=list(texts), return_tensors="pt", padding=True, truncation=True
        ).to(self._device)
        with self._torch.no_grad():
            feats = self._clip.get_text_features(**inputs)
        return _unit_rows(feats.cpu().numpy().astype(np.float64))

    def caption(self, images, prompt: str):
        if self._captioner is None:
            raise ModelUnavailableError(
                "no captioner model configured (use clip:<clip_id>+<captioner_id>)"
            )
        outs = self._captioner(
            list(images),
            prompt=prompt or None,
            generate_kwargs={"do_sample": False, "num_beams": 1, "max_new_tokens": 30},
        )
        return [o[0]["generated_text"].strip() for o in outs]


def load_model(spec: str, device: str = "cpu"):
    """Instantiate a backend from a spec string.

    ``toy`` or ``toy:<dim>`` selects the offline model; ``clip:<clip_id>``
    or ``clip:<clip_id>+<captioner_id>`` selects the transformers backend.
    """
    kind, _, rest = spec.partition(":")
    if kind == "toy":
        return ToyVlm(int(rest) if rest else TOY_DEFAULT_DIM)
    if kind == "clip":
        if not rest:
            raise ValueError("clip backend needs a model id: clip:<id>[+<captioner>]")
        clip_id, _, captioner_id = rest.partition("+")
        return HfClipVlm(clip_id, captioner_id or None, device=device)
    raise ValueError(f"unknown model spec {spec!r} (expected toy[:dim] or clip:...)")
