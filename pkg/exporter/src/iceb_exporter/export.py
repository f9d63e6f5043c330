"""Export pipeline: images to a validated ICEB bundle.

For every image the configured model produces one embedding and, for each
caption prompt, one generated caption which is embedded by the same
model's text encoder. Class prototypes come either from prompt templates
expanded over the class names or from a per-class descriptor JSON file.
All embeddings are normalized before writing (the engine tolerates
unnormalized vectors, but normalizing on both sides of the wire keeps the
stored payload scale-free). Everything that influenced the export lands in
the manifest: model id, every prompt string verbatim, decoding settings.
"""

from __future__ import annotations

import datetime
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import load_image_folder
from .models import load_model
from .writer import ExportError, write_iceb


@dataclass(frozen=True)
class ExportJob:
    dataset_root: str
    output_path: str
    model_spec: str = "toy"
    split: str = "test"
    dataset_name: str = ""
    caption_prompts: tuple[str, ...] = ("a", "a photo of", "a photo containing")
    class_templates: tuple[str, ...] = ("a photo of a {}",)
    descriptor_file: str | None = None
    prototype_reduction: str = "single"
    batch_size: int = 32
    device: str = "cpu"
    tau_hint: float = 100.0
    store_caption_texts: bool = True

    def __post_init__(self):
        if not self.caption_prompts:
            raise ExportError("caption prompt list must be nonempty")
        if self.batch_size < 1:
            raise ExportError(f"batch size must be >= 1, got {self.batch_size}")
        if self.descriptor_file is None:
            if not self.class_templates:
                raise ExportError("need class templates or a descriptor file")
            if self.prototype_reduction == "single" and len(self.class_templates) > 1:
                raise ExportError(
                    "reduction 'single' allows exactly one class template"
                )
        if self.prototype_reduction not in ("single", "centroid", "score_mean"):
            raise ExportError(
                f"unknown prototype reduction {self.prototype_reduction!r}"
            )


def _normalize(mat: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ExportError("model produced a zero embedding; aborting write")
    return mat / norms


def load_descriptors(path: str, class_names) -> list[list[str]]:
    """Per-class descriptor strings from JSON {class_name: [descriptor, ...]}."""
    with open(path, "r", encoding="utf-8") as fh:
        table = json.loads(fh.read())
    groups = []
    for name in class_names:
        if name not in table:
            raise ExportError(f"descriptor file {path} has no entry for class {name!r}")
        descriptors = table[name]
        if not descriptors:
            raise ExportError(f"descriptor list for class {name!r} is empty")
        groups.append([str(d) for d in descriptors])
    return groups


def build_prototype_members(model, job: ExportJob, class_names):
    """Embed class prompt templates or descriptors into prototype members.

    Returns (members, members_per_class, prototype_texts).
    """
    if job.descriptor_file is not None:
        groups = load_descriptors(job.descriptor_file, class_names)
    else:
        groups = [
            [template.format(name) for template in job.class_templates]
            for name in class_names
        ]

    flat = [text for group in groups for text in group]
    embedded = _normalize(model.encode_texts(flat))

    members_per_class = [len(g) for g in groups]
    if job.prototype_reduction == "centroid":
        # collapse at export time so the stored bundle is small and the
        # stored tag matches the stored member count
        collapsed = []
        start = 0
        for count in members_per_class:
            collapsed.append(embedded[start : start + count].mean(axis=0))
            start += count
        members = _normalize(np.stack(collapsed))
        members_per_class = [1] * len(groups)
    else:
        members = embedded
    if job.prototype_reduction == "single" and any(c != 1 for c in members_per_class):
        raise ExportError("reduction 'single' needs exactly one text per class")
    return members, members_per_class, groups


def export(job: ExportJob) -> dict:
    """Run the full pipeline and write the bundle; returns a small summary."""
    dataset = load_image_folder(job.dataset_root)
    model = load_model(job.model_spec, device=job.device)

    n = len(dataset)
    v = len(job.caption_prompts)
    image_embeddings = np.zeros((n, model.embed_dim))
    caption_embeddings = np.zeros((n, v, model.embed_dim))
    caption_texts: list[list[str]] = [[""] * v for _ in range(n)]

    for indices, images in dataset.iter_batches(job.batch_size):
        image_embeddings[indices] = _normalize(model.encode_images(images))
        for p, prompt in enumerate(job.caption_prompts):
            captions = model.caption(images, prompt)
            caption_embeddings[indices, p] = _normalize(model.encode_texts(captions))
            for i, caption in zip(indices, captions):
                caption_texts[i][p] = caption

    members, members_per_class, prototype_texts = build_prototype_members(
        model, job, dataset.class_names
    )

    manifest = {
        "dataset": job.dataset_name or Path(job.dataset_root).name,
        "split": job.split,
        "model": model.model_id,
        "caption_prompts": list(job.caption_prompts),
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "extra": {
            "exporter": "iceb-exporter",
            "decoding": {"strategy": "greedy", "num_beams": 1, "seed": None},
            "class_templates": list(job.class_templates)
            if job.descriptor_file is None
            else [],
            "descriptor_file": job.descriptor_file,
            "prototype_reduction": job.prototype_reduction,
            "prototype_texts": prototype_texts,
        },
    }

    write_iceb(
        job.output_path,
        image_embeddings=image_embeddings,
        caption_embeddings=caption_embeddings,
        prototype_members=members,
        members_per_class=members_per_class,
        labels=np.asarray(dataset.labels),
        class_names=dataset.class_names,
        reduction=job.prototype_reduction,
        tau_hint=job.tau_hint,
        manifest=manifest,
        caption_texts=[tuple(row) for row in caption_texts]
        if job.store_caption_texts
        else None,
    )
    return {
        "output": job.output_path,
        "images": n,
        "captions_per_image": v,
        "classes": len(dataset.class_names),
        "dim": model.embed_dim,
        "model": model.model_id,
    }
