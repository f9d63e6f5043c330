"""Tiny on-disk demo dataset: colored scenes with clutter.

Gives the offline backend something real to chew on: PNG files, a
labels.csv and a classnames.txt, with each image dominated by its class
color plus random clutter rectangles. Deterministic per seed.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .models import _COLOR_NAMES

DEFAULT_CLASSES = ("red", "green", "blue", "yellow")


def make_demo_dataset(
    out_dir,
    n_images: int = 16,
    class_names=DEFAULT_CLASSES,
    image_size: int = 64,
    seed: int = 0,
) -> Path:
    for name in class_names:
        if name not in _COLOR_NAMES:
            raise ValueError(
                f"demo classes must be color names {sorted(_COLOR_NAMES)}, got {name!r}"
            )
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    rows = []
    for i in range(n_images):
        label = int(rng.integers(0, len(class_names)))
        base = np.array(_COLOR_NAMES[class_names[label]], dtype=np.float64)
        background = tuple(
            int(x) for x in np.clip(base + rng.normal(0, 18, 3), 0, 255)
        )
        img = Image.new("RGB", (image_size, image_size), background)
        draw = ImageDraw.Draw(img)
        # clutter can cover a lot of the scene, so the dominant color is
        # genuinely ambiguous for some samples
        for _ in range(int(rng.integers(3, 8))):
            x0, y0 = rng.integers(0, image_size - 8, 2)
            w, h = rng.integers(4, image_size // 2, 2)
            clutter = tuple(int(c) for c in rng.integers(0, 256, 3))
            draw.rectangle([int(x0), int(y0), int(x0 + w), int(y0 + h)], fill=clutter)
        rel = f"images/sample_{i:04d}.png"
        img.save(out / rel)
        rows.append((rel, label))

    with open(out / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(rows)
    (out / "classnames.txt").write_text(
        "\n".join(class_names) + "\n", encoding="utf-8"
    )
    return out
