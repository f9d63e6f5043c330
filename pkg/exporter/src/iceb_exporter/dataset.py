"""Image-folder dataset: a directory with labels.csv and classnames.txt.

labels.csv lines are ``relative/path.png,label_index`` (no header);
classnames.txt holds one class name per line, in label order.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path

from PIL import Image


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class ImageFolderDataset:
    root: Path
    paths: tuple[str, ...]
    labels: tuple[int, ...]
    class_names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.paths)

    def load_image(self, index: int) -> Image.Image:
        with Image.open(self.root / self.paths[index]) as im:
            return im.convert("RGB")

    def iter_batches(self, batch_size: int):
        for start in range(0, len(self), batch_size):
            idx = range(start, min(start + batch_size, len(self)))
            yield list(idx), [self.load_image(i) for i in idx]


def load_image_folder(root: str | os.PathLike) -> ImageFolderDataset:
    root = Path(root)
    labels_csv = root / "labels.csv"
    names_txt = root / "classnames.txt"
    if not labels_csv.is_file():
        raise DatasetError(f"missing {labels_csv}")
    if not names_txt.is_file():
        raise DatasetError(f"missing {names_txt}")

    class_names = tuple(
        line.strip() for line in names_txt.read_text(encoding="utf-8").splitlines() if line.strip()
    )
    if len(class_names) < 2:
        raise DatasetError(f"{names_txt} must list at least 2 classes")

    paths: list[str] = []
    labels: list[int] = []
    with open(labels_csv, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row:
                continue
            if len(row) != 2:
                raise DatasetError(f"{labels_csv}:{lineno}: expected 'path,label'")
            rel, label_text = row[0].strip(), row[1].strip()
            try:
                label = int(label_text)
            except ValueError as exc:
                raise DatasetError(
                    f"{labels_csv}:{lineno}: label {label_text!r} is not an integer"
                ) from exc
            if not 0 <= label < len(class_names):
                raise DatasetError(
                    f"{labels_csv}:{lineno}: label {label} outside [0, {len(class_names)})"
                )
            if not (root / rel).is_file():
                raise DatasetError(f"{labels_csv}:{lineno}: image {rel!r} not found")
            paths.append(rel)
            labels.append(label)
    if not paths:
        raise DatasetError(f"{labels_csv} lists no images")
    return ImageFolderDataset(
        root=root,
        paths=tuple(paths),
        labels=tuple(labels),
        class_names=class_names,
    )
