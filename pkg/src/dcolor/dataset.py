"""Dataset ingestion: PNG images, label maps, probability maps, categories.

Expected layout of a reference dataset::

    root/
      categories.txt   one category name per line, order defines indices
      images/          8-bit color PNGs
      labels/          per image, either <stem>.png (8-bit single channel,
                       pixel value = 0-based category index) or <stem>.prob
                       (raw probability map, format below)

Probability map format: magic "DSEM", then width, height and category
count as little-endian u32, then width*height*N float32 little-endian
values in row-major pixel order with the N probabilities of a pixel
stored contiguously.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .features import SemanticMap
from .image import ColorImage, GrayImage, rgb_to_yuv
from .pipeline import ReferencePair

log = logging.getLogger(__name__)

PROB_MAGIC = b"DSEM"


@dataclass(frozen=True)
class DatasetLayout:
    root: Path

    @property
    def images_dir(self) -> Path:
        return self.root / "images"

    @property
    def labels_dir(self) -> Path:
        return self.root / "labels"

    @property
    def categories_file(self) -> Path:
        return self.root / "categories.txt"


def load_categories(path) -> tuple[str, ...]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"categories file not found: {path}")
    names = [line.strip() for line in path.read_text().splitlines() if line.strip()]
    if not names:
        raise ValueError(f"categories file is empty: {path}")
    return tuple(names)


def load_color_png(path) -> ColorImage:
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return ColorImage.from_array(rgb)


def load_gray_png(path) -> GrayImage:
    """Load a PNG as luminance; color inputs are converted via the Y plane."""
    with Image.open(path) as img:
        if img.mode in ("L", "I", "I;16", "1"):
            y = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
            return GrayImage(y)
    gray, _ = rgb_to_yuv(load_color_png(path))
    return gray


def save_color_png(image: ColorImage, path) -> None:
    arr = np.clip(image.to_array() * 255.0 + 0.5, 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_label_png(path, categories) -> SemanticMap:
    with Image.open(path) as img:
        if img.mode != "L":
            img = img.convert("L")
        labels = np.asarray(img, dtype=np.int64)
    return SemanticMap.from_labels(labels, categories)


def save_prob_map(sem: SemanticMap, path) -> None:
    h, w, n = sem.probs.shape
    with open(path, "wb") as fh:
        fh.write(PROB_MAGIC)
        fh.write(struct.pack("<III", w, h, n))
        fh.write(np.ascontiguousarray(sem.probs, dtype="<f4").tobytes())


def load_prob_map(path, categories) -> SemanticMap:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != PROB_MAGIC:
        raise ValueError(f"{path}: not a probability map (bad magic)")
    w, h, n = struct.unpack("<III", data[4:16])
    if n != len(categories):
        raise ValueError(f"{path}: {n} categories in file, {len(categories)} expected")
    expected = 16 + 4 * w * h * n
    if len(data) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(data)}")
    probs = np.frombuffer(data[16:], dtype="<f4").astype(np.float64).reshape(h, w, n)
    # Tolerate float32 rounding in the sums.
    probs /= probs.sum(axis=2, keepdims=True)
    return SemanticMap(probs, tuple(categories))


def load_semantic_file(path, categories) -> SemanticMap:
    """Load either a label PNG or a raw probability map, by extension."""
    path = Path(path)
    if path.suffix == ".prob":
        return load_prob_map(path, categories)
    return load_label_png(path, categories)


def find_semantic_file(layout: DatasetLayout, stem: str) -> Path | None:
    for candidate in (layout.labels_dir / f"{stem}.prob",
                      layout.labels_dir / f"{stem}.png"):
        if candidate.is_file():
            return candidate
    return None


def load_dataset(root) -> tuple[tuple[str, ...], list[ReferencePair]]:
    """Load all reference pairs; images lacking a semantic file are kept
    with semantic=None so the caller can decide how to treat them."""
    layout = DatasetLayout(Path(root))
    if not layout.images_dir.is_dir():
        raise FileNotFoundError(f"images directory not found: {layout.images_dir}")
    categories = load_categories(layout.categories_file)
    pairs = []
    for image_path in sorted(layout.images_dir.glob("*.png")):
        stem = image_path.stem
        color = load_color_png(image_path)
        semantic_path = find_semantic_file(layout, stem)
        semantic = None
        if semantic_path is not None:
            semantic = load_semantic_file(semantic_path, categories)
        else:
            log.warning("no label map for %s", stem)
        pairs.append(ReferencePair.from_color(stem, color, semantic))
    if not pairs:
        raise ValueError(f"no PNG images found under {layout.images_dir}")
    return categories, pairs
