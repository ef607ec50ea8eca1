"""Per-pixel descriptors: gray patch, dense gradient-histogram field, semantics.

The descriptor at a pixel is the concatenation of a 7x7 raw patch (49), a
32-value oriented-gradient histogram descriptor sampled at a center point
and three ring points, and the per-pixel category probability vector.
With 33 categories that is 114 values.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._scratch import buffer as scratch_buffer
from ._scratch import edge_pad_into
from .image import GrayImage
from .refine import SEMANTIC_PARAMS, BilateralParams, gaussian_blur, joint_bilateral_stack

log = logging.getLogger(__name__)

PATCH_SIZE = 7
PATCH_DIM = PATCH_SIZE * PATCH_SIZE


@dataclass(frozen=True)
class DaisyParams:
    """Geometry of the dense descriptor: sample ring and histogram smoothing."""

    ring_radius: float = 8.0
    ring_points: int = 3
    orientations: int = 8
    sigma: float = 2.5

    @property
    def dim(self) -> int:
        return (1 + self.ring_points) * self.orientations

    def offsets(self) -> list[tuple[int, int]]:
        """(dy, dx) sample offsets: center first, then the ring points."""
        offs = [(0, 0)]
        for i in range(self.ring_points):
            ang = 2.0 * np.pi * i / self.ring_points
            offs.append((int(round(self.ring_radius * np.sin(ang))),
                         int(round(self.ring_radius * np.cos(ang)))))
        return offs


@dataclass(frozen=True)
class SemanticMap:
    """Per-pixel category probability vectors with the category names.

    Probabilities are stored as float32; the per-pixel unit-sum invariant
    is checked with a float64 accumulator.
    """

    probs: np.ndarray  # (H, W, N)
    categories: tuple[str, ...]

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float32)
        if probs.ndim != 3 or probs.shape[2] != len(self.categories):
            raise ValueError(f"probs shape {probs.shape} does not match "
                             f"{len(self.categories)} categories")
        if not np.isfinite(probs).all() or probs.min() < 0:
            raise ValueError("probabilities must be finite and non-negative")
        sums = probs.sum(axis=2, dtype=np.float64)
        if np.abs(sums - 1.0).max() > 1e-6:
            raise ValueError("per-pixel probabilities must sum to 1")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "categories", tuple(self.categories))

    @property
    def height(self) -> int:
        return self.probs.shape[0]

    @property
    def width(self) -> int:
        return self.probs.shape[1]

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    @classmethod
    def from_labels(cls, labels: np.ndarray, categories) -> "SemanticMap":
        """One-hot map from an integer label plane."""
        labels = np.asarray(labels)
        n = len(categories)
        if labels.min() < 0 or labels.max() >= n:
            raise ValueError(f"label indices must be in [0, {n}), "
                             f"got [{labels.min()}, {labels.max()}]")
        probs = np.zeros(labels.shape + (n,), dtype=np.float32)
        yy, xx = np.indices(labels.shape)
        probs[yy, xx, labels] = 1.0
        return cls(probs, tuple(categories))

    @classmethod
    def uniform(cls, height: int, width: int, categories) -> "SemanticMap":
        """Flat prior used when no semantic map is available."""
        n = len(categories)
        probs = np.full((height, width, n), 1.0 / n, dtype=np.float32)
        return cls(probs, tuple(categories))


def patch_feature(img: GrayImage, y: int, x: int) -> np.ndarray:
    """Row-major 7x7 neighborhood of (y, x) with replicated edges."""
    h, w = img.y.shape
    if not (0 <= y < h and 0 <= x < w):
        raise ValueError(f"pixel ({y}, {x}) outside image {h}x{w}")
    r = PATCH_SIZE // 2
    ys = np.clip(np.arange(y - r, y + r + 1), 0, h - 1)
    xs = np.clip(np.arange(x - r, x + r + 1), 0, w - 1)
    return img.y[np.ix_(ys, xs)].reshape(-1).copy()


def patch_field(img: GrayImage) -> np.ndarray:
    """Dense 7x7 patches, shape (H, W, 49)."""
    r = PATCH_SIZE // 2
    padded = np.pad(img.y, r, mode="edge")
    windows = sliding_window_view(padded, (PATCH_SIZE, PATCH_SIZE))
    return windows.reshape(img.height, img.width, PATCH_DIM)


def _gradients(plane: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences with replicated edges; returns (gx, gy) views
    into per-thread scratch buffers."""
    h, w = plane.shape
    padded = edge_pad_into(scratch_buffer("grad.pad", (h + 2, w + 2)), plane, 1)
    gx = scratch_buffer("grad.gx", (h, w))
    gy = scratch_buffer("grad.gy", (h, w))
    np.subtract(padded[1:-1, 2:], padded[1:-1, :-2], out=gx)
    gx *= 0.5
    np.subtract(padded[2:, 1:-1], padded[:-2, 1:-1], out=gy)
    gy *= 0.5
    return gx, gy


def orientation_maps(img: GrayImage, params: DaisyParams,
                     out: np.ndarray | None = None) -> np.ndarray:
    """Gaussian-smoothed half-rectified oriented gradient maps, (H, W, O)."""
    gx, gy = _gradients(img.y)
    if out is None:
        out = np.empty(img.y.shape + (params.orientations,), dtype=np.float64)
    oriented = scratch_buffer("daisy.oriented", img.y.shape)
    for i in range(params.orientations):
        theta = 2.0 * np.pi * i / params.orientations
        np.multiply(gx, np.cos(theta), out=oriented)
        oriented += gy * np.sin(theta)
        np.maximum(oriented, 0.0, out=oriented)
        out[:, :, i] = gaussian_blur(oriented, params.sigma)
    return out


def daisy_field(img: GrayImage, params: DaisyParams = DaisyParams()) -> np.ndarray:
    """Dense descriptors, shape (H, W, 32) for the default geometry.

    At each pixel the smoothed orientation histograms are sampled at the
    center and the ring points (replicated borders), and every 8-bin
    histogram is L2-normalized. Zero histograms stay zero.
    """
    h, w = img.y.shape
    offsets = params.offsets()
    pad = max(max(abs(dy), abs(dx)) for dy, dx in offsets)
    maps = orientation_maps(
        img, params, out=scratch_buffer("daisy.maps", (h, w, params.orientations)))
    maps_pad = scratch_buffer("daisy.mapspad",
                              (h + 2 * pad, w + 2 * pad, params.orientations))
    edge_pad_into(maps_pad, maps, pad)
    out = np.empty((h, w, params.dim), dtype=np.float64)
    norm = scratch_buffer("daisy.norm", (h, w, 1))
    for loc, (dy, dx) in enumerate(offsets):
        dst = out[:, :, loc * params.orientations:(loc + 1) * params.orientations]
        dst[:] = maps_pad[pad + dy:pad + dy + h, pad + dx:pad + dx + w, :]
        np.sqrt(np.sum(dst * dst, axis=2, keepdims=True), out=norm)
        np.divide(dst, norm, out=dst, where=norm > 0)
    return out


def semantic_feature(sem: SemanticMap, guide: GrayImage,
                     params: BilateralParams = SEMANTIC_PARAMS) -> SemanticMap:
    """Smooth each probability plane with the guide, then renormalize.

    Zero-sum pixels (cannot occur for valid maps, guarded anyway) fall back
    to the uniform distribution and are counted in a warning.
    """
    if sem.probs.shape[:2] != guide.y.shape:
        raise ValueError(f"dimension mismatch: map {sem.probs.shape[:2]} "
                         f"vs guide {guide.y.shape}")
    smoothed = joint_bilateral_stack(sem.probs, guide.y, params)
    np.clip(smoothed, 0.0, None, out=smoothed)
    sums = smoothed.sum(axis=2, dtype=np.float64)
    dead = sums <= 0.0
    n_dead = int(dead.sum())
    if n_dead:
        log.warning("semantic smoothing produced %d zero-sum pixels; using uniform", n_dead)
        smoothed[dead] = 1.0 / sem.n_categories
        sums[dead] = 1.0
    # The filter preserves unit sums up to storage rounding; divide only
    # when clipping actually moved mass.
    if np.abs(sums - 1.0).max() > 5e-7:
        np.divide(smoothed, sums[:, :, None], out=smoothed)
    return SemanticMap(smoothed, sem.categories)


def descriptor_dim(n_categories: int) -> int:
    return PATCH_DIM + DaisyParams().dim + n_categories


def assemble_descriptor(img: GrayImage, daisy: np.ndarray, sem: SemanticMap,
                        y: int, x: int) -> np.ndarray:
    """Full descriptor at one pixel: [patch; daisy; semantic probabilities]."""
    if daisy.shape[:2] != img.y.shape or sem.probs.shape[:2] != img.y.shape:
        raise ValueError("descriptor inputs must share the image dimensions")
    return np.concatenate([patch_feature(img, y, x), daisy[y, x], sem.probs[y, x]])


def assemble_rows(img: GrayImage, daisy: np.ndarray, sem: SemanticMap,
                  row0: int, row1: int, out: np.ndarray | None = None,
                  dtype=np.float64) -> np.ndarray:
    """Descriptor matrix for the pixel rows [row0, row1), row-major.

    Writing into a caller-provided buffer lets large images stream through
    the regressor strip by strip without a full-image descriptor matrix.
    """
    if daisy.shape[:2] != img.y.shape or sem.probs.shape[:2] != img.y.shape:
        raise ValueError("descriptor inputs must share the image dimensions")
    h, w = img.y.shape
    rows = row1 - row0
    n = rows * w
    d_daisy = daisy.shape[2]
    d_sem = sem.probs.shape[2]
    if out is None:
        out = np.empty((n, PATCH_DIM + d_daisy + d_sem), dtype=dtype)
    # Patch columns are written one shifted slice at a time, casting on the
    # fly instead of materializing the full patch field. The padded slab
    # replicates edges exactly where the strip touches the image border.
    r = PATCH_SIZE // 2
    pad_top = max(0, r - row0)
    pad_bottom = max(0, row1 + r - h)
    slab = img.y[row0 - r + pad_top:row1 + r - pad_bottom]
    padded = np.pad(slab, ((pad_top, pad_bottom), (r, r)), mode="edge")
    col = 0
    for dy in range(PATCH_SIZE):
        for dx in range(PATCH_SIZE):
            out[:, col] = padded[dy:dy + rows, dx:dx + w].reshape(n)
            col += 1
    out[:, PATCH_DIM:PATCH_DIM + d_daisy] = daisy[row0:row1].reshape(n, d_daisy)
    out[:, PATCH_DIM + d_daisy:] = sem.probs[row0:row1].reshape(n, d_sem)
    return out


def assemble_field(img: GrayImage, daisy: np.ndarray, sem: SemanticMap,
                   dtype=np.float64) -> np.ndarray:
    """Dense descriptor matrix, shape (H*W, D), rows in row-major pixel order."""
    return assemble_rows(img, daisy, sem, 0, img.height, dtype=dtype)
