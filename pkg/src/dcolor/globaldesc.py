"""Whole-image descriptors and cluster selection.

The scene descriptor is a Gabor-bank energy layout: the image is resized
to a fixed working resolution, filtered by a bank of zero-mean complex
Gabor kernels (4 scales x 8 orientations), and the mean response magnitude
is pooled over a 4x4 grid, giving 512 values. Cluster selection first
shortlists the top-k clusters by descriptor distance, then picks the one
whose semantic histogram is most cosine-similar to the target's.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .features import SemanticMap
from .image import GrayImage


@dataclass(frozen=True)
class GistParams:
    """Gabor bank geometry. dim = scales * orientations * grid^2."""

    resolution: int = 128
    scales: int = 4
    orientations: int = 8
    grid: int = 4
    base_freq: float = 0.25
    bandwidth: float = 0.56
    truncate: float = 2.5

    @property
    def dim(self) -> int:
        return self.scales * self.orientations * self.grid * self.grid


DEFAULT_GIST = GistParams()


def _resize_bilinear(plane: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = plane.shape
    ys = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    # Lerp as a + w * (b - a): exact for constant planes.
    tl = plane[np.ix_(y0, x0)]
    tr = plane[np.ix_(y0, x1)]
    bl = plane[np.ix_(y1, x0)]
    br = plane[np.ix_(y1, x1)]
    top = tl + wx * (tr - tl)
    bot = bl + wx * (br - bl)
    return top + wy * (bot - top)


def gabor_kernel(freq: float, theta: float, bandwidth: float = 0.56,
                 truncate: float = 2.5) -> np.ndarray:
    """Complex Gabor kernel with an isotropic envelope, zero mean, unit L2."""
    sigma = bandwidth / freq
    r = int(np.ceil(truncate * sigma))
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    rot = x * np.cos(theta) + y * np.sin(theta)
    k = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma)) \
        * np.exp(2j * np.pi * freq * rot)
    k -= k.mean()
    return k / np.linalg.norm(k)


@functools.lru_cache(maxsize=4)
def _bank_ffts(params: GistParams) -> np.ndarray:
    """FFTs of the filter bank embedded at the working resolution."""
    res = params.resolution
    ffts = np.empty((params.scales * params.orientations, res, res), dtype=np.complex128)
    idx = 0
    for s in range(params.scales):
        freq = params.base_freq / (2.0 ** s)
        for o in range(params.orientations):
            theta = np.pi * o / params.orientations
            k = gabor_kernel(freq, theta, params.bandwidth, params.truncate)
            size = k.shape[0]
            if size > res:
                raise ValueError(f"kernel {size} exceeds working resolution {res}")
            big = np.zeros((res, res), dtype=np.complex128)
            big[:size, :size] = k
            big = np.roll(big, (-(size // 2), -(size // 2)), axis=(0, 1))
            ffts[idx] = np.fft.fft2(big)
            idx += 1
    return ffts


def compute_gist(img: GrayImage, params: GistParams = DEFAULT_GIST) -> np.ndarray:
    """Scene descriptor of length params.dim (512 by default).

    Layout: scale-major, orientation-minor, then the 4x4 grid cells in
    row-major order. A constant image yields the all-zero descriptor.
    """
    if img.height < 16 or img.width < 16:
        raise ValueError(f"image {img.height}x{img.width} too small, need at least 16x16")
    res = params.resolution
    grid = params.grid
    cell = res // grid
    work = _resize_bilinear(img.y, res, res)
    if float(np.ptp(work)) == 0.0:
        return np.zeros(params.dim)
    work -= work.mean()
    spectrum = np.fft.fft2(work)
    out = np.empty(params.dim, dtype=np.float64)
    for i, filt in enumerate(_bank_ffts(params)):
        mag = np.abs(np.fft.ifft2(spectrum * filt))
        cells = mag.reshape(grid, cell, grid, cell).mean(axis=(1, 3))
        out[i * grid * grid:(i + 1) * grid * grid] = cells.reshape(-1)
    return out


def semantic_histogram(sem: SemanticMap) -> np.ndarray:
    """Image-level category distribution: mean probability per category."""
    hist = sem.probs.mean(axis=(0, 1), dtype=np.float64)
    return hist / hist.sum()


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; zero vectors compare as 0."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def select_cluster(gist: np.ndarray, hist: np.ndarray, clusters, k: int = 5) -> int:
    """Two-stage nearest-cluster search.

    Shortlist the k clusters with the smallest Euclidean distance between
    scene descriptors, then return the id of the shortlisted cluster whose
    semantic histogram has the largest cosine similarity to `hist`. Ties
    break toward the lowest cluster id at both stages.
    """
    clusters = list(clusters)
    if not clusters:
        raise ValueError("cluster list is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(clusters, key=lambda c: (float(np.linalg.norm(gist - c.center)), c.id))
    shortlist = ranked[:k]
    best = max(shortlist, key=lambda c: (cosine_similarity(hist, c.histogram), -c.id))
    return best.id
