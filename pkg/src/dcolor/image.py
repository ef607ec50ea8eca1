"""Image containers, YUV color conversion and PSNR.

Planes are row-major 2-D float arrays. Color samples live in [0, 1],
chrominance in [-0.5, 0.5]. 8-bit quantization happens only at file I/O.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# BT.601 luma weights; chroma scaled so that in-gamut RGB maps into [-0.5, 0.5].
KR, KG, KB = 0.299, 0.587, 0.114
U_SCALE = 0.564
V_SCALE = 0.713


def _as_plane(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D plane, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite samples")
    return arr


def _check_range(arr: np.ndarray, lo: float, hi: float, name: str) -> None:
    if arr.min() < lo - 1e-9 or arr.max() > hi + 1e-9:
        raise ValueError(f"{name} samples outside [{lo}, {hi}]: "
                         f"min={arr.min():.6g} max={arr.max():.6g}")


@dataclass(frozen=True)
class ColorImage:
    """RGB image with unit-interval float planes of equal shape."""

    r: np.ndarray
    g: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        r = _as_plane(self.r, "r")
        g = _as_plane(self.g, "g")
        b = _as_plane(self.b, "b")
        if not (r.shape == g.shape == b.shape):
            raise ValueError(f"plane shapes differ: {r.shape}, {g.shape}, {b.shape}")
        for plane, name in ((r, "r"), (g, "g"), (b, "b")):
            _check_range(plane, 0.0, 1.0, name)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "b", b)

    @property
    def height(self) -> int:
        return self.r.shape[0]

    @property
    def width(self) -> int:
        return self.r.shape[1]

    @classmethod
    def from_array(cls, hwc: np.ndarray) -> "ColorImage":
        """Build from an (H, W, 3) array."""
        hwc = np.asarray(hwc, dtype=np.float64)
        if hwc.ndim != 3 or hwc.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) array, got {hwc.shape}")
        return cls(hwc[:, :, 0], hwc[:, :, 1], hwc[:, :, 2])

    def to_array(self) -> np.ndarray:
        return np.stack([self.r, self.g, self.b], axis=-1)


@dataclass(frozen=True)
class GrayImage:
    """Single luminance plane with samples in [0, 1]."""

    y: np.ndarray

    def __post_init__(self):
        y = _as_plane(self.y, "y")
        _check_range(y, 0.0, 1.0, "y")
        object.__setattr__(self, "y", y)

    @property
    def height(self) -> int:
        return self.y.shape[0]

    @property
    def width(self) -> int:
        return self.y.shape[1]


@dataclass(frozen=True)
class ChromaPlanes:
    """Paired U, V planes with samples in [-0.5, 0.5]."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = _as_plane(self.u, "u")
        v = _as_plane(self.v, "v")
        if u.shape != v.shape:
            raise ValueError(f"u/v shapes differ: {u.shape} vs {v.shape}")
        _check_range(u, -0.5, 0.5, "u")
        _check_range(v, -0.5, 0.5, "v")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)


def rgb_to_yuv(img: ColorImage) -> tuple[GrayImage, ChromaPlanes]:
    """Split an RGB image into luminance and zero-centered chrominance.

    Y = 0.299 R + 0.587 G + 0.114 B, U = 0.564 (B - Y), V = 0.713 (R - Y).
    """
    y = KR * img.r + KG * img.g + KB * img.b
    u = U_SCALE * (img.b - y)
    v = V_SCALE * (img.r - y)
    # Guard against float dust at the interval ends.
    y = np.clip(y, 0.0, 1.0)
    u = np.clip(u, -0.5, 0.5)
    v = np.clip(v, -0.5, 0.5)
    return GrayImage(y), ChromaPlanes(u, v)


def yuv_to_rgb(gray: GrayImage, chroma: ChromaPlanes) -> ColorImage:
    """Exact inverse of rgb_to_yuv, clamped to [0, 1]."""
    if gray.y.shape != chroma.u.shape:
        raise ValueError(f"dimension mismatch: gray {gray.y.shape} vs chroma {chroma.u.shape}")
    r = gray.y + chroma.v / V_SCALE
    b = gray.y + chroma.u / U_SCALE
    g = (gray.y - KR * r - KB * b) / KG
    rgb = np.stack([r, g, b], axis=-1)
    np.clip(rgb, 0.0, 1.0, out=rgb)
    return ColorImage.from_array(rgb)


def fit_chroma_to_gamut(gray: GrayImage, chroma: ChromaPlanes) -> ChromaPlanes:
    """Scale (U, V) per pixel so the reconstructed RGB stays in [0, 1].

    Scaling chroma toward zero never changes the reconstructed luminance,
    so a colorized image keeps the exact Y plane it was given.
    """
    if gray.y.shape != chroma.u.shape:
        raise ValueError(f"dimension mismatch: gray {gray.y.shape} vs chroma {chroma.u.shape}")
    y = gray.y
    dv = chroma.v / V_SCALE
    du = chroma.u / U_SCALE
    # Per-channel offsets from gray: R = y + dv, B = y + du, G = y + dg.
    dg = -(KR * dv + KB * du) / KG
    scale = np.ones_like(y)
    for t in (dv, du, dg):
        with np.errstate(divide="ignore", invalid="ignore"):
            limit = np.where(t > 0, (1.0 - y) / t, np.where(t < 0, -y / t, np.inf))
        scale = np.minimum(scale, limit)
    scale = np.clip(scale, 0.0, 1.0)
    return ChromaPlanes(chroma.u * scale, chroma.v * scale)


def psnr(a: ColorImage, b: ColorImage) -> float:
    """Peak signal-to-noise ratio in dB over all three channels, MAX = 1.

    Identical images return math.inf.
    """
    if a.r.shape != b.r.shape:
        raise ValueError(f"dimension mismatch: {a.r.shape} vs {b.r.shape}")
    mse = np.mean((a.to_array() - b.to_array()) ** 2)
    if mse == 0.0:
        return math.inf
    return float(10.0 * math.log10(1.0 / mse))
