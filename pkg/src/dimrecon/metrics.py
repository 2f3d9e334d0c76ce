"""Image-quality metrics and display helpers, computed on magnitude volumes."""
from __future__ import annotations

import math

import numpy as np

from .cplx import ShapeError


def _pair(ref, rec):
    ref = np.asarray(ref, dtype=np.float64)
    rec = np.asarray(rec, dtype=np.float64)
    if ref.shape != rec.shape:
        raise ShapeError("metric operands", ref.shape, rec.shape)
    return ref, rec


def mse(ref, rec) -> float:
    """Mean squared error per voxel."""
    ref, rec = _pair(ref, rec)
    return float(np.mean((ref - rec) ** 2))


def psnr(ref, rec) -> float:
    """``20 log10(max(ref) sqrt(N) / ||ref - rec||_2)`` in dB; ``inf`` when equal."""
    ref, rec = _pair(ref, rec)
    peak = ref.max()
    if not np.any(ref):
        raise ValueError("PSNR undefined for an all-zero reference")
    err = np.linalg.norm((ref - rec).ravel())
    if err == 0:
        return math.inf
    return float(20.0 * math.log10(peak * math.sqrt(ref.size) / err))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img, g):
    """Separable 'valid' correlation of a 2D image with the 1D window ``g``."""
    k = len(g)
    rows = sum(g[i] * img[i:img.shape[0] - k + 1 + i, :] for i in range(k))
    return sum(g[j] * rows[:, j:rows.shape[1] - k + 1 + j] for j in range(k))


def ssim_frame(ref, rec, data_range=1.0, win=11, sigma=1.5, k1=0.01, k2=0.03) -> float:
    if ref.shape[0] < win or ref.shape[1] < win:
        raise ValueError(f"frame {ref.shape} smaller than the {win}x{win} SSIM window")
    g = gaussian_window(win, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_x = _filter_valid(ref, g)
    mu_y = _filter_valid(rec, g)
    sxx = _filter_valid(ref * ref, g) - mu_x ** 2
    syy = _filter_valid(rec * rec, g) - mu_y ** 2
    sxy = _filter_valid(ref * rec, g) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(ref, rec, data_range=1.0, win=11, sigma=1.5, k1=0.01, k2=0.03) -> float:
    """Mean over frames of the Gaussian-windowed 2D SSIM of each ``(x, y)`` frame.

    Inputs are ``(nx, ny)`` or ``(nx, ny, nt)``; windows lie fully inside
    the frame.
    """
    ref, rec = _pair(ref, rec)
    if ref.ndim == 2:
        ref, rec = ref[..., None], rec[..., None]
    vals = [ssim_frame(ref[..., t], rec[..., t], data_range, win, sigma, k1, k2) for t in range(ref.shape[-1])]
    return float(np.mean(vals))


def error_map(ref, rec, display_max: float = 0.07) -> np.ndarray:
    """``|ref - rec|`` clipped to ``[0, display_max]`` and scaled to 0..255.

    Rounding is half-up: ``floor(255 * v / display_max + 0.5)``, so a
    difference of exactly half the range maps to 128.
    """
    ref, rec = _pair(ref, rec)
    v = np.clip(np.abs(ref - rec), 0.0, display_max) / display_max
    return np.floor(255.0 * v + 0.5).astype(np.uint8)


def to_uint8(image, vmax: float | None = None) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    vmax = image.max() if vmax is None else vmax
    if vmax <= 0:
        return np.zeros(image.shape, dtype=np.uint8)
    return np.floor(255.0 * np.clip(image / vmax, 0.0, 1.0) + 0.5).astype(np.uint8)


def yt_extract(volume, x_index: int) -> np.ndarray:
    """The ``(ny, nt)`` slice at fixed ``x``."""
    volume = np.asarray(volume)
    if volume.ndim != 3:
        raise ShapeError("y-t extraction", "(nx, ny, nt)", volume.shape)
    if not 0 <= x_index < volume.shape[0]:
        raise IndexError(f"x_index {x_index} out of range for nx={volume.shape[0]}")
    return volume[x_index].copy()
