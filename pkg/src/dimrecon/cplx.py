"""Complex dynamic volumes and their per-frame spectral transforms.

A dynamic volume is a complex ``ndarray`` of shape ``(nx, ny, nt)``; a
leading batch axis ``(B, nx, ny, nt)`` is accepted by every function here.
The 2D transforms act on the ``(x, y)`` axes of each frame, use orthonormal
scaling, and keep the DC bin at index ``(0, 0)``.
"""
from __future__ import annotations

import numpy as np

SPATIAL_AXES = (-3, -2)


class ShapeError(ValueError):
    """Raised when an array does not have the layout an operation expects."""

    def __init__(self, what: str, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(f"{what}: expected {expected}, got {got}")


def as_volume(v, dtype=np.complex128) -> np.ndarray:
    """Validate and convert ``v`` to a complex volume of at least 3 dims."""
    arr = np.asarray(v, dtype=dtype)
    if arr.ndim < 3:
        raise ShapeError("volume dims", "(..., nx, ny, nt)", arr.shape)
    if min(arr.shape[-3:]) < 1:
        raise ShapeError("volume extent", "nx, ny, nt >= 1", arr.shape)
    return arr


def fft2_frames(v: np.ndarray) -> np.ndarray:
    """Unitary 2D DFT over ``(x, y)`` of every frame."""
    return np.fft.fft2(v, axes=SPATIAL_AXES, norm="ortho")


def ifft2_frames(v: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2_frames`."""
    return np.fft.ifft2(v, axes=SPATIAL_AXES, norm="ortho")


def pack_channels(v: np.ndarray) -> np.ndarray:
    """Split a complex volume into a real array with a leading channel axis.

    ``(..., nx, ny, nt)`` complex becomes ``(..., 2, nx, ny, nt)`` real with
    channel 0 holding the real part and channel 1 the imaginary part.
    """
    v = np.asarray(v)
    return np.stack([v.real, v.imag], axis=-4)


def unpack_channels(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`pack_channels`."""
    x = np.asarray(x)
    if x.ndim < 4 or x.shape[-4] != 2:
        got = x.shape[-4] if x.ndim >= 4 else x.shape
        raise ShapeError("channel dim must be 2", 2, got)
    return x[..., 0, :, :, :] + 1j * x[..., 1, :, :, :]


def magnitude(v: np.ndarray) -> np.ndarray:
    return np.abs(v)


def to_channels_last(v: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Complex ``(..., nx, ny, nt)`` to real ``(..., nx, ny, nt, 2)``.

    This is the layout the convolution kernels consume.
    """
    out = np.empty(v.shape + (2,), dtype=dtype)
    out[..., 0] = v.real
    out[..., 1] = v.imag
    return out


def from_channels_last(x: np.ndarray) -> np.ndarray:
    if x.shape[-1] != 2:
        raise ShapeError("channel dim must be 2", 2, x.shape[-1])
    return x[..., 0] + 1j * x[..., 1]
