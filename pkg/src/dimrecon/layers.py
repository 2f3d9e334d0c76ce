"""Array-level building blocks of the cascade: convolution, ReLU and data consistency."""
from __future__ import annotations

import math

import numpy as np

from . import kernels
from .cplx import ShapeError, fft2_frames, ifft2_frames
from .sampling import SamplingMask

INFINITE = math.inf


class ConfigError(ValueError):
    pass


def parse_lambda(value) -> float:
    """Accept a positive number or ``"inf"``/``"infinite"`` for hard replacement."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinite", "infinity"):
            return INFINITE
        value = float(value)
    value = float(value)
    if not value > 0:
        raise ConfigError(f"data-consistency lambda must be > 0 or infinite, got {value}")
    return value


def conv3d(x, weight, bias, circular_t=False):
    """Same-padded 3D cross-correlation, channels first.

    ``x`` is ``(Cin, nx, ny, nt)``, ``weight`` is ``(Cout, Cin, kx, ky, kt)``
    and ``bias`` is ``(Cout,)``.
    """
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError("conv3d input", "(C, nx, ny, nt)", x.shape)
    if weight.shape[1] != x.shape[0]:
        raise ShapeError("conv3d channel mismatch", weight.shape[1], x.shape[0])
    taps = weight.transpose(2, 3, 4, 1, 0)
    y = kernels.conv3d_forward(np.moveaxis(x, 0, -1)[None].copy(), taps, bias, circular_t)
    return np.moveaxis(y[0], -1, 0)


def relu(x):
    return np.maximum(x, 0)


def sampling_set(mask) -> np.ndarray:
    """Boolean array broadcastable over ``(..., nx, ny, nt)`` k-space, DC at 0."""
    if isinstance(mask, SamplingMask):
        return mask.unshifted()
    return np.asarray(mask, dtype=bool)


def kdc(k_pred, k_u, mask, lam=INFINITE):
    """Blend predicted k-space with the measurement on the sampled set.

    Sampled entries become ``(k_pred + lam * k_u) / (1 + lam)`` (``k_u``
    exactly when ``lam`` is infinite); the rest keep the prediction.
    """
    lam = parse_lambda(lam)
    omega = sampling_set(mask)
    if np.shape(k_pred) != np.shape(k_u):
        raise ShapeError("kdc operands", np.shape(k_u), np.shape(k_pred))
    if math.isinf(lam):
        corrected = k_u
    else:
        corrected = (k_pred + lam * k_u) / (1.0 + lam)
    return np.where(omega, corrected, k_pred)


def idc(s_pred, k_u, mask, lam=INFINITE):
    return ifft2_frames(kdc(fft2_frames(s_pred), k_u, mask, lam))
