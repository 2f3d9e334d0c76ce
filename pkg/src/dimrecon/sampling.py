"""Retrospective Cartesian undersampling along the phase-encode axis.

Masks are stored in *centered* line order (index ``ny // 2`` is the DC
line), which is how they are drawn and displayed.  The spectral core keeps
DC at index 0, so :func:`apply_mask` shifts the line pattern before use.

Random line selection uses numpy's PCG64 bit generator seeded with the
integer seed, and weighted sampling without replacement by the
Efraimidis-Spirakis key method: each candidate line gets the key
``log(u) / w`` with ``u ~ U(0, 1)`` and the largest keys win.  Uniforms are
drawn frame by frame as one ``(nt, ny)`` block, so the pattern for a seed is
the same on every platform numpy supports.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cplx import ShapeError, ifft2_frames


class MaskError(ValueError):
    pass


def line_budget(ny: int, accel: float) -> int:
    """Sampled lines per frame, ``round(ny / accel)`` with halves rounded up."""
    return int(math.floor(ny / accel + 0.5))


def acs_indices(ny: int, acs: int) -> np.ndarray:
    start = ny // 2 - acs // 2
    return np.arange(start, start + acs)


@dataclass
class SamplingMask:
    """Per-frame phase-encode line pattern, ``lines[ky, t]`` in centered order.

    A true entry means every ``kx`` sample on that line was acquired.
    """

    lines: np.ndarray
    acs: int = 0
    accel: float = 1.0
    sigma: float | None = field(default=None, compare=False)

    def __post_init__(self):
        self.lines = np.asarray(self.lines, dtype=bool)
        if self.lines.ndim != 2:
            raise ShapeError("mask lines", "(ny, nt)", self.lines.shape)

    def __eq__(self, other):
        if not isinstance(other, SamplingMask):
            return NotImplemented
        return (
            self.acs == other.acs
            and self.accel == other.accel
            and np.array_equal(self.lines, other.lines)
        )

    @property
    def ny(self) -> int:
        return self.lines.shape[0]

    @property
    def nt(self) -> int:
        return self.lines.shape[1]

    @classmethod
    def full(cls, ny: int, nt: int) -> "SamplingMask":
        return cls(np.ones((ny, nt), dtype=bool), acs=ny, accel=1.0)

    def unshifted(self) -> np.ndarray:
        """Line pattern with DC at index 0, matching :func:`fft2_frames` output."""
        return np.fft.ifftshift(self.lines, axes=0)

    def kspace_mask(self, nx: int) -> np.ndarray:
        """Boolean ``(nx, ny, nt)`` sampling set with DC at ``(0, 0)``."""
        return np.broadcast_to(self.unshifted()[None], (nx, self.ny, self.nt))

    def check(self) -> None:
        """Raise :class:`MaskError` if the ACS or line-count invariants fail."""
        budget = line_budget(self.ny, self.accel)
        counts = self.lines.sum(axis=0)
        if np.any(counts != budget):
            raise MaskError(f"per-frame line counts {sorted(set(counts.tolist()))} != {budget}")
        if self.acs and not self.lines[acs_indices(self.ny, self.acs)].all():
            raise MaskError("ACS lines missing in at least one frame")

    def to_pgm_array(self) -> np.ndarray:
        """8-bit ``(ny, nt)`` image, white where sampled."""
        return np.where(self.lines, 255, 0).astype(np.uint8)


def gaussian_line_weights(ny: int, sigma: float) -> np.ndarray:
    offset = np.arange(ny) - ny // 2
    return np.exp(-0.5 * (offset / sigma) ** 2)


def generate_mask(
    ny: int,
    nt: int,
    accel: float,
    acs: int,
    seed: int,
    sigma: float | None = None,
) -> SamplingMask:
    """Draw a variable-density Cartesian mask.

    Each frame keeps the ``acs`` central lines and fills the rest of its
    ``round(ny / accel)`` line budget by weighted sampling without
    replacement, weights following a zero-mean Gaussian in the centered line
    offset with standard deviation ``sigma`` (default ``ny / 6``).
    """
    if accel < 1:
        raise MaskError(f"acceleration must be >= 1, got {accel}")
    budget = line_budget(ny, accel)
    if acs > budget:
        raise MaskError(f"ACS exceeds line budget ({acs} > {budget})")
    if budget > ny:
        raise MaskError(f"line budget {budget} exceeds ny={ny}")
    if sigma is None:
        sigma = ny / 6.0

    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random((nt, ny))

    weights = gaussian_line_weights(ny, sigma)
    centre = acs_indices(ny, acs)
    candidates = np.setdiff1d(np.arange(ny), centre)
    n_extra = budget - acs

    lines = np.zeros((ny, nt), dtype=bool)
    lines[centre, :] = True
    if n_extra > 0:
        with np.errstate(divide="ignore"):
            keys = np.log(u[:, candidates]) / weights[candidates]
        # stable sort keeps ties deterministic
        order = np.argsort(-keys, axis=1, kind="stable")[:, :n_extra]
        for t in range(nt):
            lines[candidates[order[t]], t] = True
    return SamplingMask(lines, acs=acs, accel=float(accel), sigma=sigma)


def _check_dims(k: np.ndarray, m: SamplingMask) -> None:
    if k.ndim < 3 or k.shape[-2:] != m.lines.shape:
        raise ShapeError("k-space (ny, nt) vs mask", m.lines.shape, k.shape[-2:] if k.ndim >= 2 else k.shape)


def apply_mask(k: np.ndarray, m: SamplingMask) -> np.ndarray:
    """Zero every k-space sample whose phase-encode line was not acquired."""
    k = np.asarray(k)
    _check_dims(k, m)
    return np.where(m.unshifted(), k, 0).astype(k.dtype, copy=False)


def zero_filled_recon(k_u: np.ndarray) -> np.ndarray:
    return ifft2_frames(k_u)
