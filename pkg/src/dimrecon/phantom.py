"""Synthetic cardiac-like dynamic phantoms and retrospective acquisition.

A phantom is a sum of soft-edged ellipses.  The first ellipse is a large,
slowly breathing "body"; the others contract and translate periodically like
heart chambers.  The magnitude is normalised to a maximum of 1 and multiplied
by a smooth random phase map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cplx import fft2_frames
from .sampling import SamplingMask, apply_mask, generate_mask


def derive_seed(*keys: int) -> int:
    """Stable 63-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class PhantomSpec:
    nx: int = 64
    ny: int = 64
    nt: int = 6
    n_objects: int = 5
    motion_amplitude: float = 2.0
    period: float = 6.0
    contrast: tuple = (0.3, 1.0)
    phase_smoothness: int = 2
    phase_amplitude: float = math.pi / 2
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.nx, self.ny, self.nt) < 1:
            raise ValueError("phantom dims must be >= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.period <= 0:
            raise ValueError("period must be > 0")


def _smooth_phase(rng, nx, ny, order, amplitude):
    x = np.arange(nx)[:, None] / nx
    y = np.arange(ny)[None, :] / ny
    phase = np.zeros((nx, ny))
    for fx in range(order + 1):
        for fy in range(order + 1):
            c = rng.normal() / (1.0 + fx * fx + fy * fy)
            theta = rng.uniform(0, 2 * np.pi)
            phase += c * np.cos(2 * np.pi * (fx * x + fy * y) + theta)
    peak = np.abs(phase).max()
    return amplitude * phase / peak if peak > 0 else phase


def generate_phantom(spec: PhantomSpec) -> np.ndarray:
    """Complex ``(nx, ny, nt)`` phantom, deterministic in ``spec``."""
    nx, ny, nt = spec.nx, spec.ny, spec.nt
    if spec.n_objects == 0:
        return np.zeros((nx, ny, nt), dtype=np.complex128)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    gx, gy = np.meshgrid(np.arange(nx) - nx / 2 + 0.5, np.arange(ny) - ny / 2 + 0.5, indexing="ij")
    edge = 0.6  # soft-edge width in pixels
    lo, hi = spec.contrast
    t = np.arange(nt)
    cycle = 2 * np.pi * t / spec.period

    objects = []
    for i in range(spec.n_objects):
        if i == 0:
            a, b = rng.uniform(0.36, 0.44) * nx, rng.uniform(0.36, 0.44) * ny
            cx, cy = rng.uniform(-0.03, 0.03) * nx, rng.uniform(-0.03, 0.03) * ny
            squeeze = 0.02
            shift = 0.25 * spec.motion_amplitude
            level = lo
        else:
            a, b = rng.uniform(0.07, 0.16) * nx, rng.uniform(0.07, 0.16) * ny
            cx, cy = rng.uniform(-0.18, 0.18) * nx, rng.uniform(-0.18, 0.18) * ny
            squeeze = rng.uniform(0.1, 0.3)
            shift = spec.motion_amplitude
            level = rng.uniform(lo, hi)
        objects.append(dict(
            a=a, b=b, cx=cx, cy=cy, rot=rng.uniform(0, np.pi), squeeze=squeeze, shift=shift,
            direction=rng.uniform(0, 2 * np.pi), lag=rng.uniform(0, 2 * np.pi), level=level,
        ))

    mag = np.zeros((nx, ny, nt))
    for k in range(nt):
        frame = np.zeros((nx, ny))
        for ob in objects:
            scale = 1.0 - ob["squeeze"] * 0.5 * (1.0 - np.cos(cycle[k] + ob["lag"]))
            d = ob["shift"] * np.sin(cycle[k] + ob["lag"])
            cx = ob["cx"] + d * np.cos(ob["direction"])
            cy = ob["cy"] + d * np.sin(ob["direction"])
            c, s = np.cos(ob["rot"]), np.sin(ob["rot"])
            u = (gx - cx) * c + (gy - cy) * s
            v = -(gx - cx) * s + (gy - cy) * c
            a, b = ob["a"] * scale, ob["b"] * scale
            r = np.sqrt((u / a) ** 2 + (v / b) ** 2)
            # signed distance to the boundary, roughly in pixels
            dist = (1.0 - r) * min(a, b)
            frame += ob["level"] / (1.0 + np.exp(-dist / edge))
        mag[:, :, k] = frame
    mag /= mag.max()

    phase = _smooth_phase(rng, nx, ny, spec.phase_smoothness, spec.phase_amplitude)
    return mag * np.exp(1j * phase)[:, :, None]


def complex_noise(shape, std: float, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    return std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate_acquisition(s: np.ndarray, mask: SamplingMask, noise_std: float = 0.0, seed: int = 0) -> np.ndarray:
    """Fully sampled spectrum plus complex Gaussian noise, then masked.

    Noise is drawn for every sample and zeroed with the rest of the unsampled
    positions, so it only survives where lines were acquired.
    """
    k = fft2_frames(s)
    if noise_std > 0:
        k = k + complex_noise(k.shape, noise_std, seed)
    return apply_mask(k, mask)


def patch_origins(shape, patch, stride) -> list[tuple[int, int, int]]:
    for dim, p in zip(shape, patch):
        if p > dim:
            raise ValueError(f"patch {tuple(patch)} larger than volume {tuple(shape)}")
        if p < 1:
            raise ValueError("patch extents must be >= 1")
    if any(s < 1 for s in stride):
        raise ValueError("stride must be >= 1")
    axes = [range(0, dim - p + 1, s) for dim, p, s in zip(shape, patch, stride)]
    return [(i, j, k) for i in axes[0] for j in axes[1] for k in axes[2]]


def shear_patches(s: np.ndarray, patch, stride) -> list[np.ndarray]:
    """Axis-aligned crops of ``s`` on the stride lattice, x-major order."""
    px, py, pt = patch
    return [s[i:i + px, j:j + py, k:k + pt].copy() for i, j, k in patch_origins(s.shape, patch, stride)]


@dataclass
class DataRecord:
    image: np.ndarray
    kspace: np.ndarray
    mask: SamplingMask
    split: str = "train"
    noise_std: float = 0.0
    noise_seed: int = 0

    def expected_kspace(self) -> np.ndarray:
        return simulate_acquisition(self.image, self.mask, self.noise_std, self.noise_seed)

    def is_consistent(self) -> bool:
        return np.array_equal(self.kspace, self.expected_kspace())


@dataclass
class Dataset:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def split(self, name: str) -> list:
        return [r for r in self.records if r.split == name]

    @property
    def train(self) -> list:
        return self.split("train")

    @property
    def test(self) -> list:
        return self.split("test")

    def __eq__(self, other):
        if not isinstance(other, Dataset) or len(self) != len(other):
            return False
        return all(
            a.split == b.split and a.noise_std == b.noise_std and a.noise_seed == b.noise_seed
            and a.mask == b.mask and np.array_equal(a.image, b.image) and np.array_equal(a.kspace, b.kspace)
            for a, b in zip(self.records, other.records)
        )


def build_dataset(
    n_train: int,
    n_test: int,
    spec: PhantomSpec,
    accel: float = 4.0,
    acs: int = 4,
    sigma: float | None = None,
    seed: int = 0,
) -> Dataset:
    """Generate phantoms and their undersampled acquisitions.

    Example ``i`` uses phantom seed, mask seed and noise seed all derived from
    ``(seed, i)``; training examples come first.
    """
    records = []
    for i in range(n_train + n_test):
        pspec = replace(spec, seed=derive_seed(seed, i, 0))
        image = generate_phantom(pspec)
        mask = generate_mask(spec.ny, spec.nt, accel, acs, derive_seed(seed, i, 1), sigma)
        noise_seed = derive_seed(seed, i, 2)
        k_u = simulate_acquisition(image, mask, spec.noise_std, noise_seed)
        records.append(DataRecord(image, k_u, mask, "train" if i < n_train else "test",
                                  spec.noise_std, noise_seed))
    return Dataset(records)
