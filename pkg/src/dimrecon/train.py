"""Mini-batch training of the cascade with the multi-supervised loss.

Randomness is derived per epoch from ``(seed, epoch)``: the sample order,
each sample's sampling mask and its acquisition noise.  A run resumed from a
checkpoint written at an epoch boundary therefore replays exactly the steps
the unbroken run would have taken.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from .cplx import fft2_frames
from .io import load_checkpoint, save_checkpoint
from .losses import LossReport, loss_graph
from .network import ModelConfig, ParameterSet, forward_graph, omega_for
from .optim import AdamState, adam_step
from .phantom import derive_seed, patch_origins, simulate_acquisition
from .sampling import generate_mask

log = logging.getLogger(__name__)

_DTYPES = {"float64": np.float64, "float32": np.float32}


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 4
    lr: float = 1e-4
    decay: float = 0.95
    seed: int = 0
    dtype: str = "float64"
    # crop size (px, py, pt) for training samples; None trains on whole volumes
    patch: tuple | None = None
    patch_stride: tuple = (7, 7, 5)
    accel: float = 4.0
    acs: int = 4
    sigma: float | None = None
    noise_std: float = 0.0
    # draw a new mask per sample and epoch instead of using the stored one
    fresh_masks: bool = True
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.dtype not in _DTYPES:
            raise ValueError(f"dtype must be one of {sorted(_DTYPES)}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patch is not None:
            self.patch = tuple(int(p) for p in self.patch)
        self.patch_stride = tuple(int(s) for s in self.patch_stride)


@dataclass
class FitResult:
    params: ParameterSet
    state: AdamState
    log: list = field(default_factory=list)


def training_samples(records, cfg: TrainConfig) -> list[tuple[int, tuple]]:
    """``(record index, patch origin)`` pairs making up one epoch."""
    out = []
    for i, rec in enumerate(records):
        if cfg.patch is None:
            out.append((i, (0, 0, 0)))
        else:
            out += [(i, o) for o in patch_origins(rec.image.shape, cfg.patch, cfg.patch_stride)]
    return out


def make_batch(records, picks, mask_seeds, cfg: TrainConfig):
    """Assemble ``(k_u, omega, s_ref, k_f)`` arrays for one mini-batch."""
    cdtype = np.result_type(_DTYPES[cfg.dtype], np.complex64)
    images, kus, omegas = [], [], []
    for (i, (x0, y0, t0)), mseed in zip(picks, mask_seeds):
        rec = records[i]
        if cfg.patch is None:
            s = rec.image
        else:
            px, py, pt = cfg.patch
            s = rec.image[x0:x0 + px, y0:y0 + py, t0:t0 + pt]
        if cfg.fresh_masks:
            mask = generate_mask(s.shape[1], s.shape[2], cfg.accel, cfg.acs, int(mseed), cfg.sigma)
            k_u = simulate_acquisition(s, mask, cfg.noise_std, derive_seed(int(mseed), 1))
        else:
            mask = rec.mask
            if cfg.patch is None:
                k_u = rec.kspace
            else:
                if (py, pt) != mask.lines.shape:
                    raise ValueError("stored masks only fit patches spanning the full y and t extent")
                k_u = simulate_acquisition(s, mask, rec.noise_std, rec.noise_seed)
        images.append(s)
        kus.append(k_u)
        omegas.append(mask.unshifted())
    s_ref = np.stack(images).astype(cdtype)
    k_u = np.stack(kus).astype(cdtype)
    k_f = fft2_frames(np.stack(images)).astype(cdtype)
    return k_u, omega_for(np.stack(omegas)), s_ref, k_f


def _first_nonfinite(batch, trace, bound, names):
    """Name of the first non-finite tensor in computation order: data, parameters, stages."""
    k_u, _, s_ref, k_f = batch
    tensors = [("k_u", k_u), ("s_ref", s_ref), ("k_f", k_f)]
    tensors += list(zip(names, [v.value for blk in bound for pair in blk for v in pair]))
    tensors += [(f"fdn{m + 1}.dc_output", v.value) for m, v in enumerate(trace.fdn_dc_outputs)]
    tensors.append(("bridge_image", trace.bridge_image.value))
    tensors += [(f"sdn{n + 1}.output", v.value) for n, v in enumerate(trace.sdn_stage_outputs)]
    for name, value in tensors:
        if not np.all(np.isfinite(value)):
            return name
    return "loss"


def train_step(params: ParameterSet, state: AdamState, batch, config: ModelConfig, dtype=np.float64) -> LossReport:
    """Forward, loss, backward and one Adam update; returns the batch loss report."""
    k_u, omega, s_ref, k_f = batch
    tape = ad.Tape()
    bound = params.bind(tape)
    trace = forward_graph(k_u, omega, bound, config, dtype)
    total, report = loss_graph(trace, s_ref, k_f, config)
    if not np.isfinite(report.tloss):
        name = _first_nonfinite(batch, trace, bound, params.names())
        raise TrainingDiverged(f"non-finite loss at step {state.step + 1}; first non-finite tensor: {name}")
    tape.backward(total)
    grads = [tape.grad(v) for blk in bound for pair in blk for v in pair]
    for name, p in zip(params.names(), params.arrays()):
        if not np.all(np.isfinite(p)):
            raise TrainingDiverged(f"non-finite parameter at step {state.step + 1}: {name}")
    for name, g in zip(params.names(), grads):
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient at step {state.step + 1}: {name}")
    adam_step(state, params, grads)
    return report


def checkpoint_meta(model_cfg: ModelConfig, train_cfg: TrainConfig, state: AdamState, epoch: int) -> dict:
    return {
        "model": _jsonable(asdict(model_cfg)),
        "train": _jsonable(asdict(train_cfg)),
        "epoch": epoch,
        "adam": {k: getattr(state, k) for k in ("lr0", "decay", "beta1", "beta2", "eps", "step")},
    }


def _jsonable(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, float) and np.isinf(v):
            v = "inf"
        elif isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def model_config_from_meta(meta: dict) -> ModelConfig:
    m = dict(meta["model"])
    for key in ("kernel", "loss_alpha", "loss_beta", "dc_lambdas"):
        if m.get(key) is not None:
            m[key] = tuple(m[key])
    return ModelConfig(**m)


def save_training_checkpoint(path, params: ParameterSet, state: AdamState, train_cfg: TrainConfig, epoch: int):
    meta = checkpoint_meta(params.config, train_cfg, state, epoch)
    save_checkpoint(path, meta, params.arrays() + list(state.m) + list(state.v))


def load_training_checkpoint(path) -> tuple[ParameterSet, AdamState, dict]:
    meta, arrays = load_checkpoint(path)
    config = model_config_from_meta(meta)
    n = len(ParameterSet.zeros(config).arrays())
    if len(arrays) not in (n, 3 * n):
        raise ValueError(f"checkpoint holds {len(arrays)} arrays, expected {n} or {3 * n}")
    params = ParameterSet.zeros(config)
    params.set_arrays(arrays[:n])
    params.version = 0
    adam = meta.get("adam", {})
    state = AdamState(**{k: adam[k] for k in ("lr0", "decay", "beta1", "beta2", "eps", "step") if k in adam})
    if len(arrays) == 3 * n:
        state.m = [a.copy() for a in arrays[n:2 * n]]
        state.v = [a.copy() for a in arrays[2 * n:]]
    else:
        state.m = [np.zeros_like(a) for a in params.arrays()]
        state.v = [np.zeros_like(a) for a in params.arrays()]
    state.epoch = meta.get("epoch", 0)
    return params, state, meta


def fit(
    records,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    params: ParameterSet | None = None,
    validate: Callable[[ParameterSet], dict] | None = None,
    log_path=None,
    checkpoint_path=None,
    resume=None,
    on_step: Callable[[dict], None] | None = None,
) -> FitResult:
    """Train on ``records`` (training split :class:`~dimrecon.phantom.DataRecord` list).

    Each step and epoch appends a JSON-serialisable record to the returned
    log (and to ``log_path`` as one JSON object per line).  ``validate`` is
    called after every epoch and its dict merged into the epoch record.
    """
    records = list(records)
    if not records:
        raise ValueError("training needs at least one example")
    dtype = _DTYPES[train_cfg.dtype]

    if resume is not None:
        params, state, meta = load_training_checkpoint(resume)
        if params.config != model_cfg:
            raise ValueError("checkpoint model config differs from the requested one")
        start = meta["epoch"]
    else:
        if params is None:
            params = ParameterSet.he_init(model_cfg, derive_seed(train_cfg.seed, 17))
        state = AdamState.for_arrays(params.arrays(), lr0=train_cfg.lr, decay=train_cfg.decay)
        start = 0

    samples = training_samples(records, train_cfg)
    history: list[dict] = []
    sink = None
    if log_path is not None:
        sink = open(log_path, "a" if resume is not None else "w")

    def emit(rec):
        history.append(rec)
        if sink is not None:
            sink.write(json.dumps(rec) + "\n")
            sink.flush()
        if on_step is not None:
            on_step(rec)

    try:
        for epoch in range(start, train_cfg.epochs):
            state.epoch = epoch
            rng = np.random.Generator(np.random.PCG64(derive_seed(train_cfg.seed, epoch)))
            order = rng.permutation(len(samples))
            mask_seeds = rng.integers(0, 2 ** 62, size=len(samples))
            epoch_losses = []
            for lo in range(0, len(order), train_cfg.batch_size):
                idx = order[lo:lo + train_cfg.batch_size]
                batch = make_batch(records, [samples[i] for i in idx], mask_seeds[idx], train_cfg)
                lr = state.lr
                report = train_step(params, state, batch, model_cfg, dtype)
                epoch_losses.append(report.tloss)
                emit({"kind": "step", "epoch": epoch, "step": state.step, "lr": lr, **report.as_record()})
            summary = {"kind": "epoch", "epoch": epoch, "step": state.step,
                       "mean_tloss": float(np.mean(epoch_losses))}
            if validate is not None:
                summary.update(validate(params))
            emit(summary)
            log.info("epoch %d: mean tloss %.6g", epoch, summary["mean_tloss"])
            if checkpoint_path is not None and train_cfg.checkpoint_every and (epoch + 1) % train_cfg.checkpoint_every == 0:
                save_training_checkpoint(_epoch_path(checkpoint_path, epoch + 1), params, state, train_cfg, epoch + 1)
        state.epoch = max(state.epoch, train_cfg.epochs)
    finally:
        if sink is not None:
            sink.close()
    return FitResult(params, state, history)


def _epoch_path(base, epoch: int) -> Path:
    base = Path(base)
    if "{epoch}" in base.name:
        return base.with_name(base.name.format(epoch=epoch))
    return base


def step_losses(history) -> np.ndarray:
    return np.array([r["tloss"] for r in history if r["kind"] == "step"])


def window_means(losses, window: int = 50) -> np.ndarray:
    """Means of consecutive non-overlapping windows (trailing remainder dropped)."""
    losses = np.asarray(losses)
    n = len(losses) // window
    return losses[: n * window].reshape(n, window).mean(axis=1)
