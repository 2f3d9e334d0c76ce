"""Train, evaluate against the zero-filled baseline, and write run artifacts.

A run directory holds::

    config.txt        resolved configuration (key = value)
    train_log.jsonl   one JSON record per step and per epoch
    model.dimc        final checkpoint
    metrics.csv       per test example plus a final "mean" row
    metrics.json      the same numbers as a structured record
    volumes.npz       magnitude volumes the metrics were computed from
    error_maps/       PGM error maps per example and frame
    yt/               PGM y-t extractions
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .config import ExperimentConfig, format_value, load_config, parse_value
from .io import load_dataset, write_pgm
from .network import ParameterSet, dimension_forward
from .optim import AdamState
from .phantom import build_dataset, derive_seed
from .sampling import zero_filled_recon
from .train import fit, load_training_checkpoint, save_training_checkpoint

log = logging.getLogger(__name__)

COLUMNS = ["example", "mse", "psnr", "ssim", "zf_mse", "zf_psnr", "zf_ssim", "seconds"]
METRIC_COLUMNS = COLUMNS[1:]
ALPHA_SWEEP = tuple(10.0 ** e for e in range(-8, 0))


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        if exc is not None and not isinstance(exc, ExperimentError):
            raise ExperimentError(self.name, exc) from exc
        return False


@dataclass
class MetricsReport:
    rows: list = field(default_factory=list)
    # training log of the run that produced the evaluated parameters
    history: list = field(default_factory=list)

    @property
    def mean(self) -> dict:
        return {c: float(np.mean([r[c] for r in self.rows])) for c in METRIC_COLUMNS}

    def gain(self) -> dict:
        m = self.mean
        return {"psnr": m["psnr"] - m["zf_psnr"], "ssim": m["ssim"] - m["zf_ssim"]}

    def as_record(self) -> dict:
        return {"rows": self.rows, "mean": self.mean}


def evaluate(params: ParameterSet, records, ssim_options: dict | None = None):
    """Metrics of network and zero-filled reconstructions on ``records``.

    Returns the report and the magnitude volumes ``(ref, rec, zf)`` per example.
    """
    opts = ssim_options or {}
    report = MetricsReport()
    volumes = []
    for i, rec in enumerate(records):
        start = time.perf_counter()
        out = dimension_forward(rec.kspace, rec.mask, params).final
        seconds = time.perf_counter() - start
        ref = np.abs(rec.image)
        net = np.abs(out)
        zf = np.abs(zero_filled_recon(rec.kspace))
        report.rows.append(_row(i, ref, net, zf, seconds, opts))
        volumes.append((ref, net, zf))
    return report, volumes


def _row(i, ref, net, zf, seconds, opts) -> dict:
    return {
        "example": i,
        "mse": metrics.mse(ref, net), "psnr": metrics.psnr(ref, net), "ssim": metrics.ssim(ref, net, **opts),
        "zf_mse": metrics.mse(ref, zf), "zf_psnr": metrics.psnr(ref, zf), "zf_ssim": metrics.ssim(ref, zf, **opts),
        "seconds": seconds,
    }


def _fmt(v) -> str:
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return str(v)


def write_report(out_dir, report: MetricsReport, volumes, display_max=0.07, yt_index=None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COLUMNS)
        for r in report.rows:
            w.writerow([_fmt(r[c]) for c in COLUMNS])
        mean = report.mean
        w.writerow(["mean"] + [_fmt(mean[c]) for c in METRIC_COLUMNS])
    (out / "metrics.json").write_text(json.dumps(report.as_record(), indent=1, default=_fmt) + "\n")

    arrays = {}
    for i, (ref, net, zf) in enumerate(volumes):
        arrays[f"ref_{i}"], arrays[f"rec_{i}"], arrays[f"zf_{i}"] = ref, net, zf
    np.savez(out / "volumes.npz", **arrays)

    emaps, yts = out / "error_maps", out / "yt"
    emaps.mkdir(exist_ok=True)
    yts.mkdir(exist_ok=True)
    for i, (ref, net, zf) in enumerate(volumes):
        for name, vol in (("recon", net), ("zf", zf)):
            err = metrics.error_map(ref, vol, display_max)
            for t in range(err.shape[-1]):
                write_pgm(emaps / f"ex{i}_{name}_t{t}.pgm", err[..., t])
        x = ref.shape[0] // 2 if yt_index is None else yt_index
        for name, vol in (("ref", ref), ("recon", net), ("zf", zf)):
            write_pgm(yts / f"ex{i}_{name}.pgm", metrics.to_uint8(metrics.yt_extract(vol, x), vmax=1.0))
        for name, vol in (("recon", net), ("zf", zf)):
            err = metrics.error_map(metrics.yt_extract(ref, x), metrics.yt_extract(vol, x), display_max)
            write_pgm(yts / f"ex{i}_{name}_error.pgm", err)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: (v if k == "example" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]


def verify(run_dir, rtol: float = 1e-12) -> list[str]:
    """Recompute every CSV number from the stored volumes; returns mismatch messages."""
    run = Path(run_dir)
    cfg = load_config(run / "config.txt")
    rows = read_csv(run / "metrics.csv")
    vols = np.load(run / "volumes.npz")
    problems = []
    recomputed = MetricsReport()
    for row in rows[:-1]:
        i = int(row["example"])
        fresh = _row(i, vols[f"ref_{i}"], vols[f"rec_{i}"], vols[f"zf_{i}"], row["seconds"], cfg.ssim_options())
        recomputed.rows.append(fresh)
        problems += _diff(f"example {i}", row, fresh, rtol)
    if rows and rows[-1]["example"] == "mean":
        problems += _diff("mean", rows[-1], recomputed.mean, rtol)
    else:
        problems.append("missing mean row")
    return problems


def _diff(label, stored, fresh, rtol) -> list[str]:
    out = []
    for c in METRIC_COLUMNS:
        a, b = float(stored[c]), float(fresh[c])
        if a == b:
            continue
        if not (math.isfinite(a) and math.isfinite(b)) or abs(a - b) > rtol * max(abs(a), abs(b)):
            out.append(f"{label} {c}: stored {a!r}, recomputed {b!r}")
    return out


def load_or_build_dataset(cfg: ExperimentConfig):
    if cfg.dataset:
        return load_dataset(cfg.dataset)
    return build_dataset(cfg.n_train, cfg.n_test, cfg.phantom_spec(), cfg.accel, cfg.acs, cfg.sigma, cfg.data_seed)


def run_experiment(cfg: ExperimentConfig, dataset=None, resume=None) -> MetricsReport:
    """Dataset, training, evaluation on the test split and all artifacts."""
    out = Path(cfg.out_dir)
    with _Stage("config"):
        cfg.validate()
        model_cfg = cfg.model_config()
        train_cfg = cfg.train_config()
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.to_text())
    with _Stage("data"):
        dataset = dataset if dataset is not None else load_or_build_dataset(cfg)
        if not dataset.test:
            raise ValueError("dataset has no test examples")
    with _Stage("train"):
        if cfg.epochs == 0 or not dataset.train:
            params = ParameterSet.he_init(model_cfg, derive_seed(cfg.seed, 17))
            state = AdamState.for_arrays(params.arrays(), lr0=cfg.lr, decay=cfg.decay)
            history = []
        else:
            ckpt = out / "checkpoint_epoch{epoch}.dimc" if cfg.checkpoint_every else None
            result = fit(dataset.train, model_cfg, train_cfg, log_path=out / "train_log.jsonl",
                         checkpoint_path=ckpt, resume=resume)
            params, state, history = result.params, result.state, result.log
        save_training_checkpoint(out / "model.dimc", params, state, train_cfg, cfg.epochs)
    with _Stage("evaluate"):
        report, volumes = evaluate(params, dataset.test, cfg.ssim_options())
    with _Stage("report"):
        write_report(out, report, volumes, cfg.display_max, cfg.yt_index)
    report.history = history
    log.info("%s: PSNR %.3f dB (zero-filled %.3f), SSIM %.4f (zero-filled %.4f)", cfg.preset,
             report.mean["psnr"], report.mean["zf_psnr"], report.mean["ssim"], report.mean["zf_ssim"])
    return report


def evaluate_checkpoint(cfg: ExperimentConfig, checkpoint) -> MetricsReport:
    with _Stage("load"):
        params, _, _ = load_training_checkpoint(checkpoint)
        dataset = load_or_build_dataset(cfg)
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        (Path(cfg.out_dir) / "config.txt").write_text(cfg.to_text())
    with _Stage("evaluate"):
        report, volumes = evaluate(params, dataset.test, cfg.ssim_options())
    with _Stage("report"):
        write_report(cfg.out_dir, report, volumes, cfg.display_max, cfg.yt_index)
    return report


def _sweep_one(args):
    cfg, key = args
    report = run_experiment(cfg)
    return {key: format_value(getattr(cfg, key)), **report.mean}


def sweep(cfg: ExperimentConfig, key: str = "loss_alpha", values=None, jobs: int = 1) -> list[dict]:
    """One run per value of ``key`` under ``out_dir/<key>=<value>``; writes sweep.csv."""
    values = ALPHA_SWEEP if values is None else values
    runs = []
    for v in values:
        v = parse_value(key, v) if isinstance(v, str) else v
        if key in ("loss_alpha", "loss_beta") and not isinstance(v, tuple):
            v = (float(v),)
        sub = Path(cfg.out_dir) / f"{key}={format_value(v).replace(', ', '_')}"
        runs.append((cfg.replace(**{key: v, "out_dir": str(sub)}), key))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_one, runs))
    else:
        results = [_sweep_one(r) for r in runs]
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    with open(Path(cfg.out_dir) / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([key] + METRIC_COLUMNS)
        for r in results:
            w.writerow([r[key]] + [_fmt(r[c]) for c in METRIC_COLUMNS])
    return results
