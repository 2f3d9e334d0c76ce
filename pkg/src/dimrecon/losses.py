"""Multi-supervised training objective.

All squared errors are literal sums over the two-channel real view, which
equals the sum of complex squared moduli.  For a mini-batch each term is the
mean over examples of the per-example sum.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .cplx import ShapeError
from .network import ForwardTrace, ModelConfig


@dataclass
class LossReport:
    ploss: float
    kloss_terms: list = field(default_factory=list)
    sloss_terms: list = field(default_factory=list)
    tloss: float = 0.0
    alpha: tuple = ()
    beta: tuple = ()

    def recomputed_total(self) -> float:
        return (
            self.ploss
            + sum(a * k for a, k in zip(self.alpha, self.kloss_terms))
            + sum(b * s for b, s in zip(self.beta, self.sloss_terms))
        )

    def decomposition_error(self) -> float:
        """Relative gap between ``tloss`` and its recomputed weighted sum."""
        return abs(self.tloss - self.recomputed_total()) / max(abs(self.tloss), 1e-12)

    def as_record(self) -> dict:
        return {
            "ploss": self.ploss,
            "kloss": list(self.kloss_terms),
            "sloss": list(self.sloss_terms),
            "tloss": self.tloss,
        }


def mse(a, b) -> float:
    """Sum of squared differences; complex inputs count real and imaginary parts."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError("mse operands", a.shape, b.shape)
    return float(ad.sum_sq_diff(ad.Var(a), b).value)


def _check_weights(weights, n, what):
    if len(weights) != n:
        raise ShapeError(f"{what} weights", n, len(weights))


def kspace_loss(trace: ForwardTrace, k_f, alpha) -> float:
    _check_weights(alpha, len(trace.fdn_dc_outputs), "k-space loss")
    return float(sum(a * mse(k_f, k) for a, k in zip(alpha, trace.fdn_dc_outputs)))


def spatial_loss(trace: ForwardTrace, s_ref, beta) -> float:
    """Weighted errors of the intermediate image stages; the final stage is excluded."""
    _check_weights(beta, len(trace.sdn_stage_outputs) - 1, "spatial loss")
    return float(sum(b * mse(s_ref, s) for b, s in zip(beta, trace.sdn_stage_outputs[:-1])))


def loss_graph(trace: ForwardTrace, s_ref, k_f, config: ModelConfig):
    """Build the total loss on the tape of ``trace``; returns ``(tloss_var, report)``.

    Trace entries are batched ``(B, nx, ny, nt)`` Vars.
    """
    _check_weights(config.loss_alpha, len(trace.fdn_dc_outputs), "k-space loss")
    _check_weights(config.loss_beta, len(trace.sdn_stage_outputs) - 1, "spatial loss")
    batch = np.shape(trace.final.value if isinstance(trace.final, ad.Var) else trace.final)[0]
    scale = 1.0 / batch
    p = ad.sum_sq_diff(trace.final, s_ref, scale)
    ks = [ad.sum_sq_diff(k, k_f, scale) for k in trace.fdn_dc_outputs]
    ss = [ad.sum_sq_diff(s, s_ref, scale) for s in trace.sdn_stage_outputs[:-1]]
    total = ad.weighted_sum([p, *ks, *ss], [1.0, *config.loss_alpha, *config.loss_beta])
    report = LossReport(
        ploss=float(p.value),
        kloss_terms=[float(k.value) for k in ks],
        sloss_terms=[float(s.value) for s in ss],
        tloss=float(total.value),
        alpha=config.loss_alpha,
        beta=config.loss_beta,
    )
    return total, report


def total_loss(trace: ForwardTrace, s_ref, k_f, config: ModelConfig) -> LossReport:
    """Loss report for a single-volume trace as returned by ``dimension_forward``."""
    batched = ForwardTrace(
        [np.asarray(k)[None] for k in trace.fdn_dc_outputs],
        None,
        [np.asarray(s)[None] for s in trace.sdn_stage_outputs],
    )
    return loss_graph(batched, np.asarray(s_ref)[None], np.asarray(k_f)[None], config)[1]
