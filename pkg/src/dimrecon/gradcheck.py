"""Central finite-difference check of every parameter gradient of the full loss."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .cplx import fft2_frames
from .losses import loss_graph
from .network import ModelConfig, ParameterSet, forward_graph, omega_for
from .phantom import PhantomSpec, derive_seed, generate_phantom, simulate_acquisition
from .sampling import generate_mask

TINY = ModelConfig(m_blocks=1, n_blocks=2, layers_per_block=2, filters=4,
                   loss_alpha=(0.1,), loss_beta=(1e3,))


@dataclass
class ParamCheck:
    name: str
    size: int
    max_rel_err: float
    worst_index: int
    analytic: float
    numeric: float
    failures: int


@dataclass
class GradcheckReport:
    checks: list = field(default_factory=list)
    tol: float = 1e-4
    h: float = 1e-5
    loss: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.failures == 0 for c in self.checks)

    @property
    def n_values(self) -> int:
        return sum(c.size for c in self.checks)

    @property
    def n_failures(self) -> int:
        return sum(c.failures for c in self.checks)

    @property
    def max_rel_err(self) -> float:
        return max((c.max_rel_err for c in self.checks), default=0.0)

    def lines(self) -> list[str]:
        out = [f"{'parameter':<22}{'size':>6}{'max rel err':>14}{'fail':>6}"]
        for c in self.checks:
            out.append(f"{c.name:<22}{c.size:>6}{c.max_rel_err:>14.3e}{c.failures:>6}")
        verdict = "PASS" if self.passed else "FAIL"
        out.append(f"{verdict}: {self.n_failures}/{self.n_values} values above {self.tol:g} (loss {self.loss:.6g})")
        return out


def gradcheck_problem(config: ModelConfig = TINY, shape=(8, 8, 2), seed: int = 0,
                      accel: float = 2.0, acs: int = 2, bias_std: float = 0.1):
    """Parameters and one-example batch for the check.

    Biases are drawn from N(0, ``bias_std``) instead of zero so that no
    pre-activation sits exactly on the ReLU kink, where the loss is not
    differentiable and finite differences are meaningless.
    """
    nx, ny, nt = shape
    params = ParameterSet.he_init(config, derive_seed(seed, 1))
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, 2)))
    if bias_std > 0:
        arrays = [a if a.ndim > 1 else rng.normal(0.0, bias_std, a.shape) for a in params.arrays()]
        params.set_arrays(arrays)
    s = generate_phantom(PhantomSpec(nx, ny, nt, n_objects=3, seed=derive_seed(seed, 3)))
    mask = generate_mask(ny, nt, accel, acs, derive_seed(seed, 4))
    k_u = simulate_acquisition(s, mask)
    batch = (k_u[None], omega_for(mask), s[None], fft2_frames(s)[None])
    return params, batch


def loss_and_grads(params: ParameterSet, batch, config: ModelConfig):
    k_u, omega, s_ref, k_f = batch
    tape = ad.Tape()
    bound = params.bind(tape)
    total, _ = loss_graph(forward_graph(k_u, omega, bound, config), s_ref, k_f, config)
    tape.backward(total)
    return float(total.value), [tape.grad(v) for blk in bound for pair in blk for v in pair]


def loss_value(params: ParameterSet, batch, config: ModelConfig) -> float:
    k_u, omega, s_ref, k_f = batch
    trace = forward_graph(k_u, omega, params.bind(None), config)
    return float(loss_graph(trace, s_ref, k_f, config)[0].value)


def finite_difference_check(config: ModelConfig = TINY, shape=(8, 8, 2), seed: int = 0, h: float = 1e-5,
                            tol: float = 1e-4, floor: float = 1e-8, noise_aware: bool = False,
                            **problem) -> GradcheckReport:
    """Compare autodiff against ``(L(p+h) - L(p-h)) / 2h`` for every scalar parameter.

    Relative error is ``|g - g_fd| / max(|g|, floor)``.  With
    ``noise_aware`` the floor is raised to ``64 ulp(L) / (2h tol)``: an
    absolute gap smaller than the rounding resolution of the difference
    quotient is never counted as an error, however small the gradient.
    """
    params, batch = gradcheck_problem(config, shape, seed, **problem)
    loss, grads = loss_and_grads(params, batch, config)
    if noise_aware:
        floor = max(floor, 64 * math.ulp(loss) / (2 * h * tol))
    report = GradcheckReport(tol=tol, h=h, loss=loss)
    for name, p, g in zip(params.names(), params.arrays(), grads):
        flat = p.reshape(-1)
        num = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            params.touch()
            up = loss_value(params, batch, config)
            flat[i] = orig - h
            params.touch()
            down = loss_value(params, batch, config)
            flat[i] = orig
            num[i] = (up - down) / (2 * h)
        params.touch()
        g = np.asarray(g).reshape(-1)
        rel = np.abs(g - num) / np.maximum(np.abs(g), floor)
        worst = int(np.argmax(rel))
        report.checks.append(ParamCheck(name, flat.size, float(rel[worst]), worst, float(g[worst]),
                                        float(num[worst]), int(np.sum(rel >= tol))))
    return report
