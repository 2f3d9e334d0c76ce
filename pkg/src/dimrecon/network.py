"""The cross-domain cascade: k-space blocks, the inverse-FFT bridge, image blocks.

Every block is ``L`` same-padded 3D convolutions on the two-channel
(real, imaginary) view, ReLU after all but the last.  A k-space block ends in
a k-space data-consistency layer; an image block adds its input back
(residual) and then applies image-domain data consistency.  With ``M = 0``
the bridge consumes the measured k-space directly, which gives the plain
image-domain cascade used as the D5C5 baseline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .layers import INFINITE, ConfigError, parse_lambda, sampling_set


@dataclass(frozen=True)
class ModelConfig:
    m_blocks: int = 1
    n_blocks: int = 4
    layers_per_block: int = 5
    filters: int = 64
    kernel: tuple = (3, 3, 3)
    dc_lambda: float = INFINITE
    loss_alpha: tuple = (0.0,)
    loss_beta: tuple = (0.0, 0.0, 0.0)
    circular_t: bool = False
    # per-DC-layer override, k-space blocks first then image blocks
    dc_lambdas: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        object.__setattr__(self, "loss_alpha", tuple(float(a) for a in self.loss_alpha))
        object.__setattr__(self, "loss_beta", tuple(float(b) for b in self.loss_beta))
        object.__setattr__(self, "dc_lambda", parse_lambda(self.dc_lambda))
        if self.dc_lambdas is not None:
            object.__setattr__(self, "dc_lambdas", tuple(parse_lambda(v) for v in self.dc_lambdas))
        self.validate()

    def validate(self) -> None:
        if self.m_blocks < 0:
            raise ConfigError(f"m_blocks must be >= 0, got {self.m_blocks}")
        if self.n_blocks < 1:
            raise ConfigError(f"n_blocks must be >= 1, got {self.n_blocks}")
        if self.layers_per_block < 2:
            raise ConfigError(f"layers_per_block must be >= 2, got {self.layers_per_block}")
        if self.filters < 1:
            raise ConfigError(f"filters must be >= 1, got {self.filters}")
        if len(self.kernel) != 3 or any(k < 1 or k % 2 == 0 for k in self.kernel):
            raise ConfigError(f"kernel extents must be three odd numbers, got {self.kernel}")
        if len(self.loss_alpha) != self.m_blocks:
            raise ConfigError(f"need {self.m_blocks} k-space loss weights, got {len(self.loss_alpha)}")
        if len(self.loss_beta) != self.n_blocks - 1:
            raise ConfigError(f"need {self.n_blocks - 1} spatial loss weights, got {len(self.loss_beta)}")
        if any(w < 0 for w in self.loss_alpha + self.loss_beta):
            raise ConfigError("loss weights must be non-negative")
        if self.dc_lambdas is not None and len(self.dc_lambdas) != self.m_blocks + self.n_blocks:
            raise ConfigError("dc_lambdas needs one value per block")

    @property
    def conv_layers(self) -> int:
        return (self.m_blocks + self.n_blocks) * self.layers_per_block

    def block_lambda(self, index: int) -> float:
        """DC weight of block ``index`` (k-space blocks first)."""
        if self.dc_lambdas is not None:
            return self.dc_lambdas[index]
        return self.dc_lambda

    def layer_channels(self) -> list[tuple[int, int]]:
        widths = [2] + [self.filters] * (self.layers_per_block - 1) + [2]
        return list(zip(widths[:-1], widths[1:]))

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


class ParameterSet:
    """Convolution weights ``(Cout, Cin, kx, ky, kt)`` and biases for every block.

    ``blocks[i][l]`` is the ``(weight, bias)`` pair of layer ``l`` of block
    ``i``; k-space blocks come first.  ``version`` increases on every
    in-place update so recorded tapes can detect that they are stale.
    """

    def __init__(self, config: ModelConfig, blocks):
        self.config = config
        self.blocks = [[(np.asarray(w, dtype=np.float64), np.asarray(b, dtype=np.float64)) for w, b in blk]
                       for blk in blocks]
        self.version = 0
        self._check()

    def _check(self):
        cfg = self.config
        if len(self.blocks) != cfg.m_blocks + cfg.n_blocks:
            raise ConfigError(f"expected {cfg.m_blocks + cfg.n_blocks} blocks, got {len(self.blocks)}")
        for i, blk in enumerate(self.blocks):
            if len(blk) != cfg.layers_per_block:
                raise ConfigError(f"block {i}: expected {cfg.layers_per_block} layers, got {len(blk)}")
            for (cin, cout), (w, b) in zip(cfg.layer_channels(), blk):
                if w.shape != (cout, cin) + cfg.kernel or b.shape != (cout,):
                    raise ConfigError(f"block {i}: weight {w.shape} / bias {b.shape} do not match config")

    @classmethod
    def he_init(cls, config: ModelConfig, seed: int = 0) -> "ParameterSet":
        rng = np.random.Generator(np.random.PCG64(seed))
        taps = int(np.prod(config.kernel))
        blocks = []
        for _ in range(config.m_blocks + config.n_blocks):
            layers = []
            for cin, cout in config.layer_channels():
                std = math.sqrt(2.0 / (cin * taps))
                layers.append((rng.normal(0.0, std, (cout, cin) + config.kernel), np.zeros(cout)))
            blocks.append(layers)
        return cls(config, blocks)

    @classmethod
    def zeros(cls, config: ModelConfig) -> "ParameterSet":
        blocks = [
            [(np.zeros((cout, cin) + config.kernel), np.zeros(cout)) for cin, cout in config.layer_channels()]
            for _ in range(config.m_blocks + config.n_blocks)
        ]
        return cls(config, blocks)

    def names(self) -> list[str]:
        out = []
        for i in range(len(self.blocks)):
            prefix = f"fdn{i + 1}" if i < self.config.m_blocks else f"sdn{i - self.config.m_blocks + 1}"
            for l in range(self.config.layers_per_block):
                out += [f"{prefix}.conv{l + 1}.weight", f"{prefix}.conv{l + 1}.bias"]
        return out

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in declaration order (weight then bias per layer)."""
        return [a for blk in self.blocks for pair in blk for a in pair]

    def set_arrays(self, arrays) -> None:
        arrays = list(arrays)
        it = iter(arrays)
        self.blocks = [[(next(it), next(it)) for _ in blk] for blk in self.blocks]
        self._check()
        self.touch()

    def touch(self) -> None:
        self.version += 1

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.config, [[(w.copy(), b.copy()) for w, b in blk] for blk in self.blocks])

    def count(self) -> int:
        return sum(a.size for a in self.arrays())

    def bind(self, tape: ad.Tape | None):
        """Wrap every array as a tape leaf (or as constants without a tape)."""
        if tape is None:
            return [[(ad.Var(w), ad.Var(b)) for w, b in blk] for blk in self.blocks]
        tape.watch(self)
        return [[(tape.variable(w), tape.variable(b)) for w, b in blk] for blk in self.blocks]

    def __eq__(self, other):
        if not isinstance(other, ParameterSet):
            return NotImplemented
        return self.config == other.config and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )


@dataclass
class ForwardTrace:
    fdn_dc_outputs: list = field(default_factory=list)
    bridge_image: object = None
    sdn_stage_outputs: list = field(default_factory=list)

    @property
    def final(self):
        return self.sdn_stage_outputs[-1]

    def values(self) -> "ForwardTrace":
        """Unwrap :class:`~dimrecon.autodiff.Var` entries to arrays."""
        val = lambda v: v.value if isinstance(v, ad.Var) else v
        return ForwardTrace(
            [val(k) for k in self.fdn_dc_outputs],
            val(self.bridge_image),
            [val(s) for s in self.sdn_stage_outputs],
        )


# --- graph builders ----------------------------------------------------------


def _conv_stack(x, layers, circular_t):
    for l, (w, b) in enumerate(layers):
        x = ad.conv3d(x, w, b, circular_t)
        if l < len(layers) - 1:
            x = ad.relu(x)
    return x


def _fdn_block(k_in, k_u, omega, layers, lam, circular_t):
    return ad.kdc(ad.unpack(_conv_stack(ad.pack(k_in), layers, circular_t)), k_u, omega, lam)


def _sdn_block(s_in, k_u, omega, layers, lam, circular_t, probe=None):
    delta = ad.unpack(_conv_stack(ad.pack(s_in), layers, circular_t))
    summed = ad.add(s_in, delta)
    if probe is not None:
        probe.append(summed.value)
    return ad.idc(summed, k_u, omega, lam)


def forward_graph(k_u, omega, bound, config: ModelConfig, dtype=np.float64) -> ForwardTrace:
    """Run the cascade on a batch ``(B, nx, ny, nt)``; returns a trace of Vars.

    ``bound`` comes from :meth:`ParameterSet.bind`; ``omega`` is the sampling
    set broadcastable to the k-space with DC at index 0.
    """
    cdtype = np.result_type(dtype, np.complex64)
    k_u = np.asarray(k_u, dtype=cdtype)
    trace = ForwardTrace()
    k = ad.constant(k_u)
    for m in range(config.m_blocks):
        k = _fdn_block(k, k_u, omega, bound[m], config.block_lambda(m), config.circular_t)
        trace.fdn_dc_outputs.append(k)
    s = ad.ifft(k)
    trace.bridge_image = s
    for n in range(config.n_blocks):
        i = config.m_blocks + n
        s = _sdn_block(s, k_u, omega, bound[i], config.block_lambda(i), config.circular_t)
        trace.sdn_stage_outputs.append(s)
    return trace


def omega_for(mask):
    """Sampling set shaped to broadcast over ``(B, nx, ny, nt)``.

    Accepts a :class:`SamplingMask`, an unshifted ``(ny, nt)`` line array, or
    a per-example stack ``(B, ny, nt)``.
    """
    omega = sampling_set(mask)
    if omega.ndim == 2:
        return omega[None, None]
    if omega.ndim == 3:
        return omega[:, None]
    return omega


def _as_batch(v):
    v = np.asarray(v)
    if v.ndim == 3:
        return v[None], True
    return v, False


def _strip(trace: ForwardTrace, single: bool) -> ForwardTrace:
    if not single:
        return trace
    return ForwardTrace([k[0] for k in trace.fdn_dc_outputs], trace.bridge_image[0],
                        [s[0] for s in trace.sdn_stage_outputs])


def _const_layers(layers):
    return [(ad.Var(np.asarray(w, float)), ad.Var(np.asarray(b, float))) for w, b in layers]


def fdn_block(k_in, k_u, mask, layers, config: ModelConfig, lam=None):
    """One k-space block on a single volume or batch; ``layers`` is a list of (W, b)."""
    k_in, single = _as_batch(k_in)
    k_u, _ = _as_batch(k_u)
    lam = config.dc_lambda if lam is None else lam
    out = _fdn_block(ad.Var(k_in.astype(complex)), k_u.astype(complex), omega_for(mask),
                     _const_layers(layers), lam, config.circular_t).value
    return out[0] if single else out


def sdn_block(s_in, k_u, mask, layers, config: ModelConfig, lam=None, probe=None):
    """One image block; ``probe`` (a list) receives the pre-DC residual sum."""
    s_in, single = _as_batch(s_in)
    k_u, _ = _as_batch(k_u)
    lam = config.dc_lambda if lam is None else lam
    out = _sdn_block(ad.Var(s_in.astype(complex)), k_u.astype(complex), omega_for(mask),
                     _const_layers(layers), lam, config.circular_t, probe).value
    if probe is not None and single:
        probe[-1] = probe[-1][0]
    return out[0] if single else out


def dimension_forward(k_u, mask, params: ParameterSet, config: ModelConfig | None = None) -> ForwardTrace:
    """Evaluate the full cascade without recording gradients."""
    config = config or params.config
    k_u, single = _as_batch(k_u)
    trace = forward_graph(k_u, omega_for(mask), params.bind(None), config)
    return _strip(trace.values(), single)
