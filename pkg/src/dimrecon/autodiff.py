"""Reverse-mode differentiation for the fixed operator set of the cascade.

Operations on :class:`Var` objects are appended to a :class:`Tape` in
execution order, which is a topological order of the graph; ``backward``
walks the tape in exact reverse and accumulates gradients additively over
fan-out.  A ``Var`` created without a tape is a constant and nothing is
recorded for expressions built only from constants.

Complex values carry their gradient as ``dL/dRe + 1j * dL/dIm``.  With that
convention a complex-linear map ``A`` pulls gradients back through ``A^H``,
so the orthonormal FFT and inverse FFT are each other's backward.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .cplx import fft2_frames, ifft2_frames
from .layers import parse_lambda


class StaleTapeError(RuntimeError):
    """Raised when a tape is replayed after the parameters it saw were updated."""


class Var:
    __slots__ = ("value", "tape", "index", "name")

    def __init__(self, value, tape=None, index=-1, name=None):
        self.value = value
        self.tape = tape
        self.index = index
        self.name = name

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        tag = self.name or ("const" if self.tape is None else f"#{self.index}")
        return f"Var({tag}, shape={self.shape})"


def constant(value) -> Var:
    return value if isinstance(value, Var) else Var(value)


class Tape:
    def __init__(self):
        self._parents: list[tuple[Var, ...]] = []
        self._vjps: list[Callable | None] = []
        self._watched = []
        self._grads = None

    def __len__(self):
        return len(self._parents)

    def variable(self, value, name=None) -> Var:
        """Register a differentiable leaf."""
        return self._push(value, (), None, name)

    def watch(self, params) -> None:
        """Remember the version of a parameter container read by this tape."""
        self._watched.append((params, params.version))

    def _push(self, value, parents, vjp, name=None) -> Var:
        if self._grads is not None:
            raise RuntimeError("cannot record on a tape after backward")
        self._parents.append(tuple(parents))
        self._vjps.append(vjp)
        return Var(value, self, len(self._parents) - 1, name)

    def backward(self, out: Var, seed=1.0) -> None:
        """Accumulate gradients of ``out``; read leaves with :meth:`grad`.

        A tape is single use: the recorded graph is released afterwards so the
        activations it holds are freed without waiting for the cycle collector.
        """
        for params, version in self._watched:
            if params.version != version:
                raise StaleTapeError(
                    f"parameters changed since this tape was recorded (version {version} -> {params.version})"
                )
        if out.tape is not self:
            raise ValueError("output was not recorded on this tape")
        if self._grads is not None:
            raise RuntimeError("backward already ran on this tape")
        grads: list = [None] * len(self._parents)
        grads[out.index] = np.asarray(seed, dtype=np.result_type(out.value, float)) * np.ones_like(out.value)
        leaves = {}
        for i in range(out.index, -1, -1):
            g = grads[i]
            vjp = self._vjps[i]
            if g is None:
                continue
            if vjp is None:
                leaves[i] = g
                continue
            grads[i] = None
            for parent, pg in zip(self._parents[i], vjp(g)):
                if pg is None or parent.tape is not self:
                    continue
                j = parent.index
                grads[j] = pg if grads[j] is None else grads[j] + pg
        self._grads = leaves
        self._parents = []
        self._vjps = []

    def grad(self, var: Var):
        if self._grads is None:
            raise RuntimeError("call backward first")
        g = self._grads.get(var.index)
        return np.zeros_like(var.value) if g is None else g


def _record(value, parents: Sequence[Var], vjp) -> Var:
    tape = next((p.tape for p in parents if p.tape is not None), None)
    if tape is None:
        return Var(value)
    return tape._push(value, parents, vjp)


# --- operators -------------------------------------------------------------


def add(a: Var, b: Var) -> Var:
    a, b = constant(a), constant(b)
    return _record(a.value + b.value, (a, b), lambda g: (g, g))


def pack(z: Var) -> Var:
    """Complex ``(..., nx, ny, nt)`` to real channels-last ``(..., 2)``."""
    z = constant(z)
    v = z.value
    real_dtype = np.finfo(v.dtype).dtype if np.iscomplexobj(v) else v.dtype
    out = np.empty(v.shape + (2,), dtype=real_dtype)
    out[..., 0] = v.real
    out[..., 1] = v.imag
    return _record(out, (z,), lambda g: (g[..., 0] + 1j * g[..., 1],))


def unpack(x: Var) -> Var:
    x = constant(x)
    v = x.value

    def vjp(g):
        out = np.empty(g.shape + (2,), dtype=v.dtype)
        out[..., 0] = g.real
        out[..., 1] = g.imag
        return (out,)

    return _record(v[..., 0] + 1j * v[..., 1], (x,), vjp)


def fft(z: Var) -> Var:
    z = constant(z)
    return _record(fft2_frames(z.value), (z,), lambda g: (ifft2_frames(g),))


def ifft(z: Var) -> Var:
    z = constant(z)
    return _record(ifft2_frames(z.value), (z,), lambda g: (fft2_frames(g),))


def kdc(k_pred: Var, k_u, omega, lam) -> Var:
    """Data consistency in k-space; ``k_u`` and ``omega`` are data, not variables.

    ``omega`` is a boolean array broadcastable to the k-space with DC at 0.
    """
    k_pred = constant(k_pred)
    lam = parse_lambda(lam)
    k_u = k_u.value if isinstance(k_u, Var) else k_u
    if math.isinf(lam):
        out = np.where(omega, k_u, k_pred.value)
        keep = 0.0
    else:
        out = np.where(omega, (k_pred.value + lam * k_u) / (1.0 + lam), k_pred.value)
        keep = 1.0 / (1.0 + lam)
    return _record(out, (k_pred,), lambda g: (np.where(omega, keep * g, g),))


def idc(s_pred: Var, k_u, omega, lam) -> Var:
    return ifft(kdc(fft(s_pred), k_u, omega, lam))


def relu(x: Var) -> Var:
    x = constant(x)
    active = x.value > 0
    # maximum propagates NaN, so a diverging activation is not silently zeroed
    return _record(np.maximum(x.value, 0), (x,), lambda g: (g * active,))


def conv3d(x: Var, weight: Var, bias: Var, circular_t=False, need_input_grad=True) -> Var:
    """Channels-last convolution; ``weight`` is stored ``(Cout, Cin, kx, ky, kt)``."""
    x, weight, bias = constant(x), constant(weight), constant(bias)
    dtype = x.value.dtype
    taps = weight.value.transpose(2, 3, 4, 1, 0).astype(dtype)
    y, xp = kernels.conv3d_forward(x.value, taps, bias.value, circular_t, return_padded=True)

    def vjp(g):
        gx, gtaps, gb = kernels.conv3d_backward(
            xp, taps, g, circular_t, need_input_grad=need_input_grad and x.tape is not None
        )
        return gx, gtaps.transpose(4, 3, 0, 1, 2), gb

    return _record(y, (x, weight, bias), vjp)


def sum_sq_diff(a: Var, target, scale=1.0) -> Var:
    """``scale * sum |a - target|^2`` over every element (real or complex)."""
    a = constant(a)
    target = target.value if isinstance(target, Var) else target
    diff = a.value - target
    if np.iscomplexobj(diff):
        val = np.sum(diff.real ** 2, dtype=np.float64) + np.sum(diff.imag ** 2, dtype=np.float64)
    else:
        val = np.sum(diff ** 2, dtype=np.float64)
    return _record(np.float64(scale * val), (a,), lambda g: ((2.0 * scale * float(g)) * diff,))


def weighted_sum(terms: Sequence[Var], weights: Sequence[float]) -> Var:
    terms = [constant(t) for t in terms]
    weights = [float(w) for w in weights]
    val = np.float64(sum(w * float(t.value) for w, t in zip(weights, terms)))
    return _record(val, terms, lambda g: tuple(w * g for w in weights))
