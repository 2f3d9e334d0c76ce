"""Same-padded, stride-1 3D convolution on channels-last arrays.

The accumulation loops come from the compiled ``_ckernels`` extension when it
is importable and from ``_pykernels`` otherwise.  Set ``DIMRECON_KERNELS`` to
``python`` or ``compiled`` to force a choice; ``auto`` (default) prefers the
compiled core.

Layout: activations ``(B, nx, ny, nt, C)``, taps ``(kx, ky, kt, Cin, Cout)``.
"""
from __future__ import annotations

import os
from types import ModuleType

import numpy as np

from . import _pykernels


def _load(choice: str) -> tuple[str, ModuleType]:
    if choice not in ("auto", "compiled", "python"):
        raise ValueError(f"unknown kernel backend {choice!r}")
    if choice != "python":
        try:
            from . import _ckernels
        except ImportError:
            if choice == "compiled":
                raise
        else:
            return "compiled", _ckernels
    return "python", _pykernels


BACKEND, _impl = _load(os.environ.get("DIMRECON_KERNELS", "auto"))


def backend_module(name: str | None) -> ModuleType:
    if name is None:
        return _impl
    return _load(name)[1]


def available_backends() -> list[str]:
    names = ["python"]
    try:
        _load("compiled")
    except ImportError:
        pass
    else:
        names.insert(0, "compiled")
    return names


class _Geometry:
    """Row offsets of every kernel tap on the padded, flattened grid."""

    def __init__(self, shape, ksize):
        b, nx, ny, nt = shape
        self.pads = tuple(k // 2 for k in ksize)
        px, py, pt = self.pads
        self.padded = (b, nx + 2 * px, ny + 2 * py, nt + 2 * pt)
        sy = self.padded[3]
        sx = self.padded[2] * sy
        self.offsets = np.array(
            [
                (i - px) * sx + (j - py) * sy + (l - pt)
                for i in range(ksize[0])
                for j in range(ksize[1])
                for l in range(ksize[2])
            ],
            dtype=np.int64,
        )
        self.rows = int(np.prod(self.padded))
        self.lo = px * sx + py * sy + pt
        self.hi = self.rows - self.lo

    def interior(self):
        px, py, pt = self.pads
        _, nx, ny, nt = self.padded
        return (
            slice(None),
            slice(px, nx - px),
            slice(py, ny - py),
            slice(pt, nt - pt),
        )


def _pad(x, pads, circular_t):
    px, py, pt = pads
    if circular_t and pt:
        if pt > x.shape[3]:
            raise ValueError("circular temporal padding wider than the frame count")
        x = np.concatenate([x[:, :, :, -pt:], x, x[:, :, :, :pt]], axis=3)
        pt = 0
    return np.pad(x, ((0, 0), (px, px), (py, py), (pt, pt), (0, 0)))


def _unpad_adjoint(gp, pads, circular_t):
    px, py, pt = pads
    _, nxp, nyp, ntp, _ = gp.shape
    g = gp[:, px:nxp - px, py:nyp - py]
    if not pt:
        return np.ascontiguousarray(g)
    core = g[:, :, :, pt:ntp - pt].copy()
    if circular_t:
        core[:, :, :, -pt:] += g[:, :, :, :pt]
        core[:, :, :, :pt] += g[:, :, :, ntp - pt:]
    return core


def _check(x, taps):
    if x.ndim != 5:
        raise ValueError(f"expected (B, nx, ny, nt, C) input, got shape {x.shape}")
    if taps.ndim != 5 or any(k % 2 == 0 for k in taps.shape[:3]):
        raise ValueError(f"kernel taps must be (kx, ky, kt, Cin, Cout) with odd extents, got {taps.shape}")
    if taps.shape[3] != x.shape[4]:
        raise ValueError(
            f"channel mismatch: kernel expects {taps.shape[3]} input channels, input has {x.shape[4]}"
        )


def conv3d_forward(x, taps, bias, circular_t=False, backend=None, return_padded=False):
    """Cross-correlate ``x`` with ``taps`` and add ``bias`` per output channel."""
    _check(x, taps)
    impl = backend_module(backend)
    dtype = x.dtype
    cin, cout = taps.shape[3], taps.shape[4]
    geo = _Geometry(x.shape[:4], taps.shape[:3])
    xp = _pad(x, geo.pads, circular_t)
    xf = xp.reshape(-1, cin)
    w = np.ascontiguousarray(taps.reshape(-1, cin, cout), dtype=dtype)
    out = np.zeros((geo.rows, cout), dtype=dtype)
    impl.accumulate_forward(xf, w, geo.offsets, geo.lo, geo.hi, out)
    y = out.reshape(geo.padded + (cout,))[geo.interior()] + np.asarray(bias, dtype=dtype)
    if return_padded:
        return y, xp
    return y


def conv3d_backward(x_padded, taps, grad_out, circular_t=False, need_input_grad=True, backend=None):
    """Gradients of :func:`conv3d_forward` w.r.t. input, taps and bias.

    ``x_padded`` is the padded input returned by the forward call with
    ``return_padded=True``.
    """
    impl = backend_module(backend)
    dtype = grad_out.dtype
    cin, cout = taps.shape[3], taps.shape[4]
    geo = _Geometry(grad_out.shape[:4], taps.shape[:3])
    gp = np.zeros(geo.padded + (cout,), dtype=dtype)
    gp[geo.interior()] = grad_out
    gf = gp.reshape(-1, cout)
    xf = x_padded.reshape(-1, cin)

    gw = np.empty((len(geo.offsets), cin, cout), dtype=dtype)
    impl.grad_weight(xf, gf, geo.offsets, geo.lo, geo.hi, gw)
    gb = grad_out.sum(axis=(0, 1, 2, 3))

    gx = None
    if need_input_grad:
        w = np.ascontiguousarray(taps.reshape(-1, cin, cout), dtype=dtype)
        gxf = np.zeros((geo.rows, cin), dtype=dtype)
        impl.accumulate_grad_input(gf, w, geo.offsets, geo.lo, geo.hi, gxf)
        gx = _unpad_adjoint(gxf.reshape(geo.padded + (cin,)), geo.pads, circular_t)
    return gx, gw.reshape(taps.shape), gb
