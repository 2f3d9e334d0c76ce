"""Pure-numpy versions of the compiled convolution kernels.

Same contracts as ``_ckernels``; used when the extension is not built or
when ``DIMRECON_KERNELS=python`` is set.
"""
import numpy as np


def accumulate_forward(x, w, offsets, lo, hi, out):
    """out[lo:hi] += sum_o x[lo+off_o : hi+off_o] @ w[o]"""
    if hi <= lo:
        return
    dst = out[lo:hi]
    tmp = np.empty_like(dst)
    for o, off in enumerate(offsets):
        np.matmul(x[lo + off:hi + off], w[o], out=tmp)
        dst += tmp


def accumulate_grad_input(g, w, offsets, lo, hi, gx):
    """gx[lo+off_o : hi+off_o] += g[lo:hi] @ w[o].T"""
    if hi <= lo:
        return
    src = g[lo:hi]
    tmp = np.empty((hi - lo, w.shape[1]), dtype=gx.dtype)
    for o, off in enumerate(offsets):
        np.matmul(src, w[o].T, out=tmp)
        gx[lo + off:hi + off] += tmp


def grad_weight(x, g, offsets, lo, hi, gw):
    """gw[o] = x[lo+off_o : hi+off_o].T @ g[lo:hi]"""
    if hi <= lo:
        gw[...] = 0
        return
    src = g[lo:hi]
    for o, off in enumerate(offsets):
        np.matmul(x[lo + off:hi + off].T, src, out=gw[o])
