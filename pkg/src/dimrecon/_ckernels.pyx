# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled accumulation kernels for same-padded 3D convolution.

Arrays arrive flattened to 2D ``(rows, channels)`` over a zero-padded,
channels-last grid.  A kernel tap then becomes a constant row offset, so each
tap is one GEMM on contiguous row blocks accumulated in place (beta = 1).
Row-major operands are handed to column-major BLAS as their transposes.
"""
from scipy.linalg.cython_blas cimport dgemm, sgemm

ctypedef fused real:
    float
    double


cdef inline void _gemm(char ta, char tb, int m, int n, int k,
                       real alpha, real* a, int lda, real* b, int ldb,
                       real beta, real* c, int ldc) noexcept nogil:
    if real is double:
        dgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)
    else:
        sgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


def accumulate_forward(real[:, ::1] x, real[:, :, ::1] w, long[::1] offsets,
                       Py_ssize_t lo, Py_ssize_t hi, real[:, ::1] out):
    """out[lo:hi] += sum_o x[lo+off_o : hi+off_o] @ w[o]"""
    cdef int cin = w.shape[1]
    cdef int cout = w.shape[2]
    cdef int m = <int>(hi - lo)
    cdef Py_ssize_t o, n_taps = offsets.shape[0]
    cdef real one = 1
    if m <= 0:
        return
    with nogil:
        for o in range(n_taps):
            _gemm(c'N', c'N', cout, m, cin, one,
                  &w[o, 0, 0], cout, &x[lo + offsets[o], 0], cin,
                  one, &out[lo, 0], cout)


def accumulate_grad_input(real[:, ::1] g, real[:, :, ::1] w, long[::1] offsets,
                          Py_ssize_t lo, Py_ssize_t hi, real[:, ::1] gx):
    """gx[lo+off_o : hi+off_o] += g[lo:hi] @ w[o].T"""
    cdef int cin = w.shape[1]
    cdef int cout = w.shape[2]
    cdef int m = <int>(hi - lo)
    cdef Py_ssize_t o, n_taps = offsets.shape[0]
    cdef real one = 1
    if m <= 0:
        return
    with nogil:
        for o in range(n_taps):
            _gemm(c'T', c'N', cin, m, cout, one,
                  &w[o, 0, 0], cout, &g[lo, 0], cout,
                  one, &gx[lo + offsets[o], 0], cin)


def grad_weight(real[:, ::1] x, real[:, ::1] g, long[::1] offsets,
                Py_ssize_t lo, Py_ssize_t hi, real[:, :, ::1] gw):
    """gw[o] = x[lo+off_o : hi+off_o].T @ g[lo:hi]"""
    cdef int cin = gw.shape[1]
    cdef int cout = gw.shape[2]
    cdef int m = <int>(hi - lo)
    cdef Py_ssize_t o, n_taps = offsets.shape[0]
    cdef real one = 1
    cdef real zero = 0
    if m <= 0:
        gw[:, :, :] = 0
        return
    with nogil:
        for o in range(n_taps):
            _gemm(c'N', c'T', cout, cin, m, one,
                  &g[lo, 0], cout, &x[lo + offsets[o], 0], cin,
                  zero, &gw[o, 0, 0], cout)
