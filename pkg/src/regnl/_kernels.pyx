# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: fused full-batch MLP training and the CSS recursion.

An epoch runs entirely in C without the GIL: register-blocked products for
the narrow layers, then fused bias/ReLU/dropout, masking and update passes
(see ``_mlp_core.h``).

Semantics match ``regnl._kernels_py`` exactly, including the dropout mask
stream; results differ only in floating-point summation order.
"""
import math

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, fmax, isfinite
from libc.stdint cimport uint64_t
from libc.stdlib cimport free, malloc
from libc.string cimport memset

cdef extern from "_mlp_core.h" nogil:
    void regnl_bias_relu_dropout(double* z, Py_ssize_t n, Py_ssize_t width,
                                 const double* b, uint64_t key, unsigned int thr,
                                 double scale)
    void regnl_mask_grad(double* g, const double* act, Py_ssize_t n,
                         Py_ssize_t width, double scale, double* gb)
    void regnl_sgd_update(double* w, double* wt, const double* gw, double* b,
                          const double* gb, Py_ssize_t n_out, Py_ssize_t n_in,
                          double lr, double decay)
    void regnl_rowmat(double* out, const double* a, const double* m, Py_ssize_t n,
                      Py_ssize_t n_in, Py_ssize_t n_out)
    void regnl_outer_sum(double* gw, const double* g, const double* a, Py_ssize_t n,
                         Py_ssize_t n_out, Py_ssize_t n_in)

cnp.import_array()

BACKEND = "compiled"

cdef double _PENALTY = 1.0e6
cdef double _MARGIN = 1.0e-4
PENALTY_WEIGHT = _PENALTY
STABILITY_MARGIN = _MARGIN

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t _splitmix(uint64_t x) noexcept nogil:
    cdef uint64_t z = x + GOLDEN
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _stream_key(uint64_t seed, uint64_t epoch, uint64_t layer) noexcept nogil:
    cdef uint64_t k = _splitmix(seed)
    k = _splitmix(k ^ epoch)
    return _splitmix(k ^ layer)


cdef void _fill_scales(double* m, Py_ssize_t n, uint64_t key, int threshold,
                       double scale) noexcept nogil:
    cdef Py_ssize_t e, word_idx, n_full = n >> 2
    cdef uint64_t word
    cdef unsigned int thr = <unsigned int>threshold
    for word_idx in range(n_full):
        word = _splitmix(key + <uint64_t>word_idx)
        e = word_idx << 2
        m[e] = scale if <unsigned int>(word & 0xFFFF) >= thr else 0.0
        m[e + 1] = scale if <unsigned int>((word >> 16) & 0xFFFF) >= thr else 0.0
        m[e + 2] = scale if <unsigned int>((word >> 32) & 0xFFFF) >= thr else 0.0
        m[e + 3] = scale if <unsigned int>(word >> 48) >= thr else 0.0
    if n & 3:
        word = _splitmix(key + <uint64_t>n_full)
        for e in range(n_full << 2, n):
            m[e] = scale if <unsigned int>((word >> (16 * (e & 3))) & 0xFFFF) >= thr else 0.0


def stream_key(seed, epoch, layer):
    mask = (1 << 64) - 1
    return int(_stream_key(<uint64_t>(seed & mask), <uint64_t>(epoch & mask),
                           <uint64_t>(layer & mask)))


def dropout_threshold(double rate):
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    return int(round(rate * 65536))


def dropout_scales(seed, epoch, layer, Py_ssize_t n_rows, Py_ssize_t width,
                   int threshold):
    cdef cnp.ndarray[double, ndim=2] out = np.ones((n_rows, width))
    if threshold == 0:
        return out
    cdef uint64_t key = <uint64_t>stream_key(seed, epoch, layer)
    _fill_scales(<double*>out.data, n_rows * width, key, threshold,
                 65536.0 / (65536 - threshold))
    return out


def train_full_batch(X, y, list weights, list biases, double lr,
                     double weight_decay, int threshold, seed,
                     long long epoch_start, long long n_epochs,
                     long long trace_every):
    cdef cnp.ndarray[double, ndim=2, mode="c"] Xc = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] yc = np.ascontiguousarray(y, dtype=np.float64)
    cdef int n = Xc.shape[0]
    cdef int n_layers = len(weights)
    cdef int n_hidden = n_layers - 1
    cdef int l
    if n == 0:
        raise ValueError("empty training batch")

    dims_list = [Xc.shape[1]] + [w.shape[0] for w in weights]
    cdef int* dims = <int*>malloc((n_layers + 1) * sizeof(int))
    for l in range(n_layers + 1):
        dims[l] = dims_list[l]
    w_arrays = [np.ascontiguousarray(w, dtype=np.float64) for w in weights]
    # Transposed copies (in x out) make the forward product a row-times-matrix sweep.
    wt_arrays = [np.ascontiguousarray(w.T, dtype=np.float64) for w in weights]
    b_arrays = [np.ascontiguousarray(b, dtype=np.float64) for b in biases]
    gw_arrays = [np.empty((dims_list[l + 1], dims_list[l])) for l in range(n_layers)]
    cdef int max_width = max(dims_list)
    # Carve the per-row work buffers from one arena, each start staggered by a
    # few cache lines. Separately allocated buffers of this size are
    # page-aligned, so buffers streamed together would alias in L1 (4K aliasing).
    sizes = [n * dims_list[0]] + [n * dims_list[l + 1] for l in range(n_hidden)] + [n * max_width] * 2
    starts = []
    offset = 0
    for idx, count in enumerate(sizes):
        starts.append(offset)
        offset += count + 8 * (idx + 1) + (-(count + 8 * (idx + 1))) % 8
    arena = np.empty(offset)
    views = [arena[st:st + count] for st, count in zip(starts, sizes)]
    views[0][:] = Xc.ravel()
    act_arrays = [views[0].reshape(n, dims_list[0])] + \
        [views[l + 1].reshape(n, dims_list[l + 1]) for l in range(n_hidden)]
    cdef cnp.ndarray[double, ndim=2, mode="c"] g_buf = views[n_hidden + 1].reshape(n, max_width)
    cdef cnp.ndarray[double, ndim=2, mode="c"] g_prev = views[n_hidden + 2].reshape(n, max_width)
    cdef cnp.ndarray[double, ndim=1, mode="c"] out = np.empty(n)
    cdef cnp.ndarray[double, ndim=1, mode="c"] resid = np.empty(n)
    cdef cnp.ndarray[double, ndim=1, mode="c"] gb_buf = np.empty(max_width)

    cdef double** wm = <double**>malloc(n_layers * sizeof(double*))
    cdef double** wt = <double**>malloc(n_layers * sizeof(double*))
    cdef double** bp = <double**>malloc(n_layers * sizeof(double*))
    cdef double** gwp = <double**>malloc(n_layers * sizeof(double*))
    cdef double** act = <double**>malloc((n_hidden + 1) * sizeof(double*))
    cdef cnp.ndarray tmp
    for l in range(n_layers):
        tmp = w_arrays[l]; wm[l] = <double*>tmp.data
        tmp = wt_arrays[l]; wt[l] = <double*>tmp.data
        tmp = b_arrays[l]; bp[l] = <double*>tmp.data
        tmp = gw_arrays[l]; gwp[l] = <double*>tmp.data
    for l in range(n_hidden + 1):
        tmp = act_arrays[l]; act[l] = <double*>tmp.data

    cdef uint64_t useed = <uint64_t>(seed & ((1 << 64) - 1))
    cdef double keep_scale = 65536.0 / (65536 - threshold) if threshold else 1.0
    cdef double inv_n2 = 2.0 / n
    cdef long long e, diverged = -1
    cdef Py_ssize_t i, o, j, k, size
    cdef int n_in, n_out
    cdef double loss, r, acc, zval
    cdef double* g = <double*>g_buf.data
    cdef double* gp = <double*>g_prev.data
    cdef double* swap
    cdef double* dy = <double*>yc.data
    cdef double* dout = <double*>out.data
    cdef double* dres = <double*>resid.data
    cdef double* gb = <double*>gb_buf.data
    cdef double* z
    cdef double* wl
    cdef double* gw
    trace_epochs = []
    trace_losses = []

    try:
        for e in range(epoch_start, epoch_start + n_epochs):
            with nogil:
                for l in range(n_hidden):
                    n_in = dims[l]
                    n_out = dims[l + 1]
                    regnl_rowmat(act[l + 1], act[l], wt[l], n, n_in, n_out)
                    regnl_bias_relu_dropout(act[l + 1], n, n_out, bp[l],
                                            _stream_key(useed, <uint64_t>e, <uint64_t>l),
                                            <unsigned int>threshold, keep_scale)
                n_in = dims[n_hidden]
                regnl_rowmat(dout, act[n_hidden], wt[n_hidden], n, n_in, 1)
                loss = 0.0
                acc = 0.0
                for i in range(n):
                    r = dout[i] + bp[n_hidden][0] - dy[i]
                    g[i] = inv_n2 * r
                    acc += g[i]
                    loss += r * r
                gb[0] = acc
                loss = loss / n
            if not isfinite(loss):
                diverged = e
                break
            if (e - epoch_start) % trace_every == 0:
                trace_epochs.append(e)
                trace_losses.append(loss)
            with nogil:
                for l in range(n_hidden, -1, -1):
                    n_in = dims[l]
                    n_out = dims[l + 1]
                    # gw (n_out x n_in) = g.T @ act
                    regnl_outer_sum(gwp[l], g, act[l], n, n_out, n_in)
                    if l > 0:
                        # gp (n x n_in) = g @ w, then masked by the activation below
                        regnl_rowmat(gp, g, wm[l], n, n_out, n_in)
                        regnl_sgd_update(wm[l], wt[l], gwp[l], bp[l], gb, n_out, n_in,
                                         lr, weight_decay)
                        regnl_mask_grad(gp, act[l], n, n_in, keep_scale, gb)
                        swap = g
                        g = gp
                        gp = swap
                    else:
                        regnl_sgd_update(wm[l], wt[l], gwp[l], bp[l], gb, n_out, n_in,
                                         lr, weight_decay)
    finally:
        free(dims); free(wm); free(wt); free(bp); free(gwp); free(act)

    for l in range(n_layers):
        weights[l][...] = w_arrays[l]
        biases[l][...] = b_arrays[l]
    return (np.array(trace_epochs, dtype=np.int64), np.array(trace_losses),
            int(diverged))


def css_residuals(w, phi, theta, double c):
    cdef cnp.ndarray[double, ndim=1, mode="c"] wc = np.ascontiguousarray(w, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ph = np.ascontiguousarray(phi, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] eps = np.zeros(wc.shape[0])
    _css_recursion(<double*>wc.data, wc.shape[0], <double*>ph.data, ph.shape[0],
                   <double*>th.data, th.shape[0], c, <double*>eps.data)
    return eps


cdef double _css_recursion(const double* w, Py_ssize_t n, const double* phi, Py_ssize_t p,
                           const double* theta, Py_ssize_t q, double c,
                           double* eps) noexcept nogil:
    cdef Py_ssize_t t, i, j
    cdef double e, css = 0.0
    for t in range(p, n):
        e = w[t] - c
        for i in range(p):
            e -= phi[i] * w[t - 1 - i]
        for j in range(q):
            if t - 1 - j >= p:
                e -= theta[j] * eps[t - 1 - j]
        eps[t] = e
        css += e * e
    return css


cdef double _violation(double a1, double a2, int order) noexcept nogil:
    cdef double bound = 1.0 - _MARGIN
    cdef double v = 0.0
    if order == 0:
        return 0.0
    if order == 1:
        return max(0.0, fabs(a1) - bound)
    v += max(0.0, a1 + a2 - bound)
    v += max(0.0, a2 - a1 - bound)
    v += max(0.0, fabs(a2) - bound)
    return v


def stability_violation(coeffs):
    if len(coeffs) == 0:
        return 0.0
    if len(coeffs) == 1:
        return _violation(coeffs[0], 0.0, 1)
    return _violation(coeffs[0], coeffs[1], 2)


def css_penalized(x, w, int p, int q):
    cdef cnp.ndarray[double, ndim=1, mode="c"] xc = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] wc = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = wc.shape[0]
    cdef double* eps = <double*>malloc((n + 1) * sizeof(double))
    cdef double* px = <double*>xc.data
    cdef double css, a1, a2
    memset(eps, 0, (n + 1) * sizeof(double))
    css = _css_recursion(<double*>wc.data, n, px, p, px + p, q, px[p + q], eps)
    free(eps)
    if not isfinite(css):
        return math.inf
    a1 = px[0] if p > 0 else 0.0
    a2 = px[1] if p > 1 else 0.0
    css += _PENALTY * _violation(a1, a2, p)
    a1 = -px[p] if q > 0 else 0.0
    a2 = -px[p + 1] if q > 1 else 0.0
    css += _PENALTY * _violation(a1, a2, q)
    return css
