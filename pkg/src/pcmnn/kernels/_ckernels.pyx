# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``.

Matrix products go through BLAS (scipy's cython_blas); the elementwise
tanh/tangent work is fused into single C loops. Signatures and return
values match the numpy fallback exactly.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, isfinite
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "cython"


cdef void _gemm_nt(double[:, ::1] A, double[:, ::1] W, double[:, ::1] C, double beta) noexcept nogil:
    # C(n, m) = A(n, k) @ W(m, k).T + beta * C
    cdef int n = A.shape[0], k = A.shape[1], m = W.shape[0]
    cdef double one = 1.0
    cdef char ta = b'T'
    cdef char tb = b'N'
    if n == 0 or m == 0:
        return
    dgemm(&ta, &tb, &m, &n, &k, &one, &W[0, 0], &k, &A[0, 0], &k, &beta, &C[0, 0], &m)


cdef void _gemm_tn(double[:, ::1] G, double[:, ::1] A, double[:, ::1] R, double beta) noexcept nogil:
    # R(m, k) = G(n, m).T @ A(n, k) + beta * R
    cdef int n = G.shape[0], m = G.shape[1], k = A.shape[1]
    cdef double one = 1.0
    cdef char ta = b'N'
    cdef char tb = b'T'
    if n == 0 or m == 0:
        return
    dgemm(&ta, &tb, &k, &m, &n, &one, &A[0, 0], &k, &G[0, 0], &m, &beta, &R[0, 0], &k)


cdef void _gemm_nn(double[:, ::1] G, double[:, ::1] W, double[:, ::1] R) noexcept nogil:
    # R(n, k) = G(n, m) @ W(m, k)
    cdef int n = G.shape[0], m = G.shape[1], k = W.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char t = b'N'
    if n == 0 or k == 0:
        return
    dgemm(&t, &t, &k, &n, &m, &one, &W[0, 0], &k, &G[0, 0], &m, &zero, &R[0, 0], &k)


def mlp_forward(weights, biases, X, int tangent_col=-1):
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0]
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t layer, i, j, width
    cdef double[:, ::1] W, a, z, dz, da, da_prev
    cdef double[::1] b
    cdef double v
    cdef bint tangent = tangent_col >= 0
    acts = [np.asarray(Xv)]
    dacts = [None]
    dzs = [None]
    a = Xv
    da_prev = None
    z_arr = None
    dz_arr = None
    for layer in range(n_layers):
        W = np.ascontiguousarray(weights[layer], dtype=np.float64)
        b = np.ascontiguousarray(biases[layer], dtype=np.float64)
        width = W.shape[0]
        z_arr = np.empty((n, width))
        z = z_arr
        with nogil:
            for i in range(n):
                for j in range(width):
                    z[i, j] = b[j]
            _gemm_nt(a, W, z, 1.0)
        if tangent:
            dz_arr = np.empty((n, width))
            dz = dz_arr
            if layer == 0:
                with nogil:
                    for i in range(n):
                        for j in range(width):
                            dz[i, j] = W[j, tangent_col]
            else:
                with nogil:
                    _gemm_nt(da_prev, W, dz, 0.0)
        if layer < n_layers - 1:
            if tangent:
                da_arr = np.empty((n, width))
                da = da_arr
                with nogil:
                    for i in range(n):
                        for j in range(width):
                            v = tanh(z[i, j])
                            z[i, j] = v
                            da[i, j] = (1.0 - v * v) * dz[i, j]
                acts.append(z_arr)
                dacts.append(da_arr)
                dzs.append(dz_arr)
                da_prev = da
            else:
                with nogil:
                    for i in range(n):
                        for j in range(width):
                            z[i, j] = tanh(z[i, j])
                acts.append(z_arr)
                dacts.append(None)
                dzs.append(None)
            a = z
    return z_arr, (dz_arr if tangent else None), (acts, dacts, dzs, tangent_col)


def mlp_backward(weights, cache, gy, gdy=None):
    acts, dacts, dzs, tangent_col_obj = cache
    cdef int tangent_col = tangent_col_obj
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t layer, i, j, n, width
    cdef double[:, ::1] W, a_prev, gz, gdz, ga, gda, dz, gw_v
    cdef double[::1] gb_v
    cdef double s, ap, acc
    cdef bint tangent = (gdy is not None) and tangent_col >= 0
    gz = np.ascontiguousarray(gy, dtype=np.float64)
    if tangent:
        gdz = np.ascontiguousarray(gdy, dtype=np.float64)
    n = gz.shape[0]
    gW = [None] * n_layers
    gb = [None] * n_layers
    gX = None
    for layer in range(n_layers - 1, -1, -1):
        W = np.ascontiguousarray(weights[layer], dtype=np.float64)
        a_prev = acts[layer]
        width = W.shape[0]
        gw_arr = np.empty((W.shape[0], W.shape[1]))
        gw_v = gw_arr
        gb_arr = np.zeros(width)
        gb_v = gb_arr
        with nogil:
            _gemm_tn(gz, a_prev, gw_v, 0.0)
            for i in range(n):
                for j in range(width):
                    gb_v[j] += gz[i, j]
        if tangent:
            if layer == 0:
                with nogil:
                    for j in range(width):
                        acc = 0.0
                        for i in range(n):
                            acc = acc + gdz[i, j]
                        gw_v[j, tangent_col] += acc
            else:
                _gemm_tn(gdz, dacts[layer], gw_v, 1.0)
        gW[layer] = gw_arr
        gb[layer] = gb_arr
        ga_arr = np.empty((n, W.shape[1]))
        ga = ga_arr
        with nogil:
            _gemm_nn(gz, W, ga)
        if layer == 0:
            gX = ga_arr
            break
        width = W.shape[1]
        if tangent:
            gda_arr = np.empty((n, width))
            gda = gda_arr
            dz = dzs[layer]
            with nogil:
                _gemm_nn(gdz, W, gda)
                for i in range(n):
                    for j in range(width):
                        ap = a_prev[i, j]
                        s = 1.0 - ap * ap
                        # ga becomes the new gz, gda the new gdz (in place)
                        ga[i, j] = s * (ga[i, j] - 2.0 * ap * gda[i, j] * dz[i, j])
                        gda[i, j] = gda[i, j] * s
            gz = ga
            gdz = gda
        else:
            with nogil:
                for i in range(n):
                    for j in range(width):
                        ap = a_prev[i, j]
                        ga[i, j] = ga[i, j] * (1.0 - ap * ap)
            gz = ga
    return gW, gb, gX


def rk4_tabulated(double A, double B, double x0, hs, alpha):
    cdef double[::1] hv = np.ascontiguousarray(hs, dtype=np.float64)
    cdef double[:, ::1] tab = np.ascontiguousarray(alpha, dtype=np.float64)
    cdef Py_ssize_t n = hv.shape[0], i
    xs_arr = np.zeros(n + 1)
    cdef double[::1] xs = xs_arr
    cdef double x = x0, h, r0, r1, k1, k2, k3, k4, xm, xe
    cdef long clipped = 0
    cdef Py_ssize_t blowup = -1
    xs[0] = x
    with nogil:
        for i in range(n):
            h = hv[i]
            r0 = A + tab[i, 0]
            r1 = A + tab[i, 1]
            k1 = r0 * x - B * x * x
            xm = x + 0.5 * h * k1
            k2 = r1 * xm - B * xm * xm
            xm = x + 0.5 * h * k2
            k3 = r1 * xm - B * xm * xm
            xe = x + h * k3
            k4 = (A + tab[i, 2]) * xe - B * xe * xe
            x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not isfinite(x):
                blowup = i
                break
            if x < 0.0:
                x = 0.0
                clipped += 1
            xs[i + 1] = x
    return xs_arr, int(clipped), int(blowup)
