# Hot solver kernels: CSR matvec, conjugate gradient and BiCGStab with the
# full iteration loop in C.  The Python twin of this module lives in
# _kernels_py.py; mfdpar.kernels selects one of the two at import time.

import numpy as np

cimport cython
cimport numpy as cnp

ctypedef fused itype:
    cnp.int32_t
    cnp.int64_t


cdef void _matvec(const itype[::1] indptr, const itype[::1] indices,
                  const double[::1] data, const double[::1] x,
                  double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, n = indptr.shape[0] - 1
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(indptr[i], indptr[i + 1]):
            acc += data[j] * x[indices[j]]
        out[i] = acc


cdef double _dot(const double[::1] a, const double[::1] b) noexcept nogil:
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(a.shape[0]):
        acc += a[i] * b[i]
    return acc


def csr_matvec(itype[::1] indptr, itype[::1] indices, double[::1] data,
               double[::1] x):
    out = np.empty(indptr.shape[0] - 1)
    cdef double[::1] mv = out
    with nogil:
        _matvec(indptr, indices, data, x, mv)
    return out


def cg(itype[::1] indptr, itype[::1] indices, double[::1] data,
       double[::1] b, double[::1] x, double rtol, Py_ssize_t maxiter):
    """In-place CG on a SPD CSR matrix; x holds the initial guess.

    Returns (iterations, achieved residual norm, ||b||).
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t it, i
    cdef double bnorm, rr, rr_new, alpha, beta, tol2, pap

    r_arr = np.empty(n)
    p_arr = np.empty(n)
    ap_arr = np.empty(n)
    cdef double[::1] r = r_arr
    cdef double[::1] p = p_arr
    cdef double[::1] ap = ap_arr

    with nogil:
        bnorm = _dot(b, b) ** 0.5
        _matvec(indptr, indices, data, x, r)
        for i in range(n):
            r[i] = b[i] - r[i]
            p[i] = r[i]
        rr = _dot(r, r)
        tol2 = (rtol * bnorm) ** 2
        it = 0
        while rr > tol2 and it < maxiter:
            _matvec(indptr, indices, data, p, ap)
            pap = _dot(p, ap)
            if pap <= 0.0:
                break
            alpha = rr / pap
            for i in range(n):
                x[i] += alpha * p[i]
                r[i] -= alpha * ap[i]
            rr_new = _dot(r, r)
            beta = rr_new / rr
            rr = rr_new
            for i in range(n):
                p[i] = r[i] + beta * p[i]
            it += 1
    return it, rr ** 0.5, bnorm


def bicgstab(itype[::1] indptr, itype[::1] indices, double[::1] data,
             double[::1] b, double[::1] x, double rtol, Py_ssize_t maxiter):
    """In-place BiCGStab on a general CSR matrix; x holds the initial guess.

    Returns (iterations, achieved residual norm, ||b||).
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t it, i
    cdef double bnorm, tol, rho, rho1, alpha, omega, beta, rnorm, tt

    r_arr = np.empty(n)
    rhat_arr = np.empty(n)
    p_arr = np.zeros(n)
    v_arr = np.zeros(n)
    s_arr = np.empty(n)
    t_arr = np.empty(n)
    cdef double[::1] r = r_arr
    cdef double[::1] rhat = rhat_arr
    cdef double[::1] p = p_arr
    cdef double[::1] v = v_arr
    cdef double[::1] s = s_arr
    cdef double[::1] t = t_arr

    with nogil:
        bnorm = _dot(b, b) ** 0.5
        _matvec(indptr, indices, data, x, r)
        for i in range(n):
            r[i] = b[i] - r[i]
            rhat[i] = r[i]
        rho = 1.0
        alpha = 1.0
        omega = 1.0
        rnorm = _dot(r, r) ** 0.5
        tol = rtol * bnorm
        it = 0
        while rnorm > tol and it < maxiter:
            rho1 = _dot(rhat, r)
            if rho1 == 0.0:
                break
            if it == 0:
                for i in range(n):
                    p[i] = r[i]
            else:
                beta = (rho1 / rho) * (alpha / omega)
                for i in range(n):
                    p[i] = r[i] + beta * (p[i] - omega * v[i])
            _matvec(indptr, indices, data, p, v)
            alpha = rho1 / _dot(rhat, v)
            for i in range(n):
                s[i] = r[i] - alpha * v[i]
            if _dot(s, s) ** 0.5 <= tol:
                for i in range(n):
                    x[i] += alpha * p[i]
                _matvec(indptr, indices, data, x, r)
                for i in range(n):
                    r[i] = b[i] - r[i]
                rnorm = _dot(r, r) ** 0.5
                rho = rho1
                it += 1
                continue
            _matvec(indptr, indices, data, s, t)
            tt = _dot(t, t)
            if tt == 0.0:
                break
            omega = _dot(t, s) / tt
            for i in range(n):
                x[i] += alpha * p[i] + omega * s[i]
                r[i] = s[i] - omega * t[i]
            rnorm = _dot(r, r) ** 0.5
            rho = rho1
            it += 1
    return it, rnorm, bnorm
