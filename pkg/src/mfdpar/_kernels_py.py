"""NumPy twin of the compiled solver kernels.

Same call signatures and return conventions as ``_kernels``; the iteration
loops run at Python level with vectorized updates, so this lane is slower on
the many small repeated solves of the time steppers but needs no compiler.
"""

import numpy as np
import scipy.sparse as sp


def _as_csr(indptr, indices, data):
    n = len(indptr) - 1
    return sp.csr_matrix((data, indices, indptr), shape=(n, n))


def csr_matvec(indptr, indices, data, x):
    return _as_csr(indptr, indices, data) @ x


def cg(indptr, indices, data, b, x, rtol, maxiter):
    """In-place CG on a SPD CSR matrix; x holds the initial guess.

    Returns (iterations, achieved residual norm, ||b||).
    """
    a = _as_csr(indptr, indices, data)
    bnorm = float(np.linalg.norm(b))
    r = b - a @ x
    p = r.copy()
    rr = float(r @ r)
    tol2 = (rtol * bnorm) ** 2
    it = 0
    while rr > tol2 and it < maxiter:
        ap = a @ p
        pap = float(p @ ap)
        if pap <= 0.0:
            break
        alpha = rr / pap
        x += alpha * p
        r -= alpha * ap
        rr_new = float(r @ r)
        beta = rr_new / rr
        rr = rr_new
        p = r + beta * p
        it += 1
    return it, rr ** 0.5, bnorm


def bicgstab(indptr, indices, data, b, x, rtol, maxiter):
    """In-place BiCGStab on a general CSR matrix; x holds the initial guess.

    Returns (iterations, achieved residual norm, ||b||).
    """
    a = _as_csr(indptr, indices, data)
    bnorm = float(np.linalg.norm(b))
    r = b - a @ x
    rhat = r.copy()
    rho = alpha = omega = 1.0
    p = np.zeros_like(b)
    v = np.zeros_like(b)
    rnorm = float(np.linalg.norm(r))
    tol = rtol * bnorm
    it = 0
    while rnorm > tol and it < maxiter:
        rho1 = float(rhat @ r)
        if rho1 == 0.0:
            break
        if it == 0:
            p[:] = r
        else:
            beta = (rho1 / rho) * (alpha / omega)
            p = r + beta * (p - omega * v)
        v = a @ p
        alpha = rho1 / float(rhat @ v)
        s = r - alpha * v
        if float(np.linalg.norm(s)) <= tol:
            x += alpha * p
            r = b - a @ x
            rnorm = float(np.linalg.norm(r))
            rho = rho1
            it += 1
            continue
        t = a @ s
        tt = float(t @ t)
        if tt == 0.0:
            break
        omega = float(t @ s) / tt
        x += alpha * p + omega * s
        r = s - omega * t
        rnorm = float(np.linalg.norm(r))
        rho = rho1
        it += 1
    return it, rnorm, bnorm
