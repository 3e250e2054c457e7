"""Backend selection for the iterative solver kernels.

The compiled extension ``mfdpar._kernels`` (Cython) runs whole Krylov
iterations in C, which matters for the many small per-plane solves inside the
time steppers.  When the extension is not built (or ``MFD_KERNELS=py`` is
set) the NumPy twin ``mfdpar._kernels_py`` is used instead; both lanes
implement identical algorithms and satisfy the same residual contracts.

``benchmarks/bench_kernels.py`` compares the two lanes.
"""

import os

import numpy as np
import scipy.sparse as sp

from . import _kernels_py

try:
    from . import _kernels  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover - depends on the build
    _kernels = None

_FORCED = os.environ.get("MFD_KERNELS", "").strip().lower()
if _FORCED in ("py", "python"):
    _impl = _kernels_py
elif _FORCED in ("ext", "c", "compiled"):
    if _kernels is None:
        raise ImportError(
            "MFD_KERNELS requests the compiled kernels but mfdpar._kernels "
            "is not built; run `pip install -e . --no-build-isolation`"
        )
    _impl = _kernels
elif _FORCED:
    raise ValueError(f"unknown MFD_KERNELS value: {_FORCED!r}")
else:
    _impl = _kernels if _kernels is not None else _kernels_py


def backend() -> str:
    """Name of the active kernel lane: 'compiled' or 'python'."""
    return "compiled" if _impl is _kernels else "python"


def get_impl(name: str | None = None):
    """Return a kernel module by lane name (default: the active lane)."""
    if name is None:
        return _impl
    if name in ("py", "python"):
        return _kernels_py
    if name in ("ext", "c", "compiled"):
        if _kernels is None:
            raise ImportError("compiled kernels are not built")
        return _kernels
    raise ValueError(f"unknown kernel lane: {name!r}")


class SolverConvergenceError(RuntimeError):
    """Krylov solve failed to reach the requested tolerance."""

    def __init__(self, method, iterations, residual, target):
        self.method = method
        self.iterations = iterations
        self.residual = residual
        self.target = target
        super().__init__(
            f"{method} did not converge: residual {residual:.3e} > "
            f"target {target:.3e} after {iterations} iterations"
        )


def _prepare(a: sp.spmatrix):
    a = sp.csr_matrix(a)
    return a.indptr, a.indices, a.data


def _run(kernel, name, a, b, x0, tol, maxiter, impl):
    indptr, indices, data = _prepare(a)
    n = len(b)
    if maxiter is None:
        maxiter = max(1000, 10 * n)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n)
    # The loops track the recurrence residual; verify the true residual and
    # restart once from the current iterate if rounding let it drift.
    for _ in range(2):
        iters, _, _ = kernel(indptr, indices, data, b, x, tol, maxiter)
        res = float(np.linalg.norm(b - a @ x))
        if res <= tol * bnorm:
            return x
    raise SolverConvergenceError(name, iters, res, tol * bnorm)


def cg_solve(a, b, tol: float = 1e-10, maxiter: int | None = None,
             x0=None, impl=None):
    """Solve the SPD system a x = b to ``||b - a x|| <= tol * ||b||``."""
    impl = impl or _impl
    return _run(impl.cg, "cg", a, b, x0, tol, maxiter, impl)


def bicgstab_solve(a, b, tol: float = 1e-10, maxiter: int | None = None,
                   x0=None, impl=None):
    """Solve the general system a x = b to ``||b - a x|| <= tol * ||b||``."""
    impl = impl or _impl
    return _run(impl.bicgstab, "bicgstab", a, b, x0, tol, maxiter, impl)


def cg_solve_block(a, b, tol: float = 1e-10, maxiter: int | None = None,
                   x0=None, impl=None):
    """Column-wise CG for one SPD matrix and many right-hand sides.

    Solves a X = B for B of shape (n, m); every column meets the same
    relative-residual contract as :func:`cg_solve`.  In the compiled lane the
    columns are solved one by one fully in C; the NumPy lane advances all
    columns jointly so the per-iteration Python overhead is shared.
    """
    impl = impl or _impl
    b = np.asarray(b, dtype=float)
    if b.ndim != 2:
        raise ValueError("b must be 2-D (one column per right-hand side)")
    n, m = b.shape
    if maxiter is None:
        maxiter = max(1000, 10 * n)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)

    if impl is _kernels_py:
        _cg_block_numpy(sp.csr_matrix(a), b, x, tol, maxiter)
        return x
    indptr, indices, data = _prepare(a)
    for j in range(m):
        bj = np.ascontiguousarray(b[:, j])
        bnorm = float(np.linalg.norm(bj))
        if bnorm == 0.0:
            x[:, j] = 0.0
            continue
        xj = np.ascontiguousarray(x[:, j])
        for _ in range(2):
            iters, res, _ = impl.cg(indptr, indices, data, bj, xj, tol,
                                    maxiter)
            if res <= tol * bnorm:
                break
        else:
            raise SolverConvergenceError("cg", iters, res, tol * bnorm)
        x[:, j] = xj
    return x


def _cg_block_numpy(a, b, x, tol, maxiter):
    bnorm = np.linalg.norm(b, axis=0)
    targets = tol * np.where(bnorm > 0.0, bnorm, 1.0)
    x[:, bnorm == 0.0] = 0.0
    r = b - a @ x
    p = r.copy()
    rr = np.einsum("ij,ij->j", r, r)
    it = 0
    while np.any(np.sqrt(rr) > targets) and it < maxiter:
        ap = a @ p
        pap = np.einsum("ij,ij->j", p, ap)
        alpha = np.where(pap > 0.0, rr / np.where(pap != 0.0, pap, 1.0), 0.0)
        x += alpha * p
        r -= alpha * ap
        rr_new = np.einsum("ij,ij->j", r, r)
        beta = np.where(rr > 0.0, rr_new / np.where(rr != 0.0, rr, 1.0), 0.0)
        rr = rr_new
        p = r + beta * p
        it += 1
    res = np.linalg.norm(b - a @ x, axis=0)
    if np.any(res > targets):
        j = int(np.argmax(res / targets))
        raise SolverConvergenceError("cg", it, float(res[j]),
                                     float(targets[j]))
