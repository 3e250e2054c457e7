"""Verification harnesses: adjointness residuals, convergence studies,
energy growth rates, spectrum diagnostics and system export."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .field import AdvectiveField
from .grid import DualGrid, GridSpec, build_dual_grid, quadrature_weights
from .kernels import cg_solve_block
from .models import (SawSystem, WaveSystem, assemble_saws, assemble_wave,
                     discrete_energy)
from .operators import (P_TO_Q, Q_TO_P, WeightPair, parallel_gradient,
                        write_matrix_market)
from .timeint import (EnergyTrace, build_mms_forcing, manufactured_state,
                      run_simulation)


def skewness_residual(c_pq, c_qp, w_p: np.ndarray, w_q: np.ndarray,
                      trials: int = 100, seed: int = 0) -> float:
    """Largest normalized violation of the discrete divergence theorem.

    Draws seeded random interior vectors p, q and evaluates
    |p^T X_p G_pq q + q^T X_q G_qp p| / (||p|| ||q||); zero (to rounding)
    exactly when the weighted block operator is skew.
    """
    m_pq = c_pq.matrix if hasattr(c_pq, "matrix") else c_pq
    m_qp = c_qp.matrix if hasattr(c_qp, "matrix") else c_qp
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        p = rng.standard_normal(m_pq.shape[0])
        q = rng.standard_normal(m_qp.shape[0])
        num = abs(float((w_p * p) @ (m_pq @ q)) +
                  float((w_q * q) @ (m_qp @ p)))
        den = (float(w_p @ p ** 2) * float(w_q @ q ** 2)) ** 0.5
        worst = max(worst, num / den)
    return worst


@dataclass(frozen=True)
class ConvergenceTable:
    """(resolution, error) pairs with fitted log-log slopes.

    ``h`` is the per-direction spacing ratio against the finest level (the
    cube root of the product of the three per-direction ratios, so uniform
    refinement by two halves it).
    """

    resolutions: tuple
    h: np.ndarray
    errors: np.ndarray
    field_names: tuple

    def __post_init__(self):
        if len(self.resolutions) < 3:
            raise ValueError("a convergence study needs >= 3 resolutions")
        if np.any(self.errors <= 0.0):
            raise ValueError("errors must be positive")

    @property
    def slopes(self) -> np.ndarray:
        cols = np.atleast_2d(self.errors.T)
        return np.array([np.polyfit(np.log(self.h), np.log(c), 1)[0]
                         for c in cols])

    def to_csv(self, path) -> None:
        names = ",".join(f"err_{n}" for n in self.field_names)
        errs = np.atleast_2d(self.errors.T).T
        with open(path, "w") as fh:
            fh.write(f"h,{names}\n")
            for i, h in enumerate(self.h):
                row = ",".join(f"{e:.17g}" for e in errs[i])
                fh.write(f"{h:.17g},{row}\n")


def _level_spec(base: GridSpec, resolution) -> GridSpec:
    if np.isscalar(resolution):
        nx = ny = nz = int(resolution)
    else:
        nx, ny, nz = (int(v) for v in resolution)
    return GridSpec(lx=base.lx, ly=base.ly, lz=base.lz, npx=nx, npy=ny,
                    npz=nz)


def _h_values(specs) -> np.ndarray:
    ref = specs[-1]
    return np.array([
        (s.dx / ref.dx * s.dy / ref.dy * s.dz / ref.dz) ** (1.0 / 3.0)
        for s in specs])


def _default_test_function(spec: GridSpec):
    kx, ky, kz = 2 * np.pi / spec.lx, 2 * np.pi / spec.ly, 2 * np.pi / spec.lz

    def f(x, y, z):
        return np.sin(kx * x) * np.sin(ky * y) * np.sin(kz * z)

    def fgrad(x, y, z):
        return (kx * np.cos(kx * x) * np.sin(ky * y) * np.sin(kz * z),
                ky * np.sin(kx * x) * np.cos(ky * y) * np.sin(kz * z),
                kz * np.sin(kx * x) * np.sin(ky * y) * np.cos(kz * z))

    return f, fgrad


def operator_convergence(base_spec: GridSpec, field: AdvectiveField,
                         mapping: str, weights: WeightPair, resolutions,
                         test_function=None, threads: int = 1
                         ) -> ConvergenceTable:
    """Discrete L2 error of the transport operator against b . grad f.

    The default test function is the product of fundamental sines in the
    three directions, smooth and vanishing on the Dirichlet boundary.
    """
    if len(resolutions) < 3:
        raise ValueError("a convergence study needs >= 3 resolutions")
    specs = [_level_spec(base_spec, r) for r in resolutions]

    def one_level(spec: GridSpec) -> float:
        f, fgrad = (test_function if test_function is not None
                    else _default_test_function(spec))
        grid = build_dual_grid(spec)
        op = parallel_gradient(grid, field, mapping, weights)
        src, dst = ("q", "p") if mapping == Q_TO_P else ("p", "q")
        fsrc = grid.sample(src, f)
        if mapping == P_TO_Q:
            fsrc = fsrc[grid.interior_p_mask()]
        x, y, z = grid.mesh(dst)
        w = quadrature_weights(grid, dst).diag
        if mapping == Q_TO_P:
            keep = grid.interior_p_mask()
            x, y, z, w = x[keep], y[keep], z[keep], w[keep]
        exact = field.directional_derivative(x, y, *fgrad(x, y, z)[:2],
                                             fgrad(x, y, z)[2])
        err = op.matrix @ fsrc - exact
        return float(np.sqrt(w @ err ** 2))

    errors = _parallel_map(one_level, specs, threads)
    return ConvergenceTable(resolutions=tuple(resolutions),
                            h=_h_values(specs),
                            errors=np.array(errors), field_names=("f",))


def mms_convergence(base_spec: GridSpec, field: AdvectiveField, zeta: float,
                    eta: float, weights: WeightPair, dt: float = 1.25e-5,
                    t_end: float = 0.002, resolutions=(16, 32, 64),
                    mass_tol: float = 1e-10, threads: int = 1
                    ) -> ConvergenceTable:
    """Manufactured-solution convergence of the forced SAW system.

    Each level starts from the manufactured fields at t = 0, advances with
    RK4 (the corresponding analytic sources and boundary data are injected),
    and reports the discrete L2 errors of both fields at t_end.
    """
    if len(resolutions) < 3:
        raise ValueError("a convergence study needs >= 3 resolutions")
    specs = [_level_spec(base_spec, r) for r in resolutions]

    def one_level(spec: GridSpec):
        grid = build_dual_grid(spec)
        system = assemble_saws(grid, field, zeta=zeta, eta=eta,
                               weights=weights)
        forcing = build_mms_forcing(system, field)
        u0 = manufactured_state(system, 0.0)
        _, final = run_simulation(system, "rk4", dt, t_end,
                                  initial_state=u0, forcing=forcing,
                                  mass_tol=mass_tol,
                                  trace_every=max(1, int(round(t_end / dt))))
        exact = manufactured_state(system, final.t)
        dphi, dv = system.split(final.u - exact)
        err_phi = float(np.sqrt(system.w_p @ dphi ** 2))
        err_v = float(np.sqrt(system.w_q @ dv ** 2))
        return err_phi, err_v

    errors = _parallel_map(one_level, specs, threads)
    return ConvergenceTable(resolutions=tuple(resolutions),
                            h=_h_values(specs), errors=np.array(errors),
                            field_names=("phi", "v"))


def _parallel_map(fn, items, threads: int):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def growth_rate(trace: EnergyTrace) -> float:
    """Least-squares slope of ln(E) versus t."""
    if len(trace.times) < 10:
        raise ValueError("growth-rate fit needs at least 10 samples")
    if np.any(trace.energies <= 0.0):
        raise ValueError("growth-rate fit needs positive energies")
    return float(np.polyfit(trace.times, np.log(trace.energies), 1)[0])


# -- spectrum diagnostics -----------------------------------------------------


@dataclass(frozen=True)
class SpectrumReport:
    """Stability diagnostics of a system's right-hand-side operator."""

    max_real_part: float
    purely_imaginary: bool
    method: str
    eigenvalues: np.ndarray | None = None
    symmetric_part_max: float | None = None
    seed: int | None = None


def _sym_part(m: sp.spmatrix) -> sp.csr_matrix:
    m = sp.csr_matrix(m)
    return (0.5 * (m + m.T)).tocsr()


def _power_extreme(apply_op, n: int, rng, iters: int = 200):
    """Largest-magnitude then largest-signed eigenvalue estimate of a
    symmetric operator given through apply_op, by shifted power iteration."""
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = apply_op(v)
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
    rho = abs(lam)
    # dominant eig of (A + rho I) is lam_max + rho >= 0
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    mu = 0.0
    for _ in range(iters):
        w = apply_op(v) + rho * v
        mu = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return -rho
        v = w / nw
    return mu - rho


def spectrum_report(system, mode: str = "bound", max_dense_dofs: int = 1500,
                    seed: int = 0, trials: int = 100) -> SpectrumReport:
    """Spectrum diagnostics for the wave or SAW system.

    ``bound`` mode never forms eigenvalues: it reports the numerical-range
    bound  max Re(lambda) <= max_v  v^T sym(W R) v / (v^T W M v)  with W the
    quadrature weights, M the mass matrix and R the right-hand-side
    operator, estimated over seeded random vectors and sharpened by power
    iteration on the symmetric part.  For conservative weights the symmetric
    part vanishes entrywise, which pins the spectrum to the imaginary axis.

    ``dense`` mode (small systems only) inverts the mass matrix, calls the
    dense eigensolver and verifies every eigenpair residual.
    """
    rng = np.random.default_rng(seed)
    if isinstance(system, WaveSystem):
        r_op = system.block_matrix
        w = system.weight_diag
        sym = _sym_part(sp.diags(w) @ r_op)
        mass_diag = w  # v^T W v
        def mass_solve(v):
            return v / mass_diag
        mass_dense = None
    elif isinstance(system, SawSystem):
        r_op = system.drift_matrix
        w_tilde = np.concatenate([system.w_p, system.w_q / system.zeta])
        sym = _sym_part(sp.diags(w_tilde) @ r_op)
        # energy inner product: diag(w_p) (-perp_lap) for phi, w_q/zeta for v
        wm_phi = sp.diags(system.w_p) @ system.minus_lap_perp
        npz = system.grid.spec.npz
        n2d = system.n_phi // npz
        vol = float(system.w_p[0])

        def mass_apply(v):
            phi, vv = system.split(v)
            return np.concatenate([wm_phi @ phi,
                                   (system.w_q / system.zeta) * vv])

        def mass_solve(v):
            phi, vv = system.split(v)
            cols = phi.reshape((n2d, npz), order="F") / vol
            sol = cg_solve_block(system.minus_lap_perp_2d, cols, tol=1e-12)
            return np.concatenate([sol.reshape(-1, order="F"),
                                   vv * system.zeta / system.w_q])
        mass_dense = None
    else:
        raise TypeError(f"unknown system type {type(system).__name__}")

    sym_max = float(np.max(np.abs(sym.data))) if sym.nnz else 0.0

    if mode == "bound":
        bound = -np.inf
        n = r_op.shape[0]
        for _ in range(trials):
            v = rng.standard_normal(n)
            if isinstance(system, WaveSystem):
                den = float((w * v) @ v)
            else:
                den = float(v @ mass_apply(v))
            bound = max(bound, float(v @ (sym @ v)) / den)
        lam_sym = _power_extreme(lambda v: mass_solve(sym @ v), r_op.shape[0],
                                 rng)
        max_re = max(bound, lam_sym)
        return SpectrumReport(max_real_part=max_re,
                              purely_imaginary=bool(sym_max <= 1e-13),
                              method="bound", symmetric_part_max=sym_max,
                              seed=seed)
    if mode != "dense":
        raise ValueError(f"unknown spectrum mode {mode!r}")
    n = r_op.shape[0]
    if n > max_dense_dofs:
        raise ValueError(
            f"dense mode limited to {max_dense_dofs} dofs, system has {n}")
    r_dense = r_op.toarray()
    if isinstance(system, SawSystem):
        mass_dense = system.mass_matrix.toarray()
        a = np.linalg.solve(mass_dense, r_dense)
    else:
        mass_dense = np.eye(n)
        a = r_dense
    lam, vecs = np.linalg.eig(a)
    # verify pairs on the original pencil, not the factorization
    resid = np.linalg.norm(r_dense @ vecs - mass_dense @ vecs * lam, axis=0)
    scale = np.linalg.norm(r_dense, ord=np.inf)
    bad = resid > 1e-8 * max(scale, 1.0)
    if np.any(bad):
        raise RuntimeError(
            f"{int(bad.sum())} eigenpairs failed residual verification")
    max_re = float(np.max(lam.real))
    return SpectrumReport(max_real_part=max_re,
                          purely_imaginary=bool(np.max(np.abs(lam.real))
                                                <= 1e-10),
                          method="dense", eigenvalues=lam,
                          symmetric_part_max=sym_max, seed=seed)


def spectrum_to_csv(report: SpectrumReport, path) -> None:
    with open(path, "w") as fh:
        fh.write("re,im\n")
        if report.eigenvalues is not None:
            for lam in report.eigenvalues:
                fh.write(f"{lam.real:.17g},{lam.imag:.17g}\n")
        fh.write(f"# max_real_part={report.max_real_part:.17g} "
                 f"purely_imaginary={report.purely_imaginary} "
                 f"method={report.method}\n")


# -- export -------------------------------------------------------------------


def export_system(system, out_dir) -> list:
    """Write every block of a system in Matrix Market form plus a manifest.

    Returns the list of files written.
    """
    os.makedirs(out_dir, exist_ok=True)
    if isinstance(system, WaveSystem):
        blocks = {"T_pq": system.grad_pq, "T_qp": system.grad_qp,
                  "X_p": sp.diags(system.w_p), "X_q": sp.diags(system.w_q)}
        params = {"alpha": system.weights.alpha, "beta": system.weights.beta}
    elif isinstance(system, SawSystem):
        blocks = {"Lperp": system.minus_lap_perp, "C_pq": system.grad_pq,
                  "C_qp": system.grad_qp, "Lpar": system.lap_par,
                  "X_p": sp.diags(system.w_p), "X_q": sp.diags(system.w_q)}
        params = {"alpha": system.weights.alpha, "beta": system.weights.beta,
                  "zeta": system.zeta, "eta": system.eta}
    else:
        raise TypeError(f"unknown system type {type(system).__name__}")
    written = []
    for name, matrix in blocks.items():
        path = os.path.join(out_dir, f"{name}.mtx")
        write_matrix_market(path, matrix)
        written.append(path)
    spec = system.grid.spec
    manifest = os.path.join(out_dir, "manifest.txt")
    with open(manifest, "w") as fh:
        fh.write(f"system: {type(system).__name__}\n")
        fh.write(f"grid: {spec.npx} x {spec.npy} x {spec.npz}\n")
        fh.write(f"domain: {spec.lx:g} x {spec.ly:g} x {spec.lz:.17g}\n")
        for key, val in params.items():
            fh.write(f"{key}: {val:.17g}\n")
        for name, matrix in blocks.items():
            fh.write(f"block {name}: {matrix.shape[0]} x {matrix.shape[1]}\n")
    written.append(manifest)
    return written
