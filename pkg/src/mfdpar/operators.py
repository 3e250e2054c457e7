"""Sparse discrete operators on the dual staggered grids.

All operators are tensor products of small 1-D factors (a staggered
difference or a transverse two-point average per direction) assembled with
sparse Kronecker products, so each interior row of a first-derivative
stencil couples the 8 staggered neighbours with coefficients +-1/(4 dx):

    [D_x f](x_i, y_j, z_k) = ( avg4 f(x_{i+1/2}, ...) -
                               avg4 f(x_{i-1/2}, ...) ) / dx,

where avg4 is the average over the four transverse half-shifted neighbours.
The z direction wraps periodically.  Rows of q->p stencils at Dirichlet
boundary p nodes fall back to one-sided differences built from the existing
q nodes only; those rows never enter the energy-conserving systems, which
keep interior p nodes as the only true degrees of freedom.

The directional derivative along the advective field b is discretized in two
exchangeable forms, advective (b . grad f, with b at the target nodes) and
divergence (div(b f), with b at the source nodes), and the weighted average
of the two gives the transport operator family.  For weights summing to one
the pair of inter-grid operators is adjoint up to sign, which is what makes
the wave systems energy-preserving.

The parallel Laplacian follows the support-operator construction: gradients
of a q field are formed at all p nodes (with half-spacing one-sided
differences against zero-valued boundary points next to the Dirichlet
faces), multiplied by the outer-product matrix b b^T evaluated at the p
nodes, and mapped back to the q grid by the negative weighted adjoint of the
gradient.  That last choice reproduces the central divergence stencil at
interior nodes and makes the quadrature-weighted matrix symmetric negative
semidefinite by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .field import AdvectiveField, sample_b
from .grid import DualGrid, quadrature_weights

Q_TO_P = "q_to_p"
P_TO_Q = "p_to_q"
_DIRS = ("x", "y", "z")


@dataclass(frozen=True)
class SparseOperator:
    """A CSR matrix tagged with its source and target grids."""

    src_tag: str
    dst_tag: str
    matrix: sp.csr_matrix

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        if isinstance(other, SparseOperator):
            if other.dst_tag != self.src_tag:
                raise ValueError(
                    f"cannot compose {other.dst_tag}->... into "
                    f"{self.src_tag}->{self.dst_tag} operator")
            return SparseOperator(other.src_tag, self.dst_tag,
                                  (self.matrix @ other.matrix).tocsr())
        return self.matrix @ other


@dataclass(frozen=True)
class WeightPair:
    """Weights of the advective form in the two transport operators.

    ``alpha`` weights the q->p operator, ``beta`` the p->q one; the
    energy-preserving family is alpha + beta = 1.  Other combinations are
    allowed on purpose (they are the non-conservative counterexamples).
    """

    alpha: float
    beta: float

    def __post_init__(self):
        for name, w in (("alpha", self.alpha), ("beta", self.beta)):
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {w}")

    @property
    def conservative(self) -> bool:
        return abs(self.alpha + self.beta - 1.0) <= 1e-12


# -- 1-D factors -------------------------------------------------------------


def _diff_q_to_p(n_p: int, d: float) -> sp.csr_matrix:
    """Staggered difference, q layer -> p layer, one-sided boundary rows."""
    rows, cols, vals = [], [], []
    for i in range(n_p):
        lo, hi = i - 1, i
        if i == 0:
            lo, hi = 0, 1
        elif i == n_p - 1:
            lo, hi = n_p - 3, n_p - 2
        rows += [i, i]
        cols += [lo, hi]
        vals += [-1.0 / d, 1.0 / d]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_p, n_p - 1))


def _avg_q_to_p(n_p: int) -> sp.csr_matrix:
    """Two-point transverse average, q layer -> p layer; one-sided at ends."""
    rows, cols, vals = [], [], []
    for i in range(n_p):
        if i == 0:
            rows += [0]
            cols += [0]
            vals += [1.0]
        elif i == n_p - 1:
            rows += [i]
            cols += [n_p - 2]
            vals += [1.0]
        else:
            rows += [i, i]
            cols += [i - 1, i]
            vals += [0.5, 0.5]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_p, n_p - 1))


def _diff_star(n_p: int, d: float) -> sp.csr_matrix:
    """Staggered difference with half-spacing one-sided boundary rows.

    The boundary rows difference the first interior q layer against a
    zero-valued point on the physical boundary at distance d/2, giving the
    +-2/d coefficients of the support-operator gradient.
    """
    m = _diff_q_to_p(n_p, d).tolil()
    m[0] = 0.0
    m[0, 0] = 2.0 / d
    m[n_p - 1] = 0.0
    m[n_p - 1, n_p - 2] = -2.0 / d
    return m.tocsr()


def _avg_zero(n_p: int) -> sp.csr_matrix:
    """Transverse average with zero boundary rows (tangential derivatives
    of homogeneous boundary data vanish identically)."""
    m = _avg_q_to_p(n_p).tolil()
    m[0] = 0.0
    m[n_p - 1] = 0.0
    return m.tocsr()


def _diff_p_to_q(n_p: int, d: float) -> sp.csr_matrix:
    n_q = n_p - 1
    rows = np.repeat(np.arange(n_q), 2)
    cols = np.column_stack([np.arange(n_q), np.arange(1, n_p)]).ravel()
    vals = np.tile([-1.0 / d, 1.0 / d], n_q)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_q, n_p))


def _avg_p_to_q(n_p: int) -> sp.csr_matrix:
    n_q = n_p - 1
    rows = np.repeat(np.arange(n_q), 2)
    cols = np.column_stack([np.arange(n_q), np.arange(1, n_p)]).ravel()
    vals = np.full(2 * n_q, 0.5)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_q, n_p))


def _diff_z(n: int, d: float, mapping: str) -> sp.csr_matrix:
    rows = np.repeat(np.arange(n), 2)
    if mapping == Q_TO_P:
        cols = np.column_stack([(np.arange(n) - 1) % n, np.arange(n)]).ravel()
    else:
        cols = np.column_stack([np.arange(n), (np.arange(n) + 1) % n]).ravel()
    vals = np.tile([-1.0 / d, 1.0 / d], n)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _avg_z(n: int, mapping: str) -> sp.csr_matrix:
    m = _diff_z(n, 1.0, mapping).tolil()
    m[m.nonzero()] = 0.5
    return m.tocsr()


def _kron3(az, ay, ax) -> sp.csr_matrix:
    # dof vectors are x-fastest, so x is the innermost factor
    return sp.kron(az, sp.kron(ay, ax, format="csr"), format="csr")


# -- first-derivative stencils and transport forms ---------------------------


def derivative_stencil(grid: DualGrid, direction: str,
                       mapping: str) -> SparseOperator:
    """Single-direction staggered derivative between the two grids.

    Interior rows hold the 8-point +-1/(4 d) stencil; z wraps periodically.
    For ``q_to_p``, rows at Dirichlet boundary p nodes use one-sided
    differences over the existing q nodes (first-order; they are eliminated
    from the conservative systems).
    """
    if direction not in _DIRS:
        raise ValueError(f"direction must be one of {_DIRS}")
    if mapping not in (Q_TO_P, P_TO_Q):
        raise ValueError(f"mapping must be {Q_TO_P!r} or {P_TO_Q!r}")
    spec = grid.spec
    if mapping == Q_TO_P:
        xf = _diff_q_to_p(spec.npx, spec.dx) if direction == "x" \
            else _avg_q_to_p(spec.npx)
        yf = _diff_q_to_p(spec.npy, spec.dy) if direction == "y" \
            else _avg_q_to_p(spec.npy)
        zf = _diff_z(spec.npz, spec.dz, Q_TO_P) if direction == "z" \
            else _avg_z(spec.npz, Q_TO_P)
        return SparseOperator("q", "p", _kron3(zf, yf, xf))
    xf = _diff_p_to_q(spec.npx, spec.dx) if direction == "x" \
        else _avg_p_to_q(spec.npx)
    yf = _diff_p_to_q(spec.npy, spec.dy) if direction == "y" \
        else _avg_p_to_q(spec.npy)
    zf = _diff_z(spec.npz, spec.dz, P_TO_Q) if direction == "z" \
        else _avg_z(spec.npz, P_TO_Q)
    return SparseOperator("p", "q", _kron3(zf, yf, xf))


def _b_diags(field: AdvectiveField, grid: DualGrid, tag: str):
    bx, by, bz = sample_b(field, grid, tag)
    return [sp.diags(c.values) for c in (bx, by, bz)]


def advective_form(grid: DualGrid, field: AdvectiveField,
                   mapping: str) -> SparseOperator:
    """b . grad(f): derivative stencils weighted by b at the target nodes."""
    dst = "p" if mapping == Q_TO_P else "q"
    diags = _b_diags(field, grid, dst)
    m = sum(diags[i] @ derivative_stencil(grid, d, mapping).matrix
            for i, d in enumerate(_DIRS))
    return SparseOperator("q" if dst == "p" else "p", dst, m.tocsr())


def divergence_form(grid: DualGrid, field: AdvectiveField,
                    mapping: str) -> SparseOperator:
    """div(b f): derivative stencils applied to b f, b at the source nodes."""
    src = "q" if mapping == Q_TO_P else "p"
    diags = _b_diags(field, grid, src)
    m = sum(derivative_stencil(grid, d, mapping).matrix @ diags[i]
            for i, d in enumerate(_DIRS))
    return SparseOperator(src, "p" if src == "q" else "q", m.tocsr())


def restrict_p_rows(grid: DualGrid, m: sp.spmatrix) -> sp.csr_matrix:
    """Keep only the rows of interior p nodes."""
    return sp.csr_matrix(m)[grid.interior_p_mask()]


def split_p_columns(grid: DualGrid, m: sp.spmatrix):
    """Split the p columns into (interior, boundary) blocks."""
    mask = grid.interior_p_mask()
    csc = sp.csc_matrix(m)
    return csc[:, mask].tocsr(), csc[:, ~mask].tocsr()


def parallel_gradient(grid: DualGrid, field: AdvectiveField, mapping: str,
                      weights: WeightPair) -> SparseOperator:
    """Weighted average of the advective and divergence transport forms.

    Returned on the true degrees of freedom: boundary p nodes, which carry
    homogeneous Dirichlet values, are eliminated (rows for ``q_to_p``,
    columns for ``p_to_q``).
    """
    w = weights.alpha if mapping == Q_TO_P else weights.beta
    adv = advective_form(grid, field, mapping)
    div = divergence_form(grid, field, mapping)
    m = (w * adv.matrix + (1.0 - w) * div.matrix).tocsr()
    if mapping == Q_TO_P:
        return SparseOperator("q", "p", restrict_p_rows(grid, m))
    return SparseOperator("p", "q", split_p_columns(grid, m)[0])


def parallel_gradient_boundary(grid: DualGrid, field: AdvectiveField,
                               weights: WeightPair) -> sp.csr_matrix:
    """Boundary-column block of the p->q transport operator.

    Multiplies known boundary values of the p field (zero in the
    homogeneous problems, manufactured data in the verification runs).
    """
    adv = advective_form(grid, field, P_TO_Q)
    div = divergence_form(grid, field, P_TO_Q)
    m = weights.beta * adv.matrix + (1.0 - weights.beta) * div.matrix
    return split_p_columns(grid, m)[1]


# -- perpendicular Laplacian -------------------------------------------------


def _lap1d(n: int, d: float) -> sp.csr_matrix:
    return sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n),
                    format="csr") / d ** 2


def perp_laplacian_2d(grid: DualGrid) -> sp.csr_matrix:
    """One z plane of the perpendicular Laplacian on interior p nodes."""
    spec = grid.spec
    nxi, nyi = spec.npx - 2, spec.npy - 2
    return (sp.kron(sp.identity(nyi), _lap1d(nxi, spec.dx), format="csr")
            + sp.kron(_lap1d(nyi, spec.dy), sp.identity(nxi), format="csr"))


def perp_laplacian(grid: DualGrid) -> SparseOperator:
    """5-point d_xx + d_yy on interior p nodes (no z coupling).

    Homogeneous Dirichlet rows and columns are eliminated; the negated
    matrix is symmetric positive definite.
    """
    m = sp.kron(sp.identity(grid.spec.npz), perp_laplacian_2d(grid),
                format="csr")
    return SparseOperator("p", "p", m)


def perp_laplacian_boundary(grid: DualGrid) -> sp.csr_matrix:
    """Coupling of interior perpendicular-Laplacian rows to boundary values."""
    spec = grid.spec
    full = (_kron3(sp.identity(spec.npz), sp.identity(spec.npy),
                   _lap1d(spec.npx, spec.dx))
            + _kron3(sp.identity(spec.npz), _lap1d(spec.npy, spec.dy),
                     sp.identity(spec.npx)))
    return split_p_columns(grid, restrict_p_rows(grid, full))[1]


# -- parallel Laplacian (support-operator scheme) ----------------------------


@dataclass(frozen=True)
class SupportOperatorParts:
    """Pieces of the support-operator parallel Laplacian.

    ``grads`` maps a q field to its (x, y, z) gradient components at every
    p node; ``p_weight`` holds the boundary-aware trapezoidal factors and
    ``b_p`` the field components at the p nodes.
    """

    grads: tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]
    p_weight: np.ndarray
    b_p: tuple[np.ndarray, np.ndarray, np.ndarray]

    def apply_divergence(self, grad_values) -> np.ndarray:
        """Map gradient components at p nodes back to the q grid.

        Contracts with b b^T and applies the negative weighted adjoint of
        the gradient, which is the central divergence stencil at interior
        q nodes and the star-point variant next to the boundary.
        """
        bdotg = sum(b * g for b, g in zip(self.b_p, grad_values))
        out = 0.0
        for gmat, b in zip(self.grads, self.b_p):
            out = out - gmat.T @ (self.p_weight * b * bdotg)
        return out


def support_operator_parts(grid: DualGrid,
                           field: AdvectiveField) -> SupportOperatorParts:
    spec = grid.spec
    gx = _kron3(_avg_z(spec.npz, Q_TO_P), _avg_zero(spec.npy),
                _diff_star(spec.npx, spec.dx))
    gy = _kron3(_avg_z(spec.npz, Q_TO_P), _diff_star(spec.npy, spec.dy),
                _avg_zero(spec.npx))
    gz = _kron3(_diff_z(spec.npz, spec.dz, Q_TO_P), _avg_zero(spec.npy),
                _avg_zero(spec.npx))
    # X_p / X_q: the cell volume cancels, the boundary halving stays
    fx = np.ones(spec.npx)
    fx[[0, -1]] = 0.5
    fy = np.ones(spec.npy)
    fy[[0, -1]] = 0.5
    weight = np.kron(np.ones(spec.npz), np.kron(fy, fx))
    x, y, _ = grid.mesh("p")
    bx, by = field.b_xy(x, y)
    return SupportOperatorParts(grads=(gx, gy, gz), p_weight=weight,
                                b_p=(bx, by, np.full_like(bx, -1.0)))


def parallel_laplacian(grid: DualGrid,
                       field: AdvectiveField) -> SparseOperator:
    """Support-operator discretization of grad_par(grad_par f) on the q grid.

    Assembled as -G^T X_p (b b^T) G with G the staggered gradient to the p
    grid, which is symmetric by construction and negative semidefinite
    because b b^T is positive semidefinite.  The tiny assembly-order
    asymmetry of the sparse products is removed explicitly.
    """
    parts = support_operator_parts(grid, field)
    n_q = grid.size("q")
    m = sp.csr_matrix((n_q, n_q))
    for gi, bi in zip(parts.grads, parts.b_p):
        wi = sp.diags(parts.p_weight * bi)
        for gj, bj in zip(parts.grads, parts.b_p):
            m = m - gi.T @ wi @ sp.diags(bj) @ gj
    m = 0.5 * (m + m.T)
    return SparseOperator("q", "q", m.tocsr())


def laplacian_boundary_injection(grid: DualGrid,
                                 parts: SupportOperatorParts,
                                 value_fn, grad_fn) -> np.ndarray:
    """Contribution of inhomogeneous Dirichlet data to the parallel
    Laplacian, as a vector on the q grid.

    ``value_fn(x, y, z)`` supplies the boundary data (sampled at the
    boundary points paired with the half-spacing gradient rows) and
    ``grad_fn(x, y, z) -> (gx, gy, gz)`` its gradient, used where the
    assembled gradient rows are zero: tangential directions on a face and
    every component along the box edges.
    """
    spec = grid.spec
    nx, ny, nz = grid.np_shape
    px, py, pz = grid.p_coords
    qx, qy, qz = grid.q_coords
    n_p = grid.size("p")
    gdata = [np.zeros(n_p) for _ in range(3)]

    def set_vals(component, ii, jj, kk, vals):
        idx = grid.flat_index("p", ii, jj, kk)
        gdata[component][idx] = vals

    # normal rows on the x and y faces: -(2/d) * average of the four
    # boundary points at the transverse half positions
    jj, kk = np.meshgrid(np.arange(1, ny - 1), np.arange(nz), indexing="ij")
    for i_face, sign, xval in ((0, -1.0, 0.0), (nx - 1, 1.0, spec.lx)):
        acc = 0.0
        for dj in (-1, 0):
            for dk in (-1, 0):
                acc = acc + value_fn(xval, qy[jj + dj], qz[(kk + dk) % nz])
        set_vals(0, np.full_like(jj, i_face), jj, kk,
                 sign * (2.0 / spec.dx) * 0.25 * acc)
    ii, kk = np.meshgrid(np.arange(1, nx - 1), np.arange(nz), indexing="ij")
    for j_face, sign, yval in ((0, -1.0, 0.0), (ny - 1, 1.0, spec.ly)):
        acc = 0.0
        for di in (-1, 0):
            for dk in (-1, 0):
                acc = acc + value_fn(qx[ii + di], yval, qz[(kk + dk) % nz])
        set_vals(1, ii, np.full_like(ii, j_face), kk,
                 sign * (2.0 / spec.dy) * 0.25 * acc)

    # rows whose assembled stencil is identically zero get the analytic
    # data gradient: tangential components on the faces, everything on edges
    mask3 = np.zeros((nx, ny, nz), dtype=bool)
    mask3[[0, -1], :, :] = True
    mask3[:, [0, -1], :] = True
    on_x = np.zeros_like(mask3)
    on_x[[0, -1], :, :] = True
    on_y = np.zeros_like(mask3)
    on_y[:, [0, -1], :] = True
    gx3, gy3, gz3 = np.meshgrid(px, py, pz, indexing="ij")
    flat = mask3.ravel(order="F")
    gvx, gvy, gvz = grad_fn(gx3.ravel(order="F")[flat],
                            gy3.ravel(order="F")[flat],
                            gz3.ravel(order="F")[flat])
    on_edge = (on_x & on_y).ravel(order="F")[flat]
    tang_x = (~on_x & on_y).ravel(order="F")[flat]
    tang_y = (on_x & ~on_y).ravel(order="F")[flat]
    idx = np.flatnonzero(flat)
    gdata[0][idx[tang_x | on_edge]] = gvx[tang_x | on_edge]
    gdata[1][idx[tang_y | on_edge]] = gvy[tang_y | on_edge]
    gdata[2][idx] = gvz
    return parts.apply_divergence(gdata)


# -- composition consistency -------------------------------------------------


@dataclass(frozen=True)
class CompositionReport:
    """Residuals of the two gradient compositions against the direct
    support-operator assembly, on q rows whose stencils stay interior."""

    residual_adv_of_div: float
    residual_div_of_adv: float
    matching_weights: tuple[float, float]
    symmetry_residual: float
    max_quadratic_form: float

    @property
    def matching_residual(self) -> float:
        return min(self.residual_adv_of_div, self.residual_div_of_adv)


def _interior_q_mask(grid: DualGrid) -> np.ndarray:
    nqx, nqy, nqz = grid.nq_shape
    aa, bb, _ = np.meshgrid(np.arange(nqx), np.arange(nqy), np.arange(nqz),
                            indexing="ij")
    mask = (aa > 0) & (aa < nqx - 1) & (bb > 0) & (bb < nqy - 1)
    return mask.ravel(order="F")


def laplacian_composition_check(grid: DualGrid, field: AdvectiveField,
                                seed: int = 0,
                                trials: int = 100) -> CompositionReport:
    """Compare q->q gradient compositions with the direct assembly.

    ``div_of_adv`` composes the divergence-form p->q operator with the
    advective-form q->p one (weights (1, 0)); that pairing places b b^T at
    the intermediate p nodes and reproduces the support-operator matrix
    entry for entry away from the boundary.  The opposite pairing
    (weights (0, 1)) carries b on the q grid instead and is reported for
    comparison.  Also reports the direct matrix's symmetry residual and the
    largest quadrature-weighted quadratic form over random vectors (<= 0
    for a negative-semidefinite operator).
    """
    direct = parallel_laplacian(grid, field).matrix
    mask = _interior_q_mask(grid)

    def residual(w_pq, w_qp):
        comp = (parallel_gradient(grid, field, P_TO_Q, WeightPair(w_pq, w_qp))
                .matrix
                @ parallel_gradient(grid, field, Q_TO_P,
                                    WeightPair(w_pq, w_qp)).matrix)
        diff = (comp - direct).tocsr()[mask]
        return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0

    res_div_of_adv = residual(1.0, 0.0)
    res_adv_of_div = residual(0.0, 1.0)
    sym = (direct - direct.T).tocsr()
    sym_res = float(np.max(np.abs(sym.data))) if sym.nnz else 0.0
    rng = np.random.default_rng(seed)
    wq = quadrature_weights(grid, "q").diag
    qmax = -np.inf
    for _ in range(trials):
        v = rng.standard_normal(direct.shape[0])
        qmax = max(qmax, float((wq * v) @ (direct @ v)))
    weights = ((1.0, 0.0) if res_div_of_adv <= res_adv_of_div else (0.0, 1.0))
    return CompositionReport(residual_adv_of_div=res_adv_of_div,
                             residual_div_of_adv=res_div_of_adv,
                             matching_weights=weights,
                             symmetry_residual=sym_res,
                             max_quadratic_form=qmax)


# -- Matrix Market export ----------------------------------------------------

_MM_HEADER = "%%MatrixMarket matrix coordinate real general"


def write_matrix_market(path, m) -> None:
    """Write a sparse matrix in 1-based Matrix Market coordinate format."""
    coo = sp.coo_matrix(m)
    coo.eliminate_zeros()
    with open(path, "w") as fh:
        fh.write(_MM_HEADER + "\n")
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")


def read_matrix_market(path) -> sp.csr_matrix:
    """Read a Matrix Market coordinate file written by this package."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != _MM_HEADER:
            raise ValueError(f"unsupported Matrix Market header: {header!r}")
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        nrows, ncols, nnz = (int(tok) for tok in line.split())
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        for n in range(nnz):
            i, j, v = fh.readline().split()
            rows[n], cols[n], vals[n] = int(i) - 1, int(j) - 1, float(v)
    return sp.csr_matrix((vals, (rows, cols)), shape=(nrows, ncols))
