"""Dual staggered Cartesian grids, flat indexing and quadrature weights.

Two uniform grids cover the box [0, Lx] x [0, Ly] x [0, Lz]:

* the p-grid includes the physical boundary in the Dirichlet directions
  (x and y), with spacings dx = Lx/(Npx-1), dy = Ly/(Npy-1); the z
  direction is periodic and stores one endpoint only, dz = Lz/Npz;
* the q-grid is offset by half a cell in every direction.  It has no nodes
  on the Dirichlet boundary (Nqx = Npx-1, Nqy = Npy-1) and wraps in z
  (Nqz = Npz).

Scalar fields on either grid are stored as flat vectors with x fastest:
``flat = i + Nx*(j + Ny*k)``.  The diagonal quadrature weights realize the
discrete L2 norms: trapezoidal weights on the p-grid (half weight on each
Dirichlet face, so corner nodes in the x-y section carry a quarter weight),
and the uniform cell volume on the q-grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

P, Q = "p", "q"
_TAGS = (P, Q)


def _check_tag(tag: str) -> str:
    if tag not in _TAGS:
        raise ValueError(f"grid tag must be 'p' or 'q', got {tag!r}")
    return tag


@dataclass(frozen=True)
class GridSpec:
    """Domain extents, p-grid node counts and boundary kinds."""

    lx: float
    ly: float
    lz: float = 2.0 * np.pi
    npx: int = 16
    npy: int = 16
    npz: int = 16
    bc_x: str = "dirichlet"
    bc_y: str = "dirichlet"
    bc_z: str = "periodic"

    def __post_init__(self):
        for name, value in (("lx", self.lx), ("ly", self.ly), ("lz", self.lz)):
            if not value > 0.0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.npx < 3 or self.npy < 3:
            raise ValueError("npx and npy must be at least 3")
        if self.npz < 2:
            raise ValueError("npz must be at least 2")
        if self.bc_x != "dirichlet" or self.bc_y != "dirichlet":
            raise ValueError("x and y support homogeneous Dirichlet only")
        if self.bc_z != "periodic":
            raise ValueError("z supports periodic boundaries only")

    @property
    def dx(self) -> float:
        return self.lx / (self.npx - 1)

    @property
    def dy(self) -> float:
        return self.ly / (self.npy - 1)

    @property
    def dz(self) -> float:
        return self.lz / self.npz

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy * self.dz


@dataclass(frozen=True)
class DualGrid:
    """The staggered grid pair built from a :class:`GridSpec`."""

    spec: GridSpec
    p_coords: tuple[np.ndarray, np.ndarray, np.ndarray]
    q_coords: tuple[np.ndarray, np.ndarray, np.ndarray]

    @property
    def np_shape(self) -> tuple[int, int, int]:
        return (self.spec.npx, self.spec.npy, self.spec.npz)

    @property
    def nq_shape(self) -> tuple[int, int, int]:
        return (self.spec.npx - 1, self.spec.npy - 1, self.spec.npz)

    def shape(self, tag: str) -> tuple[int, int, int]:
        return self.np_shape if _check_tag(tag) == P else self.nq_shape

    def size(self, tag: str) -> int:
        nx, ny, nz = self.shape(tag)
        return nx * ny * nz

    def coords(self, tag: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.p_coords if _check_tag(tag) == P else self.q_coords

    def mesh(self, tag: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flat node coordinates (x, y, z), ordered like the dof vector."""
        cx, cy, cz = self.coords(tag)
        gx, gy, gz = np.meshgrid(cx, cy, cz, indexing="ij")
        return (gx.ravel(order="F"), gy.ravel(order="F"), gz.ravel(order="F"))

    def flat_index(self, tag: str, i, j, k):
        """Map (i, j, k) node indices to the flat dof index (x fastest)."""
        nx, ny, nz = self.shape(tag)
        i, j, k = (np.asarray(v) for v in (i, j, k))
        if (np.any(i < 0) or np.any(i >= nx) or np.any(j < 0)
                or np.any(j >= ny) or np.any(k < 0) or np.any(k >= nz)):
            raise IndexError(f"index out of range for {tag}-grid {nx, ny, nz}")
        out = i + nx * (j + ny * k)
        return int(out) if out.ndim == 0 else out

    def unflatten(self, tag: str, index):
        """Inverse of :meth:`flat_index`."""
        nx, ny, nz = self.shape(tag)
        index = np.asarray(index)
        if np.any(index < 0) or np.any(index >= nx * ny * nz):
            raise IndexError(f"flat index out of range for {tag}-grid")
        i = index % nx
        j = (index // nx) % ny
        k = index // (nx * ny)
        if index.ndim == 0:
            return int(i), int(j), int(k)
        return i, j, k

    def sample(self, tag: str, fn) -> np.ndarray:
        """Evaluate ``fn(x, y, z)`` at every node, returned as a dof vector."""
        return np.asarray(fn(*self.mesh(tag)), dtype=float)

    def interior_p_mask(self) -> np.ndarray:
        """True at p nodes strictly inside the Dirichlet boundary."""
        nx, ny, nz = self.np_shape
        ii, jj, _ = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz),
                                indexing="ij")
        mask = (ii > 0) & (ii < nx - 1) & (jj > 0) & (jj < ny - 1)
        return mask.ravel(order="F")


@dataclass
class StaggeredScalar:
    """A scalar field's dof vector tagged with the grid it lives on."""

    grid_tag: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        _check_tag(self.grid_tag)
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")


@dataclass(frozen=True)
class QuadratureWeights:
    """Diagonal quadrature matrix (stored as its diagonal) for one grid."""

    grid_tag: str
    diag: np.ndarray

    def norm_sq(self, values: np.ndarray) -> float:
        """Discrete L2 norm squared, sum_i w_i v_i^2."""
        return float(self.diag @ (np.asarray(values) ** 2))

    def norm(self, values: np.ndarray) -> float:
        return self.norm_sq(values) ** 0.5


def build_dual_grid(spec: GridSpec) -> DualGrid:
    """Construct the staggered grid pair for ``spec``.

    In the Dirichlet directions the p nodes span [0, L] inclusive and the q
    nodes sit at the cell midpoints, strictly inside the domain.  In z, both
    grids store Npz nodes and the q nodes are shifted by dz/2.
    """
    px = np.linspace(0.0, spec.lx, spec.npx)
    py = np.linspace(0.0, spec.ly, spec.npy)
    pz = spec.dz * np.arange(spec.npz)
    qx = px[:-1] + 0.5 * spec.dx
    qy = py[:-1] + 0.5 * spec.dy
    qz = pz + 0.5 * spec.dz
    return DualGrid(spec=spec, p_coords=(px, py, pz), q_coords=(qx, qy, qz))


def quadrature_weights(grid: DualGrid, tag: str) -> QuadratureWeights:
    """Quadrature weights realizing the discrete L2 norm on one grid.

    q-grid: every node carries the cell volume dx*dy*dz.  p-grid: trapezoidal
    rule in the Dirichlet directions (factor 1/2 on each boundary face) and
    the periodic midpoint rule in z (factor 1).  Both integrate constants
    exactly, so the weights on either grid sum to the domain volume.
    """
    spec = grid.spec
    vol = spec.cell_volume
    if _check_tag(tag) == Q:
        return QuadratureWeights(Q, np.full(grid.size(Q), vol))
    fx = np.ones(spec.npx)
    fx[[0, -1]] = 0.5
    fy = np.ones(spec.npy)
    fy[[0, -1]] = 0.5
    fz = np.ones(spec.npz)
    diag = vol * np.kron(fz, np.kron(fy, fx))
    return QuadratureWeights(P, diag)
