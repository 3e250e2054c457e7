"""Block systems for the parallel wave model and the electrostatic shear
Alfven waves (SAW), their discrete energies, and the SAW dispersion relation.

Wave model: two scalars p (p-grid, homogeneous Dirichlet in x, y) and q
(q-grid) coupled through the inter-grid transport operators,

    d/dt [p; q] = [[0, G_pq], [G_qp, 0]] [p; q].

For weights summing to one the quadrature-weighted block operator is skew,
so the energy  E = (||p||^2 + ||q||^2) / 2  is conserved exactly by the
spatial discretization.

SAW system: electrostatic potential phi (p-grid) and electron parallel
velocity v (q-grid),

    [[-perp_lap, 0], [0, I]] d/dt [phi; v]
        = [[0, G_pq], [zeta G_qp, eta par_lap]] [phi; v],

with zeta the ion/electron mass ratio and eta the parallel diffusivity.
The energy  E = (phi^T X_p (-perp_lap) phi + (1/zeta) v^T X_q v) / 2  decays
for eta > 0 and is conserved for eta = 0 (with conservative weights).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .field import AdvectiveField
from .grid import DualGrid, quadrature_weights
from .operators import (P_TO_Q, Q_TO_P, WeightPair, parallel_gradient,
                        parallel_laplacian, perp_laplacian, perp_laplacian_2d)


@dataclass(frozen=True)
class WaveSystem:
    """Assembled wave model on the true (interior) degrees of freedom."""

    grid: DualGrid
    weights: WeightPair
    grad_pq: sp.csr_matrix
    grad_qp: sp.csr_matrix
    w_p: np.ndarray
    w_q: np.ndarray

    @property
    def n_p(self) -> int:
        return self.grad_pq.shape[0]

    @property
    def n_q(self) -> int:
        return self.grad_qp.shape[0]

    @property
    def n_dof(self) -> int:
        return self.n_p + self.n_q

    @property
    def block_matrix(self) -> sp.csr_matrix:
        """The full right-hand-side operator [[0, G_pq], [G_qp, 0]]."""
        return sp.bmat([[None, self.grad_pq], [self.grad_qp, None]],
                       format="csr")

    @property
    def weight_diag(self) -> np.ndarray:
        return np.concatenate([self.w_p, self.w_q])

    def split(self, u: np.ndarray):
        return u[:self.n_p], u[self.n_p:]


def assemble_wave(grid: DualGrid, field: AdvectiveField,
                  weights: WeightPair) -> WaveSystem:
    """Build the wave system; p keeps interior nodes only, q keeps all."""
    c_pq = parallel_gradient(grid, field, Q_TO_P, weights)
    c_qp = parallel_gradient(grid, field, P_TO_Q, weights)
    w_p_full = quadrature_weights(grid, "p").diag
    w_p = w_p_full[grid.interior_p_mask()]
    w_q = quadrature_weights(grid, "q").diag
    return WaveSystem(grid=grid, weights=weights, grad_pq=c_pq.matrix,
                      grad_qp=c_qp.matrix, w_p=w_p, w_q=w_q)


@dataclass(frozen=True)
class SawSystem:
    """Assembled SAW system on the true degrees of freedom.

    ``minus_lap_perp`` is the symmetric positive definite mass block
    -perp_lap; ``minus_lap_perp_2d`` is its single z-plane factor (there is
    no z coupling), which the time integrator inverts plane by plane.
    """

    grid: DualGrid
    weights: WeightPair
    zeta: float
    eta: float
    minus_lap_perp: sp.csr_matrix
    minus_lap_perp_2d: sp.csr_matrix
    grad_pq: sp.csr_matrix
    grad_qp: sp.csr_matrix
    lap_par: sp.csr_matrix
    w_p: np.ndarray
    w_q: np.ndarray

    @property
    def n_phi(self) -> int:
        return self.minus_lap_perp.shape[0]

    @property
    def n_v(self) -> int:
        return self.lap_par.shape[0]

    @property
    def n_dof(self) -> int:
        return self.n_phi + self.n_v

    def split(self, u: np.ndarray):
        return u[:self.n_phi], u[self.n_phi:]

    @property
    def mass_matrix(self) -> sp.csr_matrix:
        return sp.block_diag([self.minus_lap_perp,
                              sp.identity(self.n_v, format="csr")],
                             format="csr")

    @property
    def drift_matrix(self) -> sp.csr_matrix:
        """[[0, G_pq], [zeta G_qp, eta par_lap]]."""
        return sp.bmat([[None, self.grad_pq],
                        [self.zeta * self.grad_qp, self.eta * self.lap_par]],
                       format="csr")

    @property
    def mass_matrix_scaled(self) -> sp.csr_matrix:
        """diag(-perp_lap, I/zeta); the row scaling used for energy
        accounting and the diffusion-free Crank-Nicolson step."""
        return sp.block_diag(
            [self.minus_lap_perp,
             sp.identity(self.n_v, format="csr") / self.zeta],
            format="csr")

    @property
    def drift_matrix_scaled(self) -> sp.csr_matrix:
        """[[0, G_pq], [G_qp, eta/zeta par_lap]], pairing with the scaled
        mass matrix."""
        return sp.bmat([[None, self.grad_pq],
                        [self.grad_qp, (self.eta / self.zeta) * self.lap_par]],
                       format="csr")

    @property
    def weight_diag(self) -> np.ndarray:
        return np.concatenate([self.w_p, self.w_q])


def assemble_saws(grid: DualGrid, field: AdvectiveField, zeta: float = 2500.0,
                  eta: float = 4.0 / 3.0,
                  weights: WeightPair | None = None) -> SawSystem:
    """Build the SAW system; phi on interior p nodes, v on the q grid."""
    if weights is None:
        weights = WeightPair(0.5, 0.5)
    if not zeta > 0.0:
        raise ValueError(f"zeta must be positive, got {zeta}")
    if eta < 0.0:
        raise ValueError(f"eta must be nonnegative, got {eta}")
    c_pq = parallel_gradient(grid, field, Q_TO_P, weights)
    c_qp = parallel_gradient(grid, field, P_TO_Q, weights)
    lap_par = parallel_laplacian(grid, field)
    minus_lap = (-perp_laplacian(grid).matrix).tocsr()
    minus_lap_2d = (-perp_laplacian_2d(grid)).tocsr()
    w_p = quadrature_weights(grid, "p").diag[grid.interior_p_mask()]
    w_q = quadrature_weights(grid, "q").diag
    return SawSystem(grid=grid, weights=weights, zeta=zeta, eta=eta,
                     minus_lap_perp=minus_lap, minus_lap_perp_2d=minus_lap_2d,
                     grad_pq=c_pq.matrix, grad_qp=c_qp.matrix,
                     lap_par=lap_par.matrix, w_p=w_p, w_q=w_q)


def discrete_energy(system, u: np.ndarray) -> float:
    """Quadrature-weighted energy of a state vector.

    Wave model: (||p||^2 + ||q||^2)/2.  SAW: the field energy
    (phi^T X_p (-perp_lap) phi + (1/zeta) v^T X_q v)/2, positive definite on
    the interior degrees of freedom.
    """
    if isinstance(system, WaveSystem):
        p, q = system.split(u)
        return 0.5 * (float(system.w_p @ p ** 2) + float(system.w_q @ q ** 2))
    if isinstance(system, SawSystem):
        phi, v = system.split(u)
        grad_term = float((system.w_p * phi) @ (system.minus_lap_perp @ phi))
        kinetic = float(system.w_q @ v ** 2) / system.zeta
        return 0.5 * (grad_term + kinetic)
    raise TypeError(f"unknown system type {type(system).__name__}")


def default_initial_state(system) -> np.ndarray:
    """Smooth nonzero initial data compatible with the boundary conditions.

    Low-order trigonometric products that vanish on the Dirichlet boundary;
    any smooth nonzero choice distinguishes the conservative and
    non-conservative weightings.
    """
    grid = system.grid
    spec = grid.spec
    mask = grid.interior_p_mask()
    xp, yp, zp = grid.mesh("p")
    xq, yq, zq = grid.mesh("q")
    top = (np.sin(np.pi * xp / spec.lx) * np.sin(np.pi * yp / spec.ly)
           * np.cos(2.0 * np.pi * zp / spec.lz))[mask]
    bottom = (np.sin(np.pi * xq / spec.lx) * np.sin(np.pi * yq / spec.ly)
              * np.sin(2.0 * np.pi * zq / spec.lz))
    return np.concatenate([top, bottom])


# -- dispersion relation -----------------------------------------------------


@dataclass(frozen=True)
class DispersionResult:
    """Roots of  omega^2 + 2i gamma_d omega - omega0^2 = 0."""

    omega0: float
    gamma_d: float
    roots: tuple[complex, complex]

    @property
    def purely_damped(self) -> bool:
        """True when both roots are purely imaginary (gamma_d >= omega0)."""
        return self.roots[0].real == 0.0 and self.roots[1].real == 0.0

    def residual(self) -> float:
        """Largest quadratic residual of the two roots."""
        return max(abs(w * w + 2j * self.gamma_d * w - self.omega0 ** 2)
                   for w in self.roots)


def dispersion_roots(k_par: float, k_perp: float, zeta: float,
                     eta: float) -> DispersionResult:
    """Analytic SAW dispersion: frequency omega0 = sqrt(zeta) k_par / k_perp,
    damping gamma_d = eta k_par^2 / 2.

    The two roots are -i gamma_d +- sqrt(omega0^2 - gamma_d^2); oscillatory
    for gamma_d < omega0 and purely damped beyond, i.e. for
    eta > 2 sqrt(zeta) / (k_par k_perp).
    """
    if k_perp == 0.0:
        raise ValueError("k_perp must be nonzero")
    if not zeta > 0.0:
        raise ValueError("zeta must be positive")
    omega0 = np.sqrt(zeta) * k_par / k_perp
    gamma_d = 0.5 * eta * k_par ** 2
    disc = omega0 ** 2 - gamma_d ** 2
    if disc >= 0.0:
        re = np.sqrt(disc)
        roots = (complex(re, -gamma_d), complex(-re, -gamma_d))
    else:
        im = np.sqrt(-disc)
        roots = (complex(0.0, -gamma_d + im), complex(0.0, -gamma_d - im))
    return DispersionResult(omega0=float(omega0), gamma_d=float(gamma_d),
                            roots=roots)
