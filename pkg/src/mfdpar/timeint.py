"""Time integration: classical RK4, Crank-Nicolson, the mass solves, and
energy-trace recording.

The SAW mass matrix has no coupling between z planes, so every right-hand
side evaluation solves Npz independent 2-D positive definite systems that
share one matrix; they are handed to the kernel lane as a block of columns.
The Crank-Nicolson implicit system is nonsymmetric and is solved with
BiCGStab (warm-started from the previous step).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp

from .field import (AdvectiveField, manufactured_gradient,
                    manufactured_solution, manufactured_time_derivative,
                    mms_sources)
from .grid import DualGrid
from .kernels import bicgstab_solve, cg_solve, cg_solve_block  # noqa: F401
from .models import SawSystem, WaveSystem, discrete_energy
from .operators import (laplacian_boundary_injection,
                        parallel_gradient_boundary, perp_laplacian_boundary,
                        support_operator_parts)


@dataclass
class SimState:
    """Time, state vector and the energy at that time."""

    t: float
    u: np.ndarray
    energy: float = np.nan


@dataclass
class EnergyTrace:
    """Sampled discrete energy of a run, with the run's configuration."""

    times: np.ndarray
    energies: np.ndarray
    metadata: dict = dc_field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,energy\n")
            for t, e in zip(self.times, self.energies):
                fh.write(f"{t:.17g},{e:.17g}\n")


class EnergyDivergenceError(RuntimeError):
    """A run's energy exceeded the divergence guard."""

    def __init__(self, step, t, energy, e0, trace):
        self.step = step
        self.t = t
        self.energy = energy
        self.trace = trace
        super().__init__(
            f"energy divergence at step {step} (t={t:g}): "
            f"E={energy:.3e} exceeds {1e12:.0e} * E(0)={e0:.3e}"
        )


# -- manufactured-solution forcing -------------------------------------------


@dataclass(frozen=True)
class TrigForcing:
    """Vector-valued  c + a cos(t) + b sin(t);  the manufactured fields and
    everything linear in them have exactly this time dependence."""

    const: np.ndarray
    cos_part: np.ndarray
    sin_part: np.ndarray

    def __call__(self, t: float) -> np.ndarray:
        return (self.const + np.cos(t) * self.cos_part
                + np.sin(t) * self.sin_part)

    @classmethod
    def from_samples(cls, f0, f_half, f_pi):
        const = 0.5 * (f0 + f_pi)
        return cls(const=const, cos_part=0.5 * (f0 - f_pi),
                   sin_part=f_half - const)


@dataclass(frozen=True)
class MmsForcing:
    """Precomputed manufactured-solution sources and boundary-data terms.

    ``phi_term(t)`` is added to the right-hand side of the mass solve,
    ``v_term(t)`` to dv/dt; both already include the analytic sources, the
    Dirichlet boundary data of the eliminated p nodes and the star-point
    data of the parallel Laplacian.
    """

    phi_term: TrigForcing
    v_term: TrigForcing


def build_mms_forcing(system: SawSystem, field: AdvectiveField) -> MmsForcing:
    grid = system.grid
    mask = grid.interior_p_mask()
    xp, yp, zp = grid.mesh("p")
    xi, yi, zi = xp[mask], yp[mask], zp[mask]
    xb, yb, zb = xp[~mask], yp[~mask], zp[~mask]
    xq, yq, zq = grid.mesh("q")
    lap_bnd = perp_laplacian_boundary(grid)
    grad_bnd = parallel_gradient_boundary(grid, field, system.weights)
    so_parts = support_operator_parts(grid, field)

    phi_samples, v_samples = [], []
    for t in (0.0, 0.5 * np.pi, np.pi):
        s_phi = mms_sources(xi, yi, zi, t, system.zeta, system.eta, field)[0]
        s_v = mms_sources(xq, yq, zq, t, system.zeta, system.eta, field)[1]
        phi_dot_bnd = manufactured_time_derivative("phi", xb, yb, zb, t)
        phi_samples.append(-s_phi + lap_bnd @ phi_dot_bnd)
        inj = laplacian_boundary_injection(
            grid, so_parts,
            value_fn=lambda x, y, z, t=t: manufactured_solution("v", x, y, z,
                                                                t),
            grad_fn=lambda x, y, z, t=t: manufactured_gradient("v", x, y, z,
                                                               t))
        phi_bnd = manufactured_solution("phi", xb, yb, zb, t)
        v_samples.append(system.zeta * (grad_bnd @ phi_bnd)
                         + system.eta * inj + s_v)
    return MmsForcing(phi_term=TrigForcing.from_samples(*phi_samples),
                      v_term=TrigForcing.from_samples(*v_samples))


def manufactured_state(system: SawSystem, t: float) -> np.ndarray:
    """Manufactured solution sampled on the system's degrees of freedom."""
    grid = system.grid
    mask = grid.interior_p_mask()
    xp, yp, zp = grid.mesh("p")
    xq, yq, zq = grid.mesh("q")
    phi = manufactured_solution("phi", xp[mask], yp[mask], zp[mask], t)
    v = manufactured_solution("v", xq, yq, zq, t)
    return np.concatenate([phi, v])


# -- right-hand sides ---------------------------------------------------------


def saws_rhs(system: SawSystem, u: np.ndarray, t: float = 0.0,
             forcing: MmsForcing | None = None, workspace: dict | None = None,
             mass_tol: float = 1e-10) -> np.ndarray:
    """d/dt [phi; v] of the SAW system.

    The potential equation requires inverting the -perp_lap mass block; it
    decouples per z plane, so the Npz plane systems are solved together by
    block CG (warm-started from the previous evaluation when a workspace
    dict is supplied).
    """
    phi, v = system.split(u)
    rhs_phi = system.grad_pq @ v
    if forcing is not None:
        rhs_phi = rhs_phi + forcing.phi_term(t)
    npz = system.grid.spec.npz
    n2d = system.n_phi // npz
    rhs_cols = np.ascontiguousarray(
        rhs_phi.reshape((n2d, npz), order="F"))
    x0 = workspace.get("dphi") if workspace is not None else None
    dphi_cols = cg_solve_block(system.minus_lap_perp_2d, rhs_cols,
                               tol=mass_tol, x0=x0)
    if workspace is not None:
        workspace["dphi"] = dphi_cols
    dphi = dphi_cols.reshape(-1, order="F")
    dv = system.zeta * (system.grad_qp @ phi) + system.eta * (
        system.lap_par @ v)
    if forcing is not None:
        dv = dv + forcing.v_term(t)
    return np.concatenate([dphi, dv])


def wave_rhs(system: WaveSystem, u: np.ndarray, t: float = 0.0) -> np.ndarray:
    return system.block_matrix @ u


# -- steppers ------------------------------------------------------------------


def rk4_step(rhs, state: SimState, dt: float) -> SimState:
    """One classical fourth-order Runge-Kutta step; rhs(t, u) -> du/dt."""
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    t, u = state.t, state.u
    k1 = rhs(t, u)
    k2 = rhs(t + 0.5 * dt, u + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, u + 0.5 * dt * k2)
    k4 = rhs(t + dt, u + dt * k3)
    u_new = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return SimState(t=t + dt, u=u_new)


class CrankNicolsonStepper:
    """Caches the two matrices of  (M - dt/2 D) u1 = (M + dt/2 D) u0."""

    def __init__(self, mass: sp.spmatrix, drift: sp.spmatrix, dt: float,
                 tol: float = 1e-12):
        if not dt > 0.0:
            raise ValueError("dt must be positive")
        self.lhs = (mass - 0.5 * dt * drift).tocsr()
        self.rhs = (mass + 0.5 * dt * drift).tocsr()
        self.dt = dt
        self.tol = tol

    def step(self, state: SimState) -> SimState:
        u_new = bicgstab_solve(self.lhs, self.rhs @ state.u, tol=self.tol,
                               x0=state.u)
        return SimState(t=state.t + self.dt, u=u_new)


def crank_nicolson_step(mass, drift, state: SimState, dt: float,
                        tol: float = 1e-12) -> SimState:
    """One Crank-Nicolson step of  M du/dt = D u."""
    return CrankNicolsonStepper(mass, drift, dt, tol).step(state)


# -- driver --------------------------------------------------------------------


def run_simulation(system, integrator: str, dt: float, t_end: float,
                   initial_state: np.ndarray | None = None,
                   trace_every: int = 1, forcing: MmsForcing | None = None,
                   mass_tol: float = 1e-10, cn_tol: float = 1e-12,
                   guard_factor: float = 1e12, metadata: dict | None = None):
    """Integrate a system to t_end, recording the discrete energy.

    Returns (EnergyTrace, final SimState).  Aborts with
    :class:`EnergyDivergenceError` (carrying the partial trace) once the
    energy exceeds ``guard_factor`` times its initial value, so
    non-conservative runs terminate cleanly.
    """
    from .models import default_initial_state

    if not (dt > 0.0 and t_end > 0.0):
        raise ValueError("dt and t_end must be positive")
    if initial_state is None:
        initial_state = default_initial_state(system)
    n_steps = int(round(t_end / dt))

    if integrator == "rk4":
        if isinstance(system, SawSystem):
            workspace: dict = {}

            def rhs(t, u):
                return saws_rhs(system, u, t, forcing=forcing,
                                workspace=workspace, mass_tol=mass_tol)
        else:
            def rhs(t, u):
                return wave_rhs(system, u, t)

        def advance(state):
            return rk4_step(rhs, state, dt)
    elif integrator == "cn":
        if forcing is not None:
            raise ValueError("Crank-Nicolson runs do not support forcing")
        if isinstance(system, WaveSystem):
            mass = sp.identity(system.n_dof, format="csr")
            drift = system.block_matrix
        else:
            if system.eta != 0.0:
                raise ValueError(
                    "Crank-Nicolson energy stepping applies to the "
                    "diffusion-free system; set eta=0")
            mass = system.mass_matrix_scaled
            drift = system.drift_matrix_scaled
        stepper = CrankNicolsonStepper(mass, drift, dt, tol=cn_tol)
        advance = stepper.step
    else:
        raise ValueError(f"unknown integrator {integrator!r}")

    state = SimState(t=0.0, u=np.array(initial_state, dtype=float))
    state.energy = discrete_energy(system, state.u)
    e0 = state.energy
    times = [0.0]
    energies = [e0]
    meta = dict(metadata or {})
    meta.setdefault("integrator", integrator)
    meta.setdefault("dt", dt)
    for step in range(1, n_steps + 1):
        state = advance(state)
        state.t = step * dt
        state.energy = discrete_energy(system, state.u)
        if step % trace_every == 0 or step == n_steps:
            times.append(state.t)
            energies.append(state.energy)
        if e0 > 0.0 and state.energy > guard_factor * e0:
            trace = EnergyTrace(np.array(times), np.array(energies), meta)
            raise EnergyDivergenceError(step, state.t, state.energy, e0,
                                        trace)
    return EnergyTrace(np.array(times), np.array(energies), meta), state
