"""Energy-preserving mimetic finite differences for divergence-free
transport on dual staggered grids, applied to a parallel wave model and the
electrostatic shear Alfven wave system."""

__version__ = "0.1.0"

from .field import (AdvectiveField, PsiParams, expint_ei_neg, grad_psi,
                    manufactured_solution, mms_sources, psi, sample_b)
from .grid import (DualGrid, GridSpec, QuadratureWeights, StaggeredScalar,
                   build_dual_grid, quadrature_weights)
from .kernels import (SolverConvergenceError, backend, bicgstab_solve,
                      cg_solve, cg_solve_block)
from .models import (DispersionResult, SawSystem, WaveSystem, assemble_saws,
                     assemble_wave, discrete_energy, dispersion_roots)
from .operators import (P_TO_Q, Q_TO_P, SparseOperator, WeightPair,
                        advective_form, derivative_stencil, divergence_form,
                        laplacian_composition_check, parallel_gradient,
                        parallel_laplacian, perp_laplacian,
                        read_matrix_market, write_matrix_market)
from .timeint import (EnergyDivergenceError, EnergyTrace, SimState,
                      build_mms_forcing, crank_nicolson_step,
                      manufactured_state, rk4_step, run_simulation, saws_rhs)
from .analysis import (ConvergenceTable, SpectrumReport, export_system,
                       growth_rate, mms_convergence, operator_convergence,
                       skewness_residual, spectrum_report)

__all__ = [name for name in dir() if not name.startswith("_")]
