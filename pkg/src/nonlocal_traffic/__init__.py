"""Nonlocal-in-velocity conservation laws: solvers, references and certificates."""
from .diagnostics import (
    DiagnosticsReport,
    EntropyPair,
    StepMonitor,
    TestFunctionFamily,
    build_entropy_pair,
    build_report,
    convergence_table,
    entropy_residual,
    oleinik_check,
    tv_series,
)
from .errors import *  # noqa: F401,F403
from .grid import CellField, GridSpec, InterfaceField, l1_distance, monotonicity_defect, total_variation
from .local_reference import FluxModel, RiemannSolution, exact_riemann, godunov_flux, godunov_simulate
from .models import (
    InitialDatum,
    KernelSpec,
    VelocityModel,
    box_datum,
    check_velocity_conditions,
    constant_datum,
    constant_kernel,
    convex_velocity,
    exponential_kernel,
    greenshields,
    linear_velocity,
    piecewise_constant_datum,
    polynomial_velocity,
    quadratic_velocity,
    ramp_datum,
    riemann_datum,
    tabulated_kernel,
)
from .nonlocal_operator import (
    derivative_identity_residual,
    fast_nonlocal_velocity,
    nonlocal_velocity,
    nonlocal_velocity_exponential_scan,
)
from .solver import SolverConfig, Trajectory, simulate, step

__version__ = "0.1.0"
