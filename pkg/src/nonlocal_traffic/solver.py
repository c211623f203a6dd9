"""Conservative upwind finite-volume solver for the nonlocal models.

Two variants share one update rule and differ only in the interface speed:

* ``nonlocal_velocity``: ``W = gamma * V(q)`` (average of the speed)
* ``nonlocal_solution``: ``W = V(gamma * q)`` (speed of the average)

The flux across interface ``i`` is ``q_{i-1} * W_i`` (speeds are nonnegative
so the upwind cell is the left one; the left extension feeds interface 0).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import NonfiniteState, SnapshotMissing, UnstableStep
from .grid import CellField, GridSpec, InterfaceField
from .models import InitialDatum, KernelSpec, VelocityModel
from .nonlocal_operator import downstream_average, exponential_scan, fast_nonlocal_velocity

VARIANTS = ("nonlocal_velocity", "nonlocal_solution", "local")


@dataclass(frozen=True)
class SolverConfig:
    variant: str
    velocity: VelocityModel
    grid: GridSpec
    t_end: float
    kernel: Optional[KernelSpec] = None
    cfl: float = 0.5
    snapshot_times: Tuple[float, ...] = ()
    # include first-cell-mass * max|q| * max|V'| in the CFL speed
    lipschitz_cfl: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant != "local" and self.kernel is None:
            raise ValueError(f"variant {self.variant} needs a kernel")
        if not (0.0 < self.cfl <= 0.5):
            raise ValueError(f"cfl must lie in (0, 0.5], got {self.cfl}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        times = sorted({0.0, float(self.t_end), *map(float, self.snapshot_times)})
        if times[0] < 0 or times[-1] > self.t_end:
            raise ValueError("snapshot times must lie in [0, t_end]")
        object.__setattr__(self, "snapshot_times", tuple(times))


@dataclass(frozen=True)
class Snapshot:
    t: float
    q: CellField
    w: InterfaceField


@dataclass
class Trajectory:
    config: SolverConfig
    snapshots: List[Snapshot] = field(default_factory=list)
    # (time, total mass, accumulated net outflow through the boundaries)
    mass_ledger: List[Tuple[float, float, float]] = field(default_factory=list)
    n_steps: int = 0
    q_min_seen: float = math.inf
    q_max_seen: float = -math.inf
    dt_max: float = 0.0

    @property
    def grid(self) -> GridSpec:
        return self.config.grid

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @property
    def initial(self) -> CellField:
        return self.snapshots[0].q

    @property
    def final(self) -> CellField:
        return self.snapshots[-1].q

    def at(self, t: float, tol: float = 1e-12) -> Snapshot:
        for s in self.snapshots:
            if abs(s.t - t) <= tol * max(1.0, abs(t)):
                return s
        raise SnapshotMissing(f"no snapshot at t={t}")

    def q_matrix(self) -> np.ndarray:
        return np.stack([s.q.values for s in self.snapshots])

    def conservation_defect(self) -> float:
        """Max over the ledger of ``|mass + outflow - initial mass|``."""
        m0 = self.mass_ledger[0][1]
        return max(abs(m + out - m0) for _, m, out in self.mass_ledger)

    def to_long_csv(self, path) -> None:
        """Rows ``t,x,q,w``; ``w`` is the speed at the cell's left interface."""
        x = self.grid.centers
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "x", "q", "w"])
            for s in self.snapshots:
                for xj, qj, wj in zip(x, s.q.values, s.w.values[:-1]):
                    wr.writerow([repr(s.t), repr(float(xj)), repr(float(qj)), repr(float(wj))])

    def to_heatmap_csv(self, path) -> None:
        """Matrix with one row per snapshot time and one column per cell center."""
        x = self.grid.centers
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t"] + [repr(float(v)) for v in x])
            for s in self.snapshots:
                wr.writerow([repr(s.t)] + [repr(float(v)) for v in s.q.values])


def nonlocal_solution_velocity(q: CellField, k: KernelSpec, v: VelocityModel) -> InterfaceField:
    """``V(gamma * q)`` at every interface."""
    dx = q.grid.dx
    if k.family == "exponential":
        avg = exponential_scan(q.values, q.right, k.eta, dx)
    else:
        avg = downstream_average(q.values, q.right, k, dx)
    w = v.V(avg)
    return InterfaceField(q.grid, w, (float(v.V(q.left)), float(v.V(q.right))))


def interface_speed(q: CellField, variant: str, k: Optional[KernelSpec], v: VelocityModel) -> InterfaceField:
    if variant == "nonlocal_velocity":
        return fast_nonlocal_velocity(q, k, v)
    if variant == "nonlocal_solution":
        return nonlocal_solution_velocity(q, k, v)
    if variant == "local":
        vals = v.V(np.append(q.values, q.right))
        return InterfaceField(q.grid, vals, (float(v.V(q.left)), float(v.V(q.right))))
    raise ValueError(f"unknown variant {variant!r}")


def cfl_dt(
    q: CellField,
    W: InterfaceField,
    cfl: float,
    dx: float,
    gap: float = math.inf,
    extra_speed: float = 0.0,
) -> float:
    """``cfl * dx / max(|W|_inf + extra_speed, tiny)``, clamped to ``gap``.

    ``gap`` is the distance to the next snapshot time; a state with zero
    speed everywhere advances straight to it.
    """
    speed = float(np.max(np.abs(W.values))) + extra_speed
    dt = cfl * dx / max(speed, np.finfo(float).tiny)
    return min(dt, gap)


def _upwind_update(values: np.ndarray, left: float, w: np.ndarray, dt: float, dx: float):
    upwind = np.empty(values.size + 1)
    upwind[0] = left
    upwind[1:] = values
    flux = upwind * w
    new = values - (dt / dx) * (flux[1:] - flux[:-1])
    return new, flux[0], flux[-1]


def step(
    q: CellField,
    k: KernelSpec,
    v: VelocityModel,
    dt: float,
    variant: str = "nonlocal_velocity",
) -> CellField:
    """One explicit Euler upwind step of size ``dt``."""
    w = interface_speed(q, variant, k, v)
    dx = q.grid.dx
    courant = dt * float(np.max(np.abs(w.values))) / dx
    if courant > 1.0:
        raise UnstableStep(f"dt*|W|/dx = {courant:.4g} > 1")
    new, _, _ = _upwind_update(q.values, q.left, w.values, dt, dx)
    return q.with_values(new)


def lipschitz_speed(config: SolverConfig, q_lo: float, q_hi: float) -> float:
    """Extra CFL speed ``m0 * max|q| * max|V'|`` from the self-interaction of a cell.

    ``m0`` is the kernel mass of the first downstream cell; the upwind
    update stays a monotone map of the cell values once this is included.
    """
    if not config.lipschitz_cfl:
        return 0.0
    if config.variant == "local":
        m0 = 1.0
    else:
        masses, _ = config.kernel.cell_masses(config.grid.dx, 1)
        m0 = float(masses[0])
    return m0 * max(abs(q_lo), abs(q_hi)) * config.velocity.lipschitz(q_lo, q_hi)


Monitor = Callable[[float, CellField, InterfaceField], None]


def simulate(
    config: SolverConfig,
    datum,
    monitor: Optional[Monitor] = None,
    max_steps: Optional[int] = None,
) -> Trajectory:
    """Run ``config`` from ``datum`` (an :class:`InitialDatum` or a :class:`CellField`).

    ``monitor(t, q, w)`` is called on the initial state and after every
    step.  ``max_steps`` stops the run early (used for timing harnesses);
    the last reached state is then recorded as a final snapshot.
    """
    if config.variant == "local":
        from .local_reference import FluxModel, godunov_simulate

        return godunov_simulate(
            FluxModel(config.velocity), datum, config.grid, config.cfl, config.t_end,
            config.snapshot_times, monitor=monitor, max_steps=max_steps,
        )

    grid = config.grid
    dx = grid.dx
    q = datum if isinstance(datum, CellField) else datum.rasterize(grid)
    if q.grid != grid:
        raise ValueError("initial field lives on a different grid")
    q_lo = min(q.values.min(), q.left, q.right)
    q_hi = max(q.values.max(), q.left, q.right)
    extra = lipschitz_speed(config, q_lo, q_hi)

    traj = Trajectory(config)
    k, v, variant = config.kernel, config.velocity, config.variant
    t = 0.0
    outflow = 0.0
    values = q.values.copy()
    w = interface_speed(q, variant, k, v)

    def record(t_now: float, field_q: CellField, field_w: InterfaceField) -> None:
        traj.snapshots.append(Snapshot(t_now, field_q, field_w))
        traj.mass_ledger.append((t_now, field_q.mass(), outflow))

    record(0.0, q, w)
    traj.q_min_seen = float(values.min())
    traj.q_max_seen = float(values.max())
    if monitor is not None:
        monitor(0.0, q, w)

    targets = list(config.snapshot_times[1:])
    while targets:
        target = targets[0]
        gap = target - t
        dt = cfl_dt(q, w, config.cfl, dx, gap=gap, extra_speed=extra)
        hit = dt >= gap * (1 - 1e-12)
        if hit:
            dt = gap
        if dt * float(np.max(np.abs(w.values))) / dx > 1.0:
            raise UnstableStep(f"step at t={t} violates the CFL bound")
        values, f_left, f_right = _upwind_update(values, q.left, w.values, dt, dx)
        if not np.all(np.isfinite(values)):
            raise NonfiniteState(f"non-finite density after step {traj.n_steps + 1} at t={t + dt}")
        outflow += dt * (f_right - f_left)
        t = target if hit else t + dt
        traj.n_steps += 1
        traj.dt_max = max(traj.dt_max, dt)
        q = q.with_values(values)
        w = interface_speed(q, variant, k, v)
        traj.q_min_seen = min(traj.q_min_seen, float(values.min()))
        traj.q_max_seen = max(traj.q_max_seen, float(values.max()))
        if monitor is not None:
            monitor(t, q, w)
        if hit:
            record(t, q, w)
            targets.pop(0)
        if max_steps is not None and traj.n_steps >= max_steps:
            if not hit:
                record(t, q, w)
            break
    return traj
