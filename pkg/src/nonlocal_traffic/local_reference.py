"""Entropy solutions of the local law ``q_t + (q V(q))_x = 0``.

Provides the scalar Godunov flux and solver used as the ``eta -> 0``
reference, and the exact Riemann solution for a flux that is strictly
convex or strictly concave between the two states.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import FluxNotGenuinelyNonlinear, NonfiniteState, UnstableStep
from .grid import CellField, GridSpec, InterfaceField
from .models import VelocityModel
from .solver import SolverConfig, Snapshot, Trajectory

BISECTION_TOL = 1e-12


@dataclass(frozen=True)
class FluxModel:
    """``f(q) = q V(q)`` and its first two derivatives."""

    velocity: VelocityModel

    def f(self, q):
        return self.velocity.flux(q)

    def df(self, q):
        return self.velocity.dflux(q)

    def d2f(self, q):
        return self.velocity.d2flux(q)

    def max_speed(self, q_lo: float, q_hi: float, n: int = 4097) -> float:
        return float(np.max(np.abs(self.df(np.linspace(q_lo, q_hi, n)))))

    def curvature(self, q_lo: float, q_hi: float, n: int = 4097) -> Optional[str]:
        """'convex', 'concave' or None, from the sign of ``f''`` on samples."""
        s = np.linspace(q_lo, q_hi, n)
        c = self.d2f(s)
        scale = 1e-12 * max(1.0, float(np.max(np.abs(c))))
        zero = np.abs(c) <= scale
        if np.any(zero[1:] & zero[:-1]):
            return None
        if np.all(c <= scale):
            return "concave"
        if np.all(c >= -scale):
            return "convex"
        return None


def _bisect_root(g, lo: np.ndarray, hi: np.ndarray, tol: float = BISECTION_TOL) -> np.ndarray:
    """Vectorized bisection for a sign change of ``g`` on ``[lo, hi]``."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    g_lo = g(lo)
    width = float(np.max(hi - lo)) if lo.size else 0.0
    n_iter = max(1, int(math.ceil(math.log2(max(width, tol) / tol))) + 1)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        left = np.sign(g_mid) == np.sign(g_lo)
        lo = np.where(left, mid, lo)
        g_lo = np.where(left, g_mid, g_lo)
        hi = np.where(left, hi, mid)
    return 0.5 * (lo + hi)


def godunov_flux(fm: FluxModel, a, b):
    """Godunov flux: ``min f`` on ``[a, b]`` if ``a <= b``, else ``max f`` on ``[b, a]``."""
    scalar = np.ndim(a) == 0 and np.ndim(b) == 0
    a, b = np.broadcast_arrays(np.atleast_1d(np.asarray(a, dtype=float)), np.atleast_1d(np.asarray(b, dtype=float)))
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    f_lo, f_hi = fm.f(lo), fm.f(hi)
    d_lo, d_hi = fm.df(lo), fm.df(hi)
    crit = (d_lo * d_hi < 0)
    f_crit_min = np.minimum(f_lo, f_hi)
    f_crit_max = np.maximum(f_lo, f_hi)
    if np.any(crit):
        idx = np.nonzero(crit)
        root = _bisect_root(fm.df, lo[idx], hi[idx])
        f_root = fm.f(root)
        f_crit_min = np.array(f_crit_min, dtype=float, copy=True)
        f_crit_max = np.array(f_crit_max, dtype=float, copy=True)
        f_crit_min[idx] = np.minimum(f_crit_min[idx], f_root)
        f_crit_max[idx] = np.maximum(f_crit_max[idx], f_root)
    out = np.where(a <= b, f_crit_min, f_crit_max)
    return float(out[0]) if scalar else out


def godunov_simulate(
    fm: FluxModel,
    datum,
    grid: GridSpec,
    cfl: float,
    t_end: float,
    snapshot_times: Sequence[float] = (),
    monitor=None,
    max_steps: Optional[int] = None,
) -> Trajectory:
    """Godunov finite-volume solution of the local law.

    The recorded interface field is ``V`` of the cell downstream of each
    interface, the ``eta -> 0`` limit of the nonlocal speed.
    """
    config = SolverConfig("local", fm.velocity, grid, t_end, None, cfl, tuple(snapshot_times))
    q = datum if isinstance(datum, CellField) else datum.rasterize(grid)
    dx = grid.dx
    q_lo = min(q.values.min(), q.left, q.right)
    q_hi = max(q.values.max(), q.left, q.right)
    speed = max(fm.max_speed(q_lo, q_hi), np.finfo(float).tiny)
    v = fm.velocity

    def speed_field(field: CellField) -> InterfaceField:
        return InterfaceField(
            grid, v.V(np.append(field.values, field.right)), (float(v.V(field.left)), float(v.V(field.right)))
        )

    traj = Trajectory(config)
    outflow = 0.0
    values = q.values.copy()
    w = speed_field(q)
    traj.snapshots.append(Snapshot(0.0, q, w))
    traj.mass_ledger.append((0.0, q.mass(), 0.0))
    traj.q_min_seen, traj.q_max_seen = float(values.min()), float(values.max())
    if monitor is not None:
        monitor(0.0, q, w)

    t = 0.0
    targets = list(config.snapshot_times[1:])
    while targets:
        target = targets[0]
        gap = target - t
        dt = cfl * dx / speed
        hit = dt >= gap * (1 - 1e-12)
        if hit:
            dt = gap
        ext = np.concatenate([[q.left], values, [q.right]])
        courant = dt * float(np.max(np.abs(fm.df(ext)))) / dx
        if courant > 1.0:
            raise UnstableStep(f"dt*max|f'|/dx = {courant:.4g} > 1")
        flux = godunov_flux(fm, ext[:-1], ext[1:])
        values = values - (dt / dx) * (flux[1:] - flux[:-1])
        if not np.all(np.isfinite(values)):
            raise NonfiniteState(f"non-finite density at t={t + dt}")
        outflow += dt * (flux[-1] - flux[0])
        t = target if hit else t + dt
        traj.n_steps += 1
        traj.dt_max = max(traj.dt_max, dt)
        q = q.with_values(values)
        traj.q_min_seen = min(traj.q_min_seen, float(values.min()))
        traj.q_max_seen = max(traj.q_max_seen, float(values.max()))
        if monitor is not None or hit:
            w = speed_field(q)
        if monitor is not None:
            monitor(t, q, w)
        if hit:
            traj.snapshots.append(Snapshot(t, q, w))
            traj.mass_ledger.append((t, q.mass(), outflow))
            targets.pop(0)
        if max_steps is not None and traj.n_steps >= max_steps:
            if not hit:
                w = speed_field(q)
                traj.snapshots.append(Snapshot(t, q, w))
                traj.mass_ledger.append((t, q.mass(), outflow))
            break
    return traj


@dataclass(frozen=True)
class RiemannSolution:
    """Self-similar solution ``q(x, t) = sampler((x - x0)/t)``.

    ``kind`` is ``"constant"``, ``"shock"`` or ``"rarefaction"``.  A shock
    built directly through :meth:`shock` is not checked for admissibility,
    which is how entropy-violating test solutions are made.
    """

    fm: FluxModel
    q_l: float
    q_r: float
    kind: str
    speed: float = 0.0
    fan_lo: float = 0.0
    fan_hi: float = 0.0

    @classmethod
    def shock(cls, fm: FluxModel, q_l: float, q_r: float) -> "RiemannSolution":
        s = (float(fm.f(q_r)) - float(fm.f(q_l))) / (q_r - q_l)
        return cls(fm, q_l, q_r, "shock", speed=s, fan_lo=s, fan_hi=s)

    @property
    def lax_admissible(self) -> bool:
        if self.kind != "shock":
            return True
        return float(self.fm.df(self.q_l)) >= self.speed >= float(self.fm.df(self.q_r))

    def _invert_speed(self, xi: np.ndarray) -> np.ndarray:
        lo = np.full(xi.shape, min(self.q_l, self.q_r))
        hi = np.full(xi.shape, max(self.q_l, self.q_r))
        return _bisect_root(lambda q: self.fm.df(q) - xi, lo, hi)

    def sample(self, xi):
        """Density at similarity coordinate ``xi = (x - x0)/t``."""
        if np.ndim(xi) == 0:
            return float(self.sample(np.atleast_1d(xi))[0])
        xi = np.asarray(xi, dtype=float)
        if self.kind == "constant":
            return np.full(xi.shape, self.q_l)
        if self.kind == "shock":
            return np.where(xi < self.speed, self.q_l, self.q_r)
        out = np.where(xi <= self.fan_lo, self.q_l, self.q_r)
        fan = (xi > self.fan_lo) & (xi < self.fan_hi)
        if np.any(fan):
            out = np.array(out, dtype=float, copy=True)
            out[fan] = self._invert_speed(xi[fan])
        return out

    def _antiderivative(self, xi: np.ndarray) -> np.ndarray:
        """``int_0^xi sample`` up to a constant, exact in all three regions."""
        xi = np.asarray(xi, dtype=float)
        if self.kind == "constant":
            return self.q_l * xi
        lo, hi = self.fan_lo, self.fan_hi
        fm = self.fm
        # on the fan xi = f'(q), so int q dxi = q f'(q) - f(q)
        g = lambda q: q * fm.df(q) - fm.f(q)  # noqa: E731
        at_lo = self.q_l * lo
        at_hi = at_lo if self.kind == "shock" else at_lo + float(g(self.q_r) - g(self.q_l))
        out = np.where(xi <= lo, self.q_l * xi, at_hi + self.q_r * (xi - hi))
        fan = (xi > lo) & (xi < hi)
        if np.any(fan):
            out[fan] = at_lo + g(self._invert_speed(xi[fan])) - float(g(self.q_l))
        return out

    def cell_averages(self, grid: GridSpec, t: float, x0: float = 0.0) -> CellField:
        """Exact cell averages of the solution at time ``t``."""
        xi = grid.interfaces
        if t <= 0:
            frac = np.clip((x0 - xi[:-1]) / (xi[1:] - xi[:-1]), 0.0, 1.0)
            vals = frac * self.q_l + (1 - frac) * self.q_r
            return CellField(grid, vals, (self.q_l, self.q_r))
        phi = self._antiderivative((xi - x0) / t)
        vals = (phi[1:] - phi[:-1]) * t / np.diff(xi)
        return CellField(grid, vals, (self.q_l, self.q_r))

    def trajectory(self, grid: GridSpec, times: Sequence[float], x0: float = 0.0) -> Trajectory:
        """Exact cell-averaged trajectory sampled at ``times`` (for diagnostics)."""
        times = sorted({0.0, *map(float, times)})
        v = self.fm.velocity
        config = SolverConfig("local", v, grid, times[-1], None, 0.5, tuple(times))
        traj = Trajectory(config)
        for t in times:
            q = self.cell_averages(grid, t, x0)
            w = InterfaceField(grid, v.V(np.append(q.values, q.right)), (float(v.V(q.left)), float(v.V(q.right))))
            traj.snapshots.append(Snapshot(t, q, w))
            traj.mass_ledger.append((t, q.mass(), math.nan))
        return traj


def exact_riemann(fm: FluxModel, q_l: float, q_r: float) -> RiemannSolution:
    """Entropy solution of the Riemann problem (``q_l`` is the state for ``x < x0``)."""
    if q_l == q_r:
        return RiemannSolution(fm, q_l, q_r, "constant")
    curvature = fm.curvature(min(q_l, q_r), max(q_l, q_r))
    if curvature is None:
        raise FluxNotGenuinelyNonlinear(
            f"flux is neither strictly convex nor strictly concave on [{min(q_l, q_r)}, {max(q_l, q_r)}]"
        )
    shock = (q_l < q_r) if curvature == "concave" else (q_l > q_r)
    if shock:
        return RiemannSolution.shock(fm, q_l, q_r)
    return RiemannSolution(
        fm, q_l, q_r, "rarefaction", fan_lo=float(fm.df(q_l)), fan_hi=float(fm.df(q_r))
    )
