"""Catalogs of kernels, velocity laws and initial data, plus hypothesis checkers.

Kernels are one-sided (downstream) weights ``gamma`` on ``[0, inf)`` used in
the scaled form ``gamma(s/eta)/eta``.  All catalog kernels integrate to one.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidInterval
from .grid import CellField, GridSpec

KERNEL_FAMILIES = ("exponential", "constant", "tabulated")


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Downstream kernel ``gamma`` with nonlocal reach ``eta``.

    For ``family="tabulated"``, ``knots``/``values`` describe a piecewise
    linear ``gamma`` on ``[knots[0]=0, knots[-1]]`` that vanishes beyond the
    last knot.  Tabulated kernels are rescaled to unit mass on construction
    (with a warning); a kernel with zero mass cannot be rescaled and is kept
    with ``normalized=False``.
    """

    family: str
    eta: float
    knots: Optional[Tuple[float, ...]] = None
    values: Optional[Tuple[float, ...]] = None
    normalized: bool = field(default=True, init=False)

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be positive and finite, got {self.eta}")
        if self.family != "tabulated":
            return
        if self.knots is None or self.values is None:
            raise ValueError("tabulated kernel needs knots and values")
        s = np.asarray(self.knots, dtype=float)
        g = np.asarray(self.values, dtype=float)
        if s.ndim != 1 or s.shape != g.shape or s.size < 2:
            raise ValueError("knots and values must be 1-D of equal length >= 2")
        if s[0] != 0.0 or np.any(np.diff(s) <= 0):
            raise ValueError("knots must start at 0 and be strictly increasing")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("kernel values must be finite and nonnegative")
        if np.any(np.diff(g) > 0):
            raise ValueError("kernel must be monotonically non-increasing")
        total = float(np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(s)))
        if total == 0.0:
            object.__setattr__(self, "normalized", False)
        elif abs(total - 1.0) > 1e-14:
            warnings.warn(
                f"tabulated kernel has mass {total:.6g}; rescaling to 1",
                stacklevel=3,
            )
            g = g / total
        object.__setattr__(self, "knots", tuple(float(v) for v in s))
        object.__setattr__(self, "values", tuple(float(v) for v in g))

    @property
    def support(self) -> float:
        """Support length of ``gamma`` in unscaled units."""
        if self.family == "exponential":
            return math.inf
        if self.family == "constant":
            return 1.0
        return self.knots[-1]

    @property
    def strictly_decreasing(self) -> bool:
        if self.family == "exponential":
            return True
        if self.family == "constant":
            return False
        return bool(np.all(np.diff(self.values) < 0))

    def with_eta(self, eta: float) -> "KernelSpec":
        return KernelSpec(self.family, eta, self.knots, self.values)

    def density(self, s) -> np.ndarray:
        """Unscaled ``gamma(s)`` for ``s >= 0``."""
        s = np.asarray(s, dtype=float)
        if self.family == "exponential":
            return np.exp(-s)
        if self.family == "constant":
            return ((s > 0) & (s < 1)).astype(float)
        return np.interp(s, self.knots, self.values, right=0.0)

    def survival(self, u) -> np.ndarray:
        """Unscaled tail mass ``int_u^inf gamma`` for ``u >= 0``."""
        u = np.asarray(u, dtype=float)
        if self.family == "exponential":
            return np.exp(-u)
        if self.family == "constant":
            return np.clip(1.0 - u, 0.0, 1.0)
        return self._tab_total() - self._tab_cumulative(u)

    def _tab_total(self) -> float:
        s = np.asarray(self.knots)
        g = np.asarray(self.values)
        return float(np.sum(0.5 * (g[1:] + g[:-1]) * np.diff(s)))

    def _tab_cumulative(self, u) -> np.ndarray:
        s = np.asarray(self.knots)
        g = np.asarray(self.values)
        seg = 0.5 * (g[1:] + g[:-1]) * np.diff(s)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        u = np.minimum(np.asarray(u, dtype=float), s[-1])
        k = np.clip(np.searchsorted(s, u, side="right") - 1, 0, len(s) - 2)
        slope = (g[k + 1] - g[k]) / (s[k + 1] - s[k])
        du = u - s[k]
        return cum[k] + du * (g[k] + 0.5 * slope * du)

    def cell_masses(self, dx: float, n: int) -> Tuple[np.ndarray, float]:
        """Masses of ``[m*dx, (m+1)*dx]`` for ``m < n`` and the tail beyond ``n*dx``.

        The masses of a finitely supported kernel are truncated to the
        cells that intersect the support, so the returned array may be
        shorter than ``n``.
        """
        h = dx / self.eta
        if self.family == "exponential":
            m = np.arange(n)
            masses = np.exp(-m * h) * -math.expm1(-h)
            return masses, float(math.exp(-n * h))
        n_support = min(n, int(math.ceil(self.support / h)) + 1)
        edges = np.arange(n_support + 1) * h
        surv = self.survival(edges)
        masses = surv[:-1] - surv[1:]
        tail = float(self.survival(n * h))
        return masses, tail


def kernel_cell_mass(k: KernelSpec, a: float, b: float) -> float:
    """Exact mass ``int_a^b gamma(s/eta)/eta ds`` for offsets ``0 <= a <= b``."""
    if a > b:
        raise InvalidInterval(f"a={a} > b={b}")
    if a < 0:
        raise InvalidInterval(f"offsets must be nonnegative, got a={a}")
    ua, ub = a / k.eta, b / k.eta
    if k.family == "exponential":
        if math.isinf(ub):
            return math.exp(-ua)
        return math.exp(-ua) * -math.expm1(-(ub - ua))
    return float(k.survival(ua) - k.survival(ub))


def kernel_first_moment(k: KernelSpec) -> float:
    """``int_0^inf gamma(s) s ds`` in unscaled variables."""
    if k.family == "exponential":
        return 1.0
    if k.family == "constant":
        return 0.5
    s = np.asarray(k.knots)
    g = np.asarray(k.values)
    s0, s1 = s[:-1], s[1:]
    slope = (g[1:] - g[:-1]) / (s1 - s0)
    # integral of (g0 + slope*(s - s0)) * s over [s0, s1]
    c0 = g[:-1] - slope * s0
    moment = c0 * (s1**2 - s0**2) / 2 + slope * (s1**3 - s0**3) / 3
    return float(np.sum(moment))


def exponential_kernel(eta: float) -> KernelSpec:
    return KernelSpec("exponential", eta)


def constant_kernel(eta: float) -> KernelSpec:
    return KernelSpec("constant", eta)


def tabulated_kernel(eta: float, knots: Sequence[float], values: Sequence[float]) -> KernelSpec:
    return KernelSpec("tabulated", eta, tuple(knots), tuple(values))


# --- velocity laws ---------------------------------------------------------

VELOCITY_FAMILIES = ("greenshields", "linear", "quadratic", "polynomial")


@dataclass(frozen=True)
class VelocityModel:
    """Velocity law ``V`` with first and second derivatives.

    ``greenshields``: ``v_max*(1 - (s/q_max)**k)``; ``linear`` and
    ``quadratic`` are its ``k=1`` and ``k=2`` members; ``polynomial`` uses
    ``coefficients`` in ascending powers of ``s``.
    """

    family: str = "greenshields"
    k: int = 2
    v_max: float = 1.0
    q_max: float = 1.0
    coefficients: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.family not in VELOCITY_FAMILIES:
            raise ValueError(f"unknown velocity family {self.family!r}")
        if self.family == "linear":
            object.__setattr__(self, "k", 1)
        elif self.family == "quadratic":
            object.__setattr__(self, "k", 2)
        if self.family == "polynomial":
            if len(self.coefficients) == 0:
                raise ValueError("polynomial velocity needs coefficients")
            object.__setattr__(
                self, "coefficients", tuple(float(c) for c in self.coefficients)
            )
        else:
            if int(self.k) != self.k or self.k < 1:
                raise ValueError(f"greenshields exponent must be an integer >= 1, got {self.k}")
            if self.v_max <= 0 or self.q_max <= 0:
                raise ValueError("v_max and q_max must be positive")
            object.__setattr__(self, "k", int(self.k))

    @property
    def label(self) -> str:
        if self.family == "polynomial":
            return "poly(" + ",".join(f"{c:g}" for c in self.coefficients) + ")"
        return f"{self.family}(k={self.k},v_max={self.v_max:g},q_max={self.q_max:g})"

    def _poly(self, order: int) -> np.polynomial.Polynomial:
        p = np.polynomial.Polynomial(self.coefficients)
        return p.deriv(order) if order else p

    def __call__(self, s):
        return self.V(s)

    def V(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "polynomial":
            return self._poly(0)(s)
        return self.v_max * (1.0 - (s / self.q_max) ** self.k)

    def dV(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "polynomial":
            return self._poly(1)(s)
        k = self.k
        return -self.v_max * k / self.q_max * (s / self.q_max) ** (k - 1)

    def d2V(self, s):
        s = np.asarray(s, dtype=float)
        if self.family == "polynomial":
            return self._poly(2)(s)
        k = self.k
        if k == 1:
            return np.zeros_like(s)
        return -self.v_max * k * (k - 1) / self.q_max**2 * (s / self.q_max) ** (k - 2)

    def flux(self, s):
        return np.asarray(s, dtype=float) * self.V(s)

    def dflux(self, s):
        return self.V(s) + np.asarray(s, dtype=float) * self.dV(s)

    def d2flux(self, s):
        return 2.0 * self.dV(s) + np.asarray(s, dtype=float) * self.d2V(s)

    def lipschitz(self, q_lo: float, q_hi: float, n: int = 2049) -> float:
        """Sampled ``max |V'|`` on ``[q_lo, q_hi]``."""
        s = np.linspace(q_lo, q_hi, n)
        return float(np.max(np.abs(self.dV(s))))

    def range_on(self, q_lo: float, q_hi: float, n: int = 2049) -> Tuple[float, float]:
        v = self.V(np.linspace(q_lo, q_hi, n))
        return float(v.min()), float(v.max())

    def admissibility_defect(self, q_lo: float, q_hi: float, n: int = 2049) -> float:
        """Largest violation of ``V' <= 0`` and ``V >= 0`` on ``[q_lo, q_hi]``."""
        s = np.linspace(q_lo, q_hi, n)
        return float(max(0.0, np.max(self.dV(s)), -np.min(self.V(s))))


def greenshields(k: int = 2, v_max: float = 1.0, q_max: float = 1.0) -> VelocityModel:
    return VelocityModel("greenshields", k, v_max, q_max)


def linear_velocity(v_max: float = 1.0, q_max: float = 1.0) -> VelocityModel:
    return VelocityModel("linear", 1, v_max, q_max)


def quadratic_velocity(v_max: float = 1.0, q_max: float = 1.0) -> VelocityModel:
    return VelocityModel("quadratic", 2, v_max, q_max)


def polynomial_velocity(coefficients: Sequence[float], q_max: float = 1.0) -> VelocityModel:
    return VelocityModel("polynomial", q_max=q_max, coefficients=tuple(coefficients))


def convex_velocity() -> VelocityModel:
    """``V(s) = (1 - s)**2``."""
    return polynomial_velocity((1.0, -2.0, 1.0))


@dataclass(frozen=True)
class ConditionReport:
    q_lo: float
    q_hi: float
    tv_bound: bool
    tv_bound_worst: float
    v_prime_bounds: bool
    v_prime_ratio_range: Tuple[float, float]
    flux_strict_convexity: bool
    flux_curvature: Optional[str]
    oleinik_uniform: bool
    oleinik_c: float
    v_strictly_decreasing: bool

    @property
    def convergence_conditions(self) -> bool:
        """All hypotheses of the exponential-kernel singular-limit result."""
        return self.v_prime_bounds and self.flux_strict_convexity and self.tv_bound

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["v_prime_ratio_range"] = list(self.v_prime_ratio_range)
        d["convergence_conditions"] = self.convergence_conditions
        return d


def _isolated_zeros(mask: np.ndarray) -> bool:
    return not np.any(mask[1:] & mask[:-1])


def check_velocity_conditions(
    v: VelocityModel, q_lo: float, q_hi: float, n_samples: int = 10_000, tol: float = 1e-12
) -> ConditionReport:
    """Check the velocity hypotheses by dense sampling of ``[q_lo, q_hi]``.

    * ``tv_bound``: ``V'(s)s - V(s) + V(q_lo) <= 0``
    * ``v_prime_bounds``: ``-inf < V'(s)/s < 0`` (at ``s = 0`` the limit
      ``V''(0)`` is used when ``V'(0) = 0``; otherwise the ratio diverges)
    * ``flux_strict_convexity``: ``s V(s)`` strictly convex or strictly
      concave, i.e. ``2V' + sV''`` of one sign with isolated zeros only
    * ``oleinik_uniform``: ``|2V' + sV''| >= c > 0``; ``oleinik_c`` is the
      attained minimum
    """
    if q_lo < 0 or q_lo > q_hi:
        raise InvalidInterval(f"need 0 <= q_lo <= q_hi, got [{q_lo}, {q_hi}]")
    s = np.linspace(q_lo, q_hi, n_samples)
    V, dV, d2V = v.V(s), v.dV(s), v.d2V(s)
    scale = max(1.0, float(np.max(np.abs(V))))

    tv = dV * s - V + v.V(q_lo)
    tv_worst = float(np.max(tv))

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = dV / s
    zero = s == 0.0
    if np.any(zero):
        ratio[zero] = np.where(np.abs(dV[zero]) <= tol, d2V[zero], -np.inf)
    v_prime_ok = bool(np.all(np.isfinite(ratio)) and np.all(ratio < 0))
    finite_ratio = ratio[np.isfinite(ratio)]
    ratio_range = (
        (float(finite_ratio.min()), float(finite_ratio.max()))
        if finite_ratio.size
        else (-math.inf, -math.inf)
    )
    if not np.all(np.isfinite(ratio)):
        ratio_range = (-math.inf, ratio_range[1])

    curv = 2.0 * dV + s * d2V
    near_zero = np.abs(curv) <= tol * scale
    if np.all(curv <= tol * scale) and _isolated_zeros(near_zero):
        curvature = "concave"
    elif np.all(curv >= -tol * scale) and _isolated_zeros(near_zero):
        curvature = "convex"
    else:
        curvature = None
    c = float(np.min(np.abs(curv)))

    return ConditionReport(
        q_lo=float(q_lo),
        q_hi=float(q_hi),
        tv_bound=bool(tv_worst <= tol * scale),
        tv_bound_worst=tv_worst,
        v_prime_bounds=v_prime_ok,
        v_prime_ratio_range=ratio_range,
        flux_strict_convexity=curvature is not None,
        flux_curvature=curvature,
        oleinik_uniform=bool(curvature is not None and c > tol * scale),
        oleinik_c=c,
        v_strictly_decreasing=bool(np.all(dV < 0)),
    )


# --- initial data ----------------------------------------------------------

DATUM_FAMILIES = ("constant", "box", "riemann", "ramp", "piecewise_constant")


@dataclass(frozen=True)
class InitialDatum:
    """Piecewise-linear initial density, constant outside its breakpoints.

    ``pieces`` is a tuple of ``(x_lo, x_hi, value_lo, value_hi)`` covering
    the real line in order; the first and last pieces are unbounded and
    constant.  Use the factory functions (:func:`box_datum`, ...) rather
    than building pieces by hand.
    """

    family: str
    params: Tuple[Tuple[str, object], ...]
    pieces: Tuple[Tuple[float, float, float, float], ...]

    @property
    def left_value(self) -> float:
        return self.pieces[0][2]

    @property
    def right_value(self) -> float:
        return self.pieces[-1][3]

    def bounds(self) -> Tuple[float, float]:
        vals = [v for p in self.pieces for v in p[2:]]
        return float(min(vals)), float(max(vals))

    def total_variation(self) -> float:
        tv = 0.0
        for prev, cur in zip(self.pieces[:-1], self.pieces[1:]):
            tv += abs(cur[2] - prev[3])
        for p in self.pieces:
            tv += abs(p[3] - p[2])
        return float(tv)

    def monotone_direction(self) -> Optional[str]:
        seq = [self.pieces[0][2]]
        for p in self.pieces:
            seq += [p[2], p[3]]
        d = np.diff(seq)
        if np.all(d >= 0):
            return "increasing"
        if np.all(d <= 0):
            return "decreasing"
        return None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        for lo, hi, vlo, vhi in self.pieces:
            m = (x >= lo) & (x < hi)
            if math.isinf(lo) or math.isinf(hi):
                out[m] = vlo
            else:
                out[m] = vlo + (vhi - vlo) * (x[m] - lo) / (hi - lo)
        return out

    def rasterize(self, grid: GridSpec) -> CellField:
        """Exact cell averages on ``grid``."""
        xi = grid.interfaces
        xl, xr = xi[:-1], xi[1:]
        width = xr - xl
        out = np.zeros(grid.n_cells)
        for lo, hi, vlo, vhi in self.pieces:
            a = np.maximum(xl, lo)
            b = np.minimum(xr, hi)
            frac = np.clip(b - a, 0.0, None) / width
            if math.isinf(lo) or math.isinf(hi) or vlo == vhi:
                avg = vlo
            else:
                mid = 0.5 * (a + b)
                avg = vlo + (vhi - vlo) * (mid - lo) / (hi - lo)
            hit = frac > 0
            out[hit] += (frac * avg)[hit] if np.ndim(avg) else frac[hit] * avg
        return CellField(grid, out, (self.left_value, self.right_value))


def _datum(family: str, params: dict, pieces) -> InitialDatum:
    return InitialDatum(family, tuple(sorted(params.items())), tuple(pieces))


def constant_datum(value: float) -> InitialDatum:
    return _datum("constant", {"value": value}, [(-math.inf, math.inf, value, value)])


def box_datum(base: float = 0.25, height: float = 0.5, a: float = -0.5, b: float = 0.5) -> InitialDatum:
    """``base + height * indicator([a, b])``."""
    if not a < b:
        raise ValueError("box needs a < b")
    top = base + height
    return _datum(
        "box",
        {"base": base, "height": height, "a": a, "b": b},
        [(-math.inf, a, base, base), (a, b, top, top), (b, math.inf, base, base)],
    )


def riemann_datum(q_l: float, q_r: float, x0: float = 0.0) -> InitialDatum:
    return _datum(
        "riemann",
        {"q_l": q_l, "q_r": q_r, "x0": x0},
        [(-math.inf, x0, q_l, q_l), (x0, math.inf, q_r, q_r)],
    )


def ramp_datum(q_l: float, q_r: float, a: float, b: float) -> InitialDatum:
    """Linear transition from ``q_l`` at ``a`` to ``q_r`` at ``b``."""
    if not a < b:
        raise ValueError("ramp needs a < b")
    return _datum(
        "ramp",
        {"q_l": q_l, "q_r": q_r, "a": a, "b": b},
        [(-math.inf, a, q_l, q_l), (a, b, q_l, q_r), (b, math.inf, q_r, q_r)],
    )


def piecewise_constant_datum(breakpoints: Sequence[float], values: Sequence[float]) -> InitialDatum:
    """``values[i]`` on ``[breakpoints[i-1], breakpoints[i])`` (unbounded ends)."""
    bp = [float(b) for b in breakpoints]
    vals = [float(v) for v in values]
    if len(vals) != len(bp) + 1:
        raise ValueError("need len(values) == len(breakpoints) + 1")
    if any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
        raise ValueError("breakpoints must be strictly increasing")
    edges = [-math.inf] + bp + [math.inf]
    pieces = [(edges[i], edges[i + 1], vals[i], vals[i]) for i in range(len(vals))]
    return _datum("piecewise_constant", {"breakpoints": tuple(bp), "values": tuple(vals)}, pieces)
