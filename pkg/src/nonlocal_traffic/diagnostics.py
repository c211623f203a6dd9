"""Certificates computed on trajectories.

Entropy admissibility (discrete entropy functional against a finite family
of smooth bumps), total variation of the density and of the nonlocal speed,
one-sided Oleinik slope bounds, L1 convergence tables, and the aggregated
:class:`DiagnosticsReport`.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import EntropyUnboundedAtZero, GridMismatch, SnapshotMissing, TestFunctionOutOfWindow
from .grid import CellField, l1_distance, monotonicity_defect, total_variation
from .models import VelocityModel
from .solver import Trajectory

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


# --- entropy-flux pairs ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EntropyPair:
    """Convex entropy ``alpha`` and its flux ``beta`` tabulated on ``nodes``.

    Anchored by ``alpha(q_lo) = alpha'(q_lo) = beta(q_lo) = 0``; values
    between nodes use cubic Hermite interpolation with the exact node
    derivatives.
    """

    kind: str
    velocity: VelocityModel
    nodes: np.ndarray
    alpha_nodes: np.ndarray
    dalpha_nodes: np.ndarray
    d2alpha_nodes: np.ndarray
    beta_nodes: np.ndarray
    dbeta_nodes: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_alpha", CubicHermiteSpline(self.nodes, self.alpha_nodes, self.dalpha_nodes))
        object.__setattr__(self, "_beta", CubicHermiteSpline(self.nodes, self.beta_nodes, self.dbeta_nodes))

    @property
    def q_lo(self) -> float:
        return float(self.nodes[0])

    @property
    def q_hi(self) -> float:
        return float(self.nodes[-1])

    def alpha(self, q):
        return self._alpha(np.clip(q, self.q_lo, self.q_hi))

    def beta(self, q):
        return self._beta(np.clip(q, self.q_lo, self.q_hi))

    def compatibility_defect(self) -> float:
        """Max ``|beta' - alpha' (V + sV')|`` over the nodes."""
        s = self.nodes
        return float(np.max(np.abs(self.dbeta_nodes - self.dalpha_nodes * self.velocity.dflux(s))))

    def convexity_range(self) -> Tuple[float, float]:
        return float(self.d2alpha_nodes.min()), float(self.d2alpha_nodes.max())


def _tailored_d2alpha(v: VelocityModel, q_lo: float) -> Callable:
    if q_lo == 0.0 and abs(float(v.dV(0.0))) > 0.0:
        raise EntropyUnboundedAtZero(
            f"-V'(s)/s diverges at s=0 for {v.label}; use q_lo > 0"
        )

    def d2alpha(s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -v.dV(s) / s
        zero = s == 0.0
        if np.any(zero):
            out = np.where(zero, -v.d2V(0.0), out)
        return out

    return d2alpha


def build_entropy_pair(
    v: VelocityModel,
    q_lo: float,
    q_hi: float,
    kind: str = "tailored",
    d2alpha: Optional[Callable] = None,
    kruzkov_k: Optional[float] = None,
    kruzkov_delta: float = 0.05,
    n_nodes: int = 2049,
) -> EntropyPair:
    """Entropy pair on ``[q_lo, q_hi]``.

    ``kind``:
      * ``"tailored"``: ``alpha'' = -V'(s)/s``
      * ``"kruzkov_smoothed"``: ``alpha = sqrt((s-k)^2 + delta^2)`` up to affine terms
      * ``"custom"``: user-supplied ``d2alpha``
    """
    if not q_lo < q_hi:
        raise ValueError(f"need q_lo < q_hi, got [{q_lo}, {q_hi}]")
    n_nodes = max(int(n_nodes), 2048)
    meta: dict = {"kind": kind, "q_lo": q_lo, "q_hi": q_hi}
    if kind == "tailored":
        g = _tailored_d2alpha(v, q_lo)
        meta["alpha2"] = "-V'(s)/s"
    elif kind == "kruzkov_smoothed":
        k = 0.5 * (q_lo + q_hi) if kruzkov_k is None else float(kruzkov_k)
        d = float(kruzkov_delta)
        g = lambda s: d * d / ((np.asarray(s) - k) ** 2 + d * d) ** 1.5  # noqa: E731
        meta.update(k=k, delta=d)
    elif kind == "custom":
        if d2alpha is None:
            raise ValueError("custom entropy needs d2alpha")
        g = lambda s: np.broadcast_to(np.asarray(d2alpha(np.asarray(s, dtype=float)), dtype=float), np.shape(s))  # noqa: E731
        meta["alpha2"] = "custom"
    else:
        raise ValueError(f"unknown entropy kind {kind!r}")

    s = np.linspace(q_lo, q_hi, n_nodes)
    s0, s1 = s[:-1], s[1:]
    half = 0.5 * (s1 - s0)
    # Gauss-Legendre points per interval, shape (intervals, 8)
    u = 0.5 * (s0 + s1)[:, None] + half[:, None] * _GL_NODES[None, :]
    w = half[:, None] * _GL_WEIGHTS[None, :]
    g_u = np.asarray(g(u), dtype=float)
    f = v.flux
    d_alpha_inc = np.sum(w * g_u, axis=1)
    dalpha = np.concatenate([[0.0], np.cumsum(d_alpha_inc)])
    # int_{s0}^{s1} alpha' = h alpha'(s0) + int (s1 - u) alpha''(u) du
    alpha_inc = (s1 - s0) * dalpha[:-1] + np.sum(w * g_u * (s1[:, None] - u), axis=1)
    alpha = np.concatenate([[0.0], np.cumsum(alpha_inc)])
    # int_{s0}^{s1} alpha' f' = alpha'(s0) [f] + int alpha''(u) (f(s1) - f(u)) du
    f0, f1 = f(s0), f(s1)
    beta_inc = dalpha[:-1] * (f1 - f0) + np.sum(w * g_u * (f1[:, None] - f(u)), axis=1)
    beta = np.concatenate([[0.0], np.cumsum(beta_inc)])
    d2 = np.asarray(g(s), dtype=float)
    return EntropyPair(
        kind=kind,
        velocity=v,
        nodes=s,
        alpha_nodes=alpha,
        dalpha_nodes=dalpha,
        d2alpha_nodes=d2,
        beta_nodes=beta,
        dbeta_nodes=dalpha * v.dflux(s),
        metadata=meta,
    )


# --- entropy functional --------------------------------------------------------


def _bump(z):
    z = np.asarray(z, dtype=float)
    return np.where(np.abs(z) <= 1.0, 0.5 * (1.0 + np.cos(np.pi * z)), 0.0)


def _bump_integral(z):
    """Antiderivative of the bump, constant outside ``[-1, 1]``."""
    z = np.clip(np.asarray(z, dtype=float), -1.0, 1.0)
    return 0.5 * (z + np.sin(np.pi * z) / np.pi)


@dataclass(frozen=True)
class TestFunctionFamily:
    """Tensor-product cosine bumps ``B((t-tc)/r) B((x-xc)/r)``.

    ``members`` holds ``(tc, xc, r)`` triples; ``B(z) = (1 + cos(pi z))/2``
    on ``[-1, 1]`` is C1.  Centers with ``tc < r`` reach ``t = 0`` and pick
    up the initial-datum term.
    """

    __test__ = False

    members: Tuple[Tuple[float, float, float], ...]

    @classmethod
    def lattice(
        cls,
        t_end: float,
        x_window: Tuple[float, float],
        n_t: int = 5,
        n_x: int = 9,
        widths: Sequence[float] = (0.1, 0.2, 0.4),
    ) -> "TestFunctionFamily":
        a, b = x_window
        members = []
        for r in widths:
            if r >= t_end or 2 * r > b - a:
                continue
            for tc in np.linspace(0.0, t_end - r, n_t):
                for xc in np.linspace(a + r, b - r, n_x):
                    members.append((float(tc), float(xc), float(r)))
        if not members:
            raise ValueError("no test function fits the window")
        return cls(tuple(members))

    def __len__(self):
        return len(self.members)

    def c1_scale(self) -> float:
        """``max |grad phi|`` over the family (``pi/(2 r_min)``)."""
        return max(0.5 * np.pi / r for _, _, r in self.members)


@dataclass(frozen=True)
class EntropyResidual:
    worst: float
    location: Tuple[float, float, float]
    index: int
    values: np.ndarray

    def __iter__(self):
        yield self.worst
        yield self.location


def entropy_residuals(traj: Trajectory, pair: EntropyPair, family: TestFunctionFamily) -> np.ndarray:
    """Discrete entropy functional for every member of ``family``.

    Exact per-cell integration in ``x`` (the density is piecewise constant),
    trapezoid rule over the snapshot times, plus ``int alpha(q0) phi(0, x) dx``.
    """
    grid = traj.grid
    times = traj.times
    t_last = times[-1]
    for tc, xc, r in family.members:
        if xc - r < grid.x_min - 1e-12 or xc + r > grid.x_max + 1e-12 or tc + r > t_last + 1e-12:
            raise TestFunctionOutOfWindow(
                f"bump (tc={tc}, xc={xc}, r={r}) leaves [0,{t_last}]x[{grid.x_min},{grid.x_max}]"
            )
    q = traj.q_matrix()
    A = pair.alpha(q)
    B = pair.beta(q)
    xi = grid.interfaces

    out = np.empty(len(family))
    cache: Dict[Tuple[float, float], Tuple[np.ndarray, np.ndarray]] = {}
    for m, (tc, xc, r) in enumerate(family.members):
        key = (xc, r)
        if key not in cache:
            z = (xi - xc) / r
            dP = np.diff(_bump_integral(z))  # int_cell B dx / r
            dB = np.diff(_bump(z))  # int_cell dB/dx dx
            cache[key] = (A @ dP, B @ dB)
        a_k, b_k = cache[key]
        zt = (times - tc) / r
        # product trapezoid: endpoint mean of the coefficient times the exact
        # integral of the time factor, so constant states cancel exactly
        a_mid = 0.5 * (a_k[1:] + a_k[:-1])
        b_mid = 0.5 * (b_k[1:] + b_k[:-1])
        dB_t = r * np.diff(_bump(zt))
        dP_t = r * np.diff(_bump_integral(zt))
        initial = r * a_k[0] * float(_bump(-tc / r))
        out[m] = float(a_mid @ dB_t + b_mid @ dP_t + initial)
    return out


def entropy_residual(traj: Trajectory, pair: EntropyPair, family: TestFunctionFamily) -> EntropyResidual:
    """Worst (most negative) entropy functional value over ``family``."""
    vals = entropy_residuals(traj, pair, family)
    i = int(np.argmin(vals))
    return EntropyResidual(float(vals[i]), family.members[i], i, vals)


def entropy_error_budget(traj: Trajectory, family: TestFunctionFamily, constant: float = 10.0) -> float:
    """Tolerance ``constant * (dx + dt) * |phi|_C1`` for the residual verdict.

    ``dt`` is the largest snapshot spacing.  The entropy inequality holds
    for discrete solutions only up to this scheme and quadrature error.
    """
    dt = float(np.max(np.diff(traj.times))) if len(traj.snapshots) > 1 else 0.0
    return constant * (traj.grid.dx + dt) * family.c1_scale()


# --- total variation ------------------------------------------------------------


@dataclass(frozen=True)
class TVSeries:
    field: str
    times: np.ndarray
    values: np.ndarray
    bound: Optional[float] = None

    def max_increase(self) -> float:
        if self.values.size < 2:
            return 0.0
        return float(max(0.0, np.max(np.diff(self.values))))


def tv_series(traj: Trajectory, field: str = "q") -> TVSeries:
    """TV of ``q`` or of the interface speed ``w`` at every snapshot.

    For ``w`` the attached bound is ``max|V'| * TV(q0)`` with ``max|V'|``
    taken over the range of the initial field.
    """
    if field == "q":
        vals = [total_variation(s.q) for s in traj.snapshots]
        return TVSeries("q", traj.times, np.array(vals))
    if field == "w":
        vals = [total_variation(s.w) for s in traj.snapshots]
        q0 = traj.initial
        lo = min(q0.values.min(), q0.left, q0.right)
        hi = max(q0.values.max(), q0.left, q0.right)
        bound = traj.config.velocity.lipschitz(lo, hi) * total_variation(q0)
        return TVSeries("w", traj.times, np.array(vals), bound)
    raise ValueError(f"field must be 'q' or 'w', got {field!r}")


class StepMonitor:
    """Per-step statistics; pass as ``monitor=`` to :func:`simulate`."""

    def __init__(self, track_tv: bool = True):
        self.track_tv = track_tv
        self.times: List[float] = []
        self.q_min: List[float] = []
        self.q_max: List[float] = []
        self.tv_q: List[float] = []
        self.tv_w: List[float] = []
        self.defect_increasing: List[float] = []
        self.defect_decreasing: List[float] = []

    def __call__(self, t, q: CellField, w) -> None:
        self.times.append(t)
        vals = q.values
        self.q_min.append(float(vals.min()))
        self.q_max.append(float(vals.max()))
        self.defect_increasing.append(monotonicity_defect(q, "increasing"))
        self.defect_decreasing.append(monotonicity_defect(q, "decreasing"))
        if self.track_tv:
            self.tv_q.append(total_variation(q))
            self.tv_w.append(total_variation(w))

    def tv_w_max_increase(self) -> float:
        d = np.diff(self.tv_w)
        return float(max(0.0, d.max())) if d.size else 0.0


# --- Oleinik ---------------------------------------------------------------------


@dataclass(frozen=True)
class OleinikResult:
    orientation: str
    C: float
    verdict: bool
    times: np.ndarray
    slopes: np.ndarray
    t_min: float


def oleinik_check(
    traj: Trajectory,
    orientation: str = "upper",
    t_min: Optional[float] = None,
    c_max: Optional[float] = None,
) -> OleinikResult:
    """Fit the smallest ``C`` with ``dq/dx <= C/t`` (upper) or ``>= -C/t`` (lower).

    Snapshots before ``t_min`` (default ``0.05 * T``) are skipped.  The
    verdict requires a finite ``C`` and, when given, ``C <= c_max``.
    """
    if orientation not in ("upper", "lower"):
        raise ValueError(f"orientation must be 'upper' or 'lower', got {orientation!r}")
    t_end = traj.times[-1]
    t_min = 0.05 * t_end if t_min is None else t_min
    dx = traj.grid.dx
    ts, slopes = [], []
    for s in traj.snapshots:
        if s.t <= 0 or s.t < t_min:
            continue
        d = np.diff(s.q.values) / dx
        slopes.append(float(d.max() if orientation == "upper" else d.min()))
        ts.append(s.t)
    ts_a, sl = np.array(ts), np.array(slopes)
    if ts_a.size == 0:
        return OleinikResult(orientation, 0.0, True, ts_a, sl, t_min)
    one_sided = np.maximum(sl, 0.0) if orientation == "upper" else np.maximum(-sl, 0.0)
    C = float(np.max(one_sided * ts_a))
    verdict = bool(np.isfinite(C) and (c_max is None or C <= c_max))
    return OleinikResult(orientation, C, verdict, ts_a, sl, t_min)


# --- convergence ------------------------------------------------------------------


def convergence_table(
    runs: Sequence[Tuple[float, Trajectory]],
    reference: Trajectory,
    window: Optional[Tuple[float, float]] = None,
    time: Optional[float] = None,
) -> List[Tuple[float, float]]:
    """L1 error of each run against ``reference`` at ``time``, sorted by eta descending.

    The reference may live on a finer nested grid; it is coarsened by exact
    cell averaging onto each run's grid.
    """
    if time is None:
        time = float(reference.times[-1])
    try:
        ref = reference.at(time).q
    except SnapshotMissing:
        raise SnapshotMissing(f"reference has no snapshot at t={time}") from None
    rows = []
    for eta, traj in runs:
        q = traj.at(time).q
        if q.grid.n_cells > ref.grid.n_cells:
            raise GridMismatch("reference must be at least as fine as every run")
        coarse = ref.coarsen(q.grid)

        rows.append((float(eta), l1_distance(q, coarse, window)))
    rows.sort(key=lambda r: -r[0])
    return rows


def strictly_decreasing(errors: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(errors, errors[1:]))


# --- report -------------------------------------------------------------------------


@dataclass
class DiagnosticsReport:
    label: str
    max_principle: dict = field(default_factory=dict)
    conservation: dict = field(default_factory=dict)
    tv_q_series: List[float] = field(default_factory=list)
    tv_w_series: List[float] = field(default_factory=list)
    tv_times: List[float] = field(default_factory=list)
    tv_w_bound: Optional[float] = None
    entropy_residual: Optional[dict] = None
    oleinik: Optional[dict] = None
    monotonicity: Optional[dict] = None
    l1_errors: Dict[str, float] = field(default_factory=dict)
    conditions: Optional[dict] = None
    notes: List[str] = field(default_factory=list)
    verdicts: Dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, default=_json_default)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def verdict_rows(self) -> List[Tuple[str, object, object, bool]]:
        rows = []
        if self.max_principle:
            mp = self.max_principle
            rows.append(("max_principle_min", mp["observed_min"], mp["bounds"][0], mp["verdict"]))
            rows.append(("max_principle_max", mp["observed_max"], mp["bounds"][1], mp["verdict"]))
        if self.conservation:
            c = self.conservation
            rows.append(("conservation", c["defect"], c["tolerance"], c["verdict"]))
        if "tv_w" in self.verdicts:
            rows.append(("tv_w_initial", self.tv_w_series[0], self.tv_w_bound, self.verdicts["tv_w"]))
        if self.entropy_residual:
            e = self.entropy_residual
            rows.append(("entropy_residual", e["worst"], -e["budget"], e["verdict"]))
        if self.oleinik:
            o = self.oleinik
            rows.append((f"oleinik_{o['orientation']}", o["C"], o.get("c_max"), o["verdict"]))
        if self.monotonicity:
            m = self.monotonicity
            rows.append((f"monotonicity_{m['direction']}", m["max_defect"], m["tolerance"], m["verdict"]))
        for name, err in self.l1_errors.items():
            rows.append((f"l1_error[{name}]", err, None, True))
        return rows

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["check", "value", "bound", "verdict"])
            for row in self.verdict_rows():
                wr.writerow(["" if v is None else v for v in row])


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def build_report(
    traj: Trajectory,
    label: str = "run",
    max_principle: bool = True,
    tv: bool = True,
    monotonicity: bool = False,
    oleinik: Optional[str] = None,
    entropy: bool = False,
    monitor: Optional[StepMonitor] = None,
    bound_tol: float = 1e-10,
    conservation_tol: float = 1e-10,
    tv_tol: float = 1e-8,
) -> DiagnosticsReport:
    """Aggregate the enabled checks for one trajectory.

    With a :class:`StepMonitor` the max-principle, monotonicity and TV
    checks cover every time step; otherwise only the snapshots.
    """
    from .models import check_velocity_conditions

    rep = DiagnosticsReport(label)
    cfg = traj.config
    q0 = traj.initial
    lo = float(min(q0.values.min(), q0.left, q0.right))
    hi = float(max(q0.values.max(), q0.left, q0.right))
    v = cfg.velocity

    rep.conditions = check_velocity_conditions(v, lo, hi).to_dict() if hi > lo else None
    kernel = cfg.kernel
    if kernel is not None and not kernel.strictly_decreasing:
        rep.notes.append(
            f"{kernel.family} kernel is not strictly decreasing: the exponential-kernel "
            "convergence result does not apply; monotone-data results need only a finite first moment"
        )
    if kernel is not None and kernel.family != "exponential":
        rep.notes.append("entropy-based convergence is only established for the exponential kernel")
    if rep.conditions and not rep.conditions["v_strictly_decreasing"]:
        rep.notes.append("V' vanishes somewhere on the datum range: only weak-star convergence is guaranteed")

    if max_principle:
        seen_min = min(traj.q_min_seen, min(monitor.q_min) if monitor and monitor.q_min else math.inf)
        seen_max = max(traj.q_max_seen, max(monitor.q_max) if monitor and monitor.q_max else -math.inf)
        ok = seen_min >= lo - bound_tol and seen_max <= hi + bound_tol
        rep.max_principle = {
            "observed_min": seen_min,
            "observed_max": seen_max,
            "bounds": [lo, hi],
            "tolerance": bound_tol,
            "verdict": bool(ok),
        }
        rep.verdicts["max_principle"] = bool(ok)

    if not math.isnan(traj.mass_ledger[-1][2]):
        defect = traj.conservation_defect()
        rep.conservation = {"defect": defect, "tolerance": conservation_tol, "verdict": bool(defect <= conservation_tol)}
        rep.verdicts["conservation"] = bool(defect <= conservation_tol)

    if tv:
        sq, sw = tv_series(traj, "q"), tv_series(traj, "w")
        rep.tv_times = sq.times.tolist()
        rep.tv_q_series = sq.values.tolist()
        rep.tv_w_series = sw.values.tolist()
        rep.tv_w_bound = sw.bound
        rep.verdicts["tv_w"] = bool(sw.values[0] <= sw.bound + tv_tol)
        if rep.conditions and rep.conditions["tv_bound"] and kernel is not None and kernel.family == "exponential":
            inc = monitor.tv_w_max_increase() if monitor and monitor.tv_w else sw.max_increase()
            rep.verdicts["tv_w_nonincreasing"] = bool(inc <= tv_tol)

    if monotonicity:
        direction = _datum_direction(q0)
        if direction is None:
            rep.notes.append("initial field is not monotone; monotonicity check skipped")
        else:
            if monitor and monitor.times:
                series = monitor.defect_increasing if direction == "increasing" else monitor.defect_decreasing
                worst = max(series)
            else:
                worst = max(monotonicity_defect(s.q, direction) for s in traj.snapshots)
            rep.monotonicity = {"direction": direction, "max_defect": worst, "tolerance": 1e-12, "verdict": bool(worst <= 1e-12)}
            rep.verdicts["monotonicity"] = bool(worst <= 1e-12)

    if oleinik:
        res = oleinik_check(traj, oleinik)
        rep.oleinik = {"orientation": oleinik, "C": res.C, "t_min": res.t_min, "verdict": res.verdict}
        rep.verdicts["oleinik"] = res.verdict

    if entropy and hi > lo:
        try:
            pair = build_entropy_pair(v, lo, hi, "tailored")
        except EntropyUnboundedAtZero as exc:
            rep.notes.append(f"entropy check skipped: {exc}")
        else:
            grid = traj.grid
            family = TestFunctionFamily.lattice(float(traj.times[-1]), (grid.x_min, grid.x_max))
            res = entropy_residual(traj, pair, family)
            budget = entropy_error_budget(traj, family)
            ok = res.worst >= -budget
            rep.entropy_residual = {
                "worst": res.worst,
                "test_function": list(res.location),
                "budget": budget,
                "budget_constant": 10.0,
                "verdict": bool(ok),
            }
            rep.verdicts["entropy"] = bool(ok)
    return rep


def _datum_direction(q0: CellField) -> Optional[str]:
    seq = np.concatenate([[q0.left], q0.values, [q0.right]])
    d = np.diff(seq)
    if np.all(d >= 0) and np.any(d > 0):
        return "increasing"
    if np.all(d <= 0) and np.any(d < 0):
        return "decreasing"
    return None
