import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlocal_traffic.errors import FluxNotGenuinelyNonlinear
from nonlocal_traffic.grid import GridSpec, l1_distance
from nonlocal_traffic.local_reference import FluxModel, RiemannSolution, exact_riemann, godunov_flux, godunov_simulate
from nonlocal_traffic.models import constant_datum, convex_velocity, linear_velocity, quadratic_velocity, riemann_datum

from .oracles import flux_cubic, godunov_flux_dense, rarefaction_profile_cubic, rh_speed, sampled_average

FM = FluxModel(quadratic_velocity())
unit = st.floats(0, 1, allow_nan=False)


class TestGodunovFlux:
    def test_consistency_point(self):
        assert float(godunov_flux(FM, 0.5, 0.5)) == pytest.approx(0.375, abs=1e-15)

    def test_interior_max(self):
        ref = godunov_flux_dense(flux_cubic, 0.75, 0.25, n=10**6 + 1)
        val = float(godunov_flux(FM, 0.75, 0.25))
        assert val == pytest.approx(2 / (3 * math.sqrt(3)), abs=1e-12)
        assert val == pytest.approx(ref, abs=1e-11)

    def test_endpoint_min(self):
        assert float(godunov_flux(FM, 0.25, 0.75)) == 0.234375

    @given(unit)
    def test_consistency(self, a):
        assert float(godunov_flux(FM, a, a)) == pytest.approx(float(FM.f(a)), abs=1e-15)

    @settings(max_examples=200)
    @given(unit, unit)
    def test_matches_dense_oracle(self, a, b):
        ref = godunov_flux_dense(flux_cubic, a, b, n=20_001)
        assert float(godunov_flux(FM, a, b)) == pytest.approx(ref, abs=1e-7)

    @settings(max_examples=200)
    @given(unit, unit, unit)
    def test_monotone_in_each_argument(self, a, b, c):
        lo, hi = min(a, c), max(a, c)
        assert float(godunov_flux(FM, lo, b)) <= float(godunov_flux(FM, hi, b)) + 1e-15
        assert float(godunov_flux(FM, b, lo)) >= float(godunov_flux(FM, b, hi)) - 1e-15

    def test_vectorized(self):
        a = np.array([0.1, 0.75, 0.25])
        b = np.array([0.1, 0.25, 0.75])
        out = godunov_flux(FM, a, b)
        np.testing.assert_allclose(out, [FM.f(0.1), 2 / (3 * math.sqrt(3)), 0.234375], atol=1e-12)


class TestExactRiemann:
    def test_constant(self):
        r = exact_riemann(FM, 0.4, 0.4)
        assert r.kind == "constant"
        assert r.sample(-3.0) == 0.4 and r.sample(5.0) == 0.4

    def test_shock(self):
        r = exact_riemann(FM, 0.25, 0.75)
        assert r.kind == "shock"
        assert r.speed == pytest.approx(0.1875, abs=1e-14)
        assert r.speed == pytest.approx(rh_speed(flux_cubic, 0.25, 0.75), abs=1e-14)
        assert float(FM.df(0.25)) == pytest.approx(0.8125)
        assert float(FM.df(0.75)) == pytest.approx(-0.6875)
        assert r.lax_admissible

    def test_rarefaction(self):
        r = exact_riemann(FM, 0.75, 0.25)
        assert r.kind == "rarefaction"
        assert (r.fan_lo, r.fan_hi) == pytest.approx((-0.6875, 0.8125))
        assert r.sample(0.0) == pytest.approx(1 / math.sqrt(3), abs=1e-11)
        xi = np.linspace(-0.6, 0.8, 29)
        np.testing.assert_allclose(r.sample(xi), rarefaction_profile_cubic(xi), atol=1e-11)
        assert r.sample(-1.0) == 0.75 and r.sample(1.0) == 0.25

    def test_rarefaction_sampler_monotone_and_continuous(self):
        r = exact_riemann(FM, 0.75, 0.25)
        xi = np.linspace(-1, 1, 4001)
        s = r.sample(xi)
        assert np.all(np.diff(s) <= 1e-12)
        assert np.max(np.abs(np.diff(s))) < 0.02

    def test_convex_flux_swaps_cases(self):
        fm = FluxModel(convex_velocity())
        # f = q(1-q)^2 has f'' = 6q - 4 < 0 on [0, 0.6]; convex on [0.7, 1]
        assert exact_riemann(fm, 0.75, 0.95).kind == "rarefaction"
        assert exact_riemann(fm, 0.95, 0.75).kind == "shock"

    def test_inflection_rejected(self):
        with pytest.raises(FluxNotGenuinelyNonlinear):
            exact_riemann(FluxModel(convex_velocity()), 0.2, 0.9)

    def test_inadmissible_shock(self):
        r = RiemannSolution.shock(FM, 0.75, 0.25)
        assert not r.lax_admissible
        assert r.speed == pytest.approx(0.1875)

    @pytest.mark.parametrize("q_l,q_r", [(0.75, 0.25), (0.25, 0.75), (0.1, 0.9)])
    def test_cell_averages_exact(self, q_l, q_r):
        r = exact_riemann(FM, q_l, q_r)
        g = GridSpec(-1, 1, 40)
        t, x0 = 0.7, 0.1
        avg = r.cell_averages(g, t, x0).values
        xi = g.interfaces
        ref = [sampled_average(lambda x: r.sample((x - x0) / t), a, b, 4000) for a, b in zip(xi[:-1], xi[1:])]
        np.testing.assert_allclose(avg, ref, atol=5e-5)

    def test_initial_averages(self):
        r = exact_riemann(FM, 0.25, 0.75)
        vals = r.cell_averages(GridSpec(0, 1, 4), 0.0, 0.3).values
        np.testing.assert_allclose(vals, [0.25, 0.65, 0.75, 0.75])


class TestGodunovSimulate:
    def test_constant(self):
        traj = godunov_simulate(FM, constant_datum(0.3), GridSpec(-1, 1, 100), 0.5, 0.5)
        np.testing.assert_allclose(traj.final.values, 0.3, atol=1e-15)

    def test_shock_position(self):
        g = GridSpec(-2, 2, 2000)
        x0 = -0.2
        traj = godunov_simulate(FM, riemann_datum(0.25, 0.75, x0), g, 0.5, 0.5)
        q = traj.final.values
        cross = np.argmax(q >= 0.5)
        assert abs(g.centers[cross] - (x0 + 0.09375)) <= 2 * g.dx

    def test_max_principle_and_mass(self):
        traj = godunov_simulate(FM, riemann_datum(0.75, 0.25), GridSpec(-2, 2, 400), 0.5, 0.5, np.linspace(0, 0.5, 6))
        assert 0.25 - 1e-15 <= traj.q_min_seen and traj.q_max_seen <= 0.75 + 1e-15
        assert traj.conservation_defect() <= 1e-12

    def test_interface_field_is_local_velocity(self):
        traj = godunov_simulate(FM, riemann_datum(0.75, 0.25), GridSpec(-1, 1, 50), 0.5, 0.1)
        s = traj.snapshots[-1]
        np.testing.assert_allclose(s.w.values[:-1], FM.velocity.V(s.q.values))

    def test_linear_flux_rarefaction(self):
        fm = FluxModel(linear_velocity())
        assert exact_riemann(fm, 0.6, 0.2).kind == "rarefaction"


def _l1_errors(q_l, q_r, ns, t=0.5):
    errs = []
    r = exact_riemann(FM, q_l, q_r)
    for n in ns:
        g = GridSpec(-2, 2, n)
        traj = godunov_simulate(FM, riemann_datum(q_l, q_r), g, 0.5, t)
        errs.append(l1_distance(traj.final, r.cell_averages(g, t)))
    return np.array(errs)


def _fitted_order(ns, errs):
    """Least-squares slope of log(error) against log(dx)."""
    return np.polyfit(np.log(4.0 / np.asarray(ns)), np.log(errs), 1)[0]


class TestConvergenceOrder:
    NS = (250, 500, 1000, 2000, 4000)

    def test_shock_order(self):
        # the sub-cell shock phase makes single steps of the ladder noisy; only the fit is checked
        errs = _l1_errors(0.25, 0.75, self.NS)
        order = _fitted_order(self.NS, errs)
        assert order >= 0.7, f"fitted order {order:.3f}"

    def test_rarefaction_order(self):
        errs = _l1_errors(0.75, 0.25, self.NS)
        assert np.all(np.diff(errs) < 0)
        order = _fitted_order(self.NS, errs)
        assert order >= 0.9, f"fitted order {order:.3f}"
