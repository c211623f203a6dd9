import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from nonlocal_traffic.errors import InvalidInterval
from nonlocal_traffic.grid import GridSpec, total_variation
from nonlocal_traffic.models import (
    box_datum,
    check_velocity_conditions,
    constant_datum,
    constant_kernel,
    convex_velocity,
    exponential_kernel,
    greenshields,
    kernel_cell_mass,
    kernel_first_moment,
    linear_velocity,
    piecewise_constant_datum,
    polynomial_velocity,
    quadratic_velocity,
    ramp_datum,
    riemann_datum,
    tabulated_kernel,
)

from .oracles import sampled_average

VELOCITIES = [linear_velocity(), quadratic_velocity(), convex_velocity(), greenshields(3), greenshields(2, 1.5, 0.8)]


class TestKernelCellMass:
    def test_exponential_full_mass(self):
        assert kernel_cell_mass(exponential_kernel(0.3), 0.0, math.inf) == 1.0

    def test_constant_full_support(self):
        assert kernel_cell_mass(constant_kernel(0.2), 0.0, 0.2) == pytest.approx(1.0, abs=1e-15)

    def test_exponential_first_eta(self):
        eta = 0.05
        quad, _ = integrate.quad(lambda s: math.exp(-s / eta) / eta, 0.0, eta)
        assert kernel_cell_mass(exponential_kernel(eta), 0.0, eta) == pytest.approx(quad, abs=1e-13)
        assert quad == pytest.approx(1 - math.exp(-1), abs=1e-12)

    def test_rejects_reversed_interval(self):
        with pytest.raises(InvalidInterval):
            kernel_cell_mass(exponential_kernel(1.0), 0.5, 0.2)

    @pytest.mark.parametrize(
        "kernel",
        [exponential_kernel(0.1), constant_kernel(0.1), tabulated_kernel(0.1, [0, 0.5, 1.0], [1.2, 0.8, 0.4])],
    )
    @given(st.floats(0, 0.3), st.floats(0, 0.3), st.floats(0, 0.3))
    def test_additive(self, kernel, a, b, c):
        a, b, c = sorted((a, b, c))
        total = kernel_cell_mass(kernel, a, b) + kernel_cell_mass(kernel, b, c)
        assert total == pytest.approx(kernel_cell_mass(kernel, a, c), abs=1e-14)

    def test_partition_sums(self):
        k = constant_kernel(0.1)
        edges = np.linspace(0, 0.25, 26)
        assert sum(kernel_cell_mass(k, a, b) for a, b in zip(edges[:-1], edges[1:])) == pytest.approx(1.0, abs=1e-14)
        e = exponential_kernel(0.1)
        edges = np.linspace(0, 5.0, 501)
        s = sum(kernel_cell_mass(e, a, b) for a, b in zip(edges[:-1], edges[1:]))
        assert s == pytest.approx(1 - math.exp(-50), abs=1e-13)

    def test_tabulated_matches_quadrature(self):
        k = tabulated_kernel(0.2, [0, 0.5, 1.5], [1.0, 0.6, 0.0])
        dens = lambda s: np.interp(s / 0.2, k.knots, k.values, right=0.0) / 0.2  # noqa: E731
        quad, _ = integrate.quad(dens, 0.03, 0.17, points=[0.1])
        assert kernel_cell_mass(k, 0.03, 0.17) == pytest.approx(quad, abs=1e-12)


class TestKernelSpec:
    def test_cell_masses_plus_tail_is_one(self):
        for k in [exponential_kernel(0.05), constant_kernel(0.05), tabulated_kernel(0.05, [0, 1, 2], [1, 0.5, 0])]:
            masses, tail = k.cell_masses(0.01, 50)
            assert masses.sum() + tail == pytest.approx(1.0, abs=1e-14)

    def test_tabulated_rescaled_with_warning(self):
        with pytest.warns(UserWarning, match="rescaling"):
            k = tabulated_kernel(1.0, [0, 1], [1.0, 0.0])
        assert k.normalized
        assert kernel_cell_mass(k, 0.0, 1.0) == pytest.approx(1.0)

    def test_zero_tabulated_not_normalized(self):
        k = tabulated_kernel(1.0, [0, 1], [0.0, 0.0])
        assert not k.normalized

    @pytest.mark.parametrize(
        "knots,values",
        [([0, 1], [0.5, 1.0]), ([0.1, 1], [1, 0]), ([0, 1, 1], [1, 1, 0]), ([0, 1], [-1, 0])],
    )
    def test_tabulated_rejects_invalid(self, knots, values):
        with pytest.raises(ValueError):
            tabulated_kernel(1.0, knots, values)

    def test_bad_eta(self):
        with pytest.raises(ValueError):
            exponential_kernel(0.0)

    def test_first_moments(self):
        assert kernel_first_moment(exponential_kernel(0.3)) == 1.0
        quad, _ = integrate.quad(lambda s: s * math.exp(-s), 0, math.inf)
        assert quad == pytest.approx(1.0)
        assert kernel_first_moment(constant_kernel(0.3)) == 0.5
        assert kernel_first_moment(tabulated_kernel(1.0, [0, 1], [0.0, 0.0])) == 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            k = tabulated_kernel(1.0, [0, 1, 3], [1.0, 0.5, 0.0])
        quad, _ = integrate.quad(lambda s: s * np.interp(s, k.knots, k.values), 0, 3, points=[1])
        assert kernel_first_moment(k) == pytest.approx(quad, abs=1e-12)

    def test_strictly_decreasing_flags(self):
        assert exponential_kernel(1).strictly_decreasing
        assert not constant_kernel(1).strictly_decreasing


class TestVelocity:
    def test_greenshields_values(self):
        v = greenshields(2, 1.0, 1.0)
        assert float(v.V(0.0)) == 1.0
        assert float(v.V(0.5)) == 0.75

    def test_linear(self):
        assert float(linear_velocity().V(0.25)) == 0.75

    @pytest.mark.parametrize("v", VELOCITIES, ids=lambda v: v.label)
    def test_derivatives_match_finite_differences(self, v):
        s = np.linspace(0.05, 0.95, 19)
        h = 1e-6
        np.testing.assert_allclose(v.dV(s), (v.V(s + h) - v.V(s - h)) / (2 * h), atol=1e-8)
        np.testing.assert_allclose(v.d2V(s), (v.dV(s + h) - v.dV(s - h)) / (2 * h), atol=1e-6)
        np.testing.assert_allclose(v.dflux(s), (v.flux(s + h) - v.flux(s - h)) / (2 * h), atol=1e-8)

    @pytest.mark.parametrize("v", VELOCITIES, ids=lambda v: v.label)
    def test_admissible_on_unit_interval(self, v):
        assert v.admissibility_defect(0.0, min(1.0, v.q_max)) == 0.0

    def test_polynomial_needs_coefficients(self):
        with pytest.raises(ValueError):
            polynomial_velocity(())

    def test_bad_exponent(self):
        with pytest.raises(ValueError):
            greenshields(0)


class TestConditionChecker:
    def test_quadratic_tv_bound(self):
        assert check_velocity_conditions(quadratic_velocity(), 0.0, 1.0).tv_bound

    def test_linear_on_positive_range(self):
        r = check_velocity_conditions(linear_velocity(), 0.01, 1.0)
        assert r.v_prime_bounds and r.flux_strict_convexity and r.tv_bound

    def test_linear_ratio_diverges_at_zero(self):
        assert not check_velocity_conditions(linear_velocity(), 0.0, 1.0).v_prime_bounds

    def test_convex_fails_tv_bound(self):
        assert not check_velocity_conditions(convex_velocity(), 0.0, 1.0).tv_bound

    @pytest.mark.parametrize("k", [1, 2, 3, 4, 6])
    def test_greenshields_tv_bound(self, k):
        assert check_velocity_conditions(greenshields(k), 0.0, 1.0).tv_bound

    def test_quadratic_oleinik(self):
        # |2V' + sV''| = 6s: uniform only away from zero
        assert not check_velocity_conditions(quadratic_velocity(), 0.0, 1.0).oleinik_uniform
        r = check_velocity_conditions(quadratic_velocity(), 0.25, 0.75)
        assert r.oleinik_uniform and r.oleinik_c == pytest.approx(1.5)
        assert r.flux_curvature == "concave"

    def test_invalid_interval(self):
        with pytest.raises(InvalidInterval):
            check_velocity_conditions(quadratic_velocity(), 0.6, 0.5)

    def test_report_serializes(self):
        d = check_velocity_conditions(quadratic_velocity(), 0.25, 0.75).to_dict()
        assert d["convergence_conditions"] is True
        assert isinstance(d["v_prime_ratio_range"], list)


class TestInitialDatum:
    def test_box_rasterization(self):
        g = GridSpec(-2, 2, 2000)
        q = box_datum().rasterize(g)
        assert q.values.min() == 0.25 and q.values.max() == 0.75
        assert (q.left, q.right) == (0.25, 0.25)
        assert q.mass() == pytest.approx(0.25 * 4 + 0.5)
        assert total_variation(q) == pytest.approx(1.0)

    def test_partial_cell_average(self):
        g = GridSpec(0, 1, 4)
        q = riemann_datum(0.0, 1.0, 0.3).rasterize(g)
        np.testing.assert_allclose(q.values, [0.0, 0.8, 1.0, 1.0])

    def test_ramp_cell_averages_exact(self):
        d = ramp_datum(0.2, 0.8, -0.33, 0.71)
        g = GridSpec(-1, 1, 37)
        q = d.rasterize(g)
        xi = g.interfaces
        expect = [sampled_average(d, a, b, 200_000) for a, b in zip(xi[:-1], xi[1:])]
        np.testing.assert_allclose(q.values, expect, atol=1e-9)

    def test_piecewise_constant(self):
        d = piecewise_constant_datum([-1, 0, 1], [0.1, 0.4, 0.2, 0.9])
        assert d.bounds() == (0.1, 0.9)
        assert d.total_variation() == pytest.approx(0.3 + 0.2 + 0.7)
        assert d.monotone_direction() is None
        assert riemann_datum(0.75, 0.25).monotone_direction() == "decreasing"

    def test_piecewise_validation(self):
        with pytest.raises(ValueError):
            piecewise_constant_datum([0, 0], [1, 2, 3])
        with pytest.raises(ValueError):
            piecewise_constant_datum([0], [1])

    def test_constant(self):
        q = constant_datum(0.4).rasterize(GridSpec(0, 1, 5))
        assert np.all(q.values == 0.4)
