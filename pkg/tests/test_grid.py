import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nonlocal_traffic.errors import GridMismatch, InvalidInterval
from nonlocal_traffic.grid import (
    CellField,
    GridSpec,
    InterfaceField,
    l1_distance,
    mollify,
    monotonicity_defect,
    total_variation,
)
from nonlocal_traffic.models import box_datum

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def field_on(grid, values, ext=None):
    return CellField(grid, np.asarray(values, dtype=float), ext)


class TestGridSpec:
    def test_geometry(self):
        g = GridSpec(-2.0, 2.0, 4000)
        assert g.dx == pytest.approx(0.001)
        assert g.centers[0] == pytest.approx(-2.0 + 0.0005)
        assert g.interfaces[0] == -2.0
        assert g.interfaces[-1] == 2.0
        assert len(g.interfaces) == 4001

    @pytest.mark.parametrize("args", [(1.0, 0.0, 10), (0.0, 0.0, 10), (0.0, 1.0, 1), (0.0, 1.0, 2.5)])
    def test_rejects_bad_grids(self, args):
        with pytest.raises(ValueError):
            GridSpec(*args)

    def test_refine(self):
        assert GridSpec(0, 1, 10).refine(4) == GridSpec(0, 1, 40)


class TestCellField:
    def test_values_are_read_only(self):
        f = field_on(GridSpec(0, 1, 4), [1, 2, 3, 4])
        with pytest.raises(ValueError):
            f.values[0] = 5.0

    def test_default_extension_is_end_values(self):
        f = field_on(GridSpec(0, 1, 3), [1, 2, 3])
        assert (f.left, f.right) == (1.0, 3.0)

    @pytest.mark.parametrize("vals", [[1, 2], [1, np.nan, 3]])
    def test_rejects_bad_values(self, vals):
        with pytest.raises(ValueError):
            field_on(GridSpec(0, 1, 3), vals)

    def test_csv_round_trip(self, tmp_path):
        g = GridSpec(-1, 1, 7)
        f = field_on(g, np.linspace(0, 1, 7) ** 2, (0.0, 1.0))
        p = tmp_path / "f.csv"
        f.to_csv(p)
        assert p.read_text().splitlines()[0] == "x,value"
        back = CellField.from_csv(p, g, (0.0, 1.0))
        np.testing.assert_array_equal(back.values, f.values)

    def test_csv_grid_mismatch(self, tmp_path):
        p = tmp_path / "f.csv"
        field_on(GridSpec(0, 1, 5), np.ones(5)).to_csv(p)
        with pytest.raises(GridMismatch):
            CellField.from_csv(p, GridSpec(0, 1, 6))

    def test_interface_csv_header(self, tmp_path):
        g = GridSpec(0, 1, 3)
        w = InterfaceField(g, [1.0, 0.5, 0.25, 0.125])
        p = tmp_path / "w.csv"
        w.to_csv(p)
        lines = p.read_text().splitlines()
        assert lines[0] == "x,w" and len(lines) == 5

    def test_coarsen_is_exact_averaging(self):
        fine = field_on(GridSpec(0, 1, 6), [1, 3, 2, 2, 0, 6])
        coarse = fine.coarsen(GridSpec(0, 1, 3))
        np.testing.assert_allclose(coarse.values, [2, 2, 3])
        assert coarse.mass() == pytest.approx(fine.mass())

    def test_coarsen_requires_nesting(self):
        with pytest.raises(GridMismatch):
            field_on(GridSpec(0, 1, 6), np.ones(6)).coarsen(GridSpec(0, 1, 4))


class TestTotalVariation:
    def test_constant(self):
        assert total_variation(field_on(GridSpec(0, 1, 10), np.full(10, 0.3), (0.3, 0.3))) == 0.0

    def test_box(self):
        g = GridSpec(-2, 2, 400)
        assert total_variation(box_datum().rasterize(g)) == pytest.approx(1.0)

    def test_ramp_with_extension(self):
        g = GridSpec(0, 1, 50)
        f = field_on(g, g.centers, (0.0, 1.0))
        assert total_variation(f) == pytest.approx(1.0)

    def test_counts_boundary_jumps(self):
        f = field_on(GridSpec(0, 1, 3), [1, 1, 1], (0.0, 2.0))
        assert total_variation(f) == pytest.approx(2.0)

    @given(arrays(float, 12, elements=finite), finite, finite, finite)
    def test_shift_invariant(self, vals, lo, hi, c):
        g = GridSpec(0, 1, 12)
        a = total_variation(field_on(g, vals, (lo, hi)))
        b = total_variation(field_on(g, vals + c, (lo + c, hi + c)))
        assert b == pytest.approx(a, abs=1e-9)


class TestL1Distance:
    def test_identical(self):
        f = box_datum().rasterize(GridSpec(-2, 2, 100))
        assert l1_distance(f, f) == 0.0

    def test_unit_box_window(self):
        g = GridSpec(-2, 2, 400)
        assert l1_distance(field_on(g, np.ones(400)), field_on(g, np.zeros(400)), (0, 1)) == pytest.approx(1.0)

    def test_shifted_indicators(self):
        g = GridSpec(-2, 2, 400)
        x = g.centers
        f = field_on(g, ((x > 0) & (x < 1)).astype(float))
        h = field_on(g, ((x > 0.5) & (x < 1.5)).astype(float))
        assert l1_distance(f, h, (-2, 2)) == pytest.approx(1.0)

    def test_partial_cell_overlap(self):
        g = GridSpec(0, 1, 2)
        assert l1_distance(field_on(g, [1, 1]), field_on(g, [0, 0]), (0.25, 0.75)) == pytest.approx(0.5)

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatch):
            l1_distance(field_on(GridSpec(0, 1, 4), np.ones(4)), field_on(GridSpec(0, 1, 5), np.ones(5)))

    @pytest.mark.parametrize("window", [(1, 0), (-1, 0.5), (0.5, 2)])
    def test_bad_window(self, window):
        f = field_on(GridSpec(0, 1, 4), np.ones(4))
        with pytest.raises(InvalidInterval):
            l1_distance(f, f, window)

    @settings(max_examples=60)
    @given(
        arrays(float, 16, elements=finite),
        arrays(float, 16, elements=finite),
        arrays(float, 16, elements=finite),
    )
    def test_metric_axioms(self, a, b, c):
        g = GridSpec(-1, 1, 16)
        fa, fb, fc = field_on(g, a), field_on(g, b), field_on(g, c)
        assert l1_distance(fa, fb) == pytest.approx(l1_distance(fb, fa))
        assert l1_distance(fa, fc) <= l1_distance(fa, fb) + l1_distance(fb, fc) + 1e-9


class TestMonotonicityDefect:
    def test_nondecreasing(self):
        assert monotonicity_defect([0, 0, 1, 2, 2], "increasing") == 0.0

    def test_single_violation(self):
        assert monotonicity_defect([0, 1, 0.5], "increasing") == pytest.approx(0.5)

    @pytest.mark.parametrize("direction", ["increasing", "decreasing"])
    def test_flat(self, direction):
        assert monotonicity_defect([1, 1, 1], direction) == 0.0

    def test_unknown_direction(self):
        with pytest.raises(ValueError):
            monotonicity_defect([1, 2], "sideways")

    @given(arrays(float, 10, elements=finite))
    def test_reverse_swaps_direction(self, vals):
        f = field_on(GridSpec(0, 1, 10), vals)
        assert monotonicity_defect(f, "increasing") == monotonicity_defect(f.reversed(), "decreasing")


class TestMollify:
    def test_preserves_bounds_and_mass(self):
        g = GridSpec(-2, 2, 400)
        q0 = box_datum().rasterize(g)
        m = mollify(q0, 8 * g.dx)
        assert m.values.min() >= 0.25 - 1e-15 and m.values.max() <= 0.75 + 1e-15
        assert m.mass() == pytest.approx(q0.mass(), abs=1e-14)
        assert total_variation(m) == pytest.approx(1.0)

    def test_preserves_monotonicity(self):
        g = GridSpec(0, 1, 50)
        f = field_on(g, np.sort(np.random.default_rng(1).uniform(size=50)))
        assert monotonicity_defect(mollify(f, 0.1), "increasing") <= 1e-15

    def test_width_below_one_cell_is_identity(self):
        g = GridSpec(0, 1, 10)
        f = field_on(g, np.arange(10.0))
        assert mollify(f, 0.05) is f
