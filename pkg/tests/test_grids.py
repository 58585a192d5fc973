"""Grid geometry, fields, and discrete norms."""

import math

import numpy as np
import pytest

from decaylab.grids import (Field, gagliardo_seminorm_sq, h1_seminorm_sq,
                            lp_norm, make_grid, zero_field)


def sine_field(n=199, k=1):
    grid = make_grid("interval", (0.0, math.pi), n)
    return Field(grid, np.sin(k * grid.axis_nodes()))


class TestGrid:
    def test_interval_geometry(self):
        grid = make_grid("interval", (0.0, 1.0), 9)
        assert grid.spacing[0] == pytest.approx(0.1)
        x = grid.axis_nodes()
        assert x[0] == pytest.approx(0.1)
        assert x[-1] == pytest.approx(0.9)
        assert grid.node_count == 9
        assert grid.cell_volume == pytest.approx(0.1)

    def test_box_geometry(self):
        grid = make_grid("box", ((0.0, 1.0), (0.0, 2.0)), (4, 9))
        assert grid.node_count == 36
        assert grid.shape == (4, 9)
        assert grid.cell_volume == pytest.approx(0.2 * 0.2)

    def test_too_few_nodes_rejected(self):
        with pytest.raises(ValueError):
            make_grid("interval", (0.0, 1.0), 2)

    def test_degenerate_interval_rejected(self):
        with pytest.raises(ValueError):
            make_grid("interval", (1.0, 1.0), 9)

    def test_field_size_checked(self):
        grid = make_grid("interval", (0.0, 1.0), 9)
        with pytest.raises(ValueError):
            Field(grid, np.zeros(8))

    def test_as_array2d_layout(self):
        grid = make_grid("box", ((0.0, 1.0), (0.0, 1.0)), (3, 4))
        vals = np.arange(12.0)
        assert np.array_equal(Field(grid, vals).as_array2d(),
                              vals.reshape(3, 4))


class TestNorms:
    def test_l2_of_sine_exact_on_lattice(self):
        # [DERIVED] sum sin^2(i h) = (N+1)/2 exactly, so the midpoint rule
        # reproduces ||sin||_L2 = sqrt(pi/2) to rounding.
        fld = sine_field()
        assert lp_norm(fld, 2.0) == pytest.approx(math.sqrt(math.pi / 2),
                                                  abs=1e-12)

    def test_l1_of_sine(self):
        assert lp_norm(sine_field(), 1.0) == pytest.approx(2.0, rel=1e-4)

    def test_zero_field_norm(self):
        grid = make_grid("interval", (0.0, 1.0), 9)
        assert lp_norm(zero_field(grid), 2.0) == 0.0

    def test_invalid_exponents(self):
        fld = sine_field(9)
        with pytest.raises(ValueError):
            lp_norm(fld, 0.5)
        with pytest.raises(ValueError):
            lp_norm(fld, math.inf)

    def test_nan_rejected(self):
        grid = make_grid("interval", (0.0, 1.0), 3)
        with pytest.raises(ValueError):
            lp_norm(Field(grid, np.array([1.0, math.nan, 0.0])), 2.0)

    def test_h1_seminorm_of_sine(self):
        # [DERIVED] integral of cos^2 over (0, pi) is pi/2
        assert h1_seminorm_sq(sine_field(399)) == pytest.approx(
            math.pi / 2, rel=1e-4)

    def test_h1_scaling(self):
        fld = sine_field(49)
        assert h1_seminorm_sq(fld.with_values(3.0 * fld.values)) == \
            pytest.approx(9.0 * h1_seminorm_sq(fld), rel=1e-12)


class TestGagliardo:
    def test_zero_field(self):
        grid = make_grid("interval", (0.0, 1.0), 9)
        assert gagliardo_seminorm_sq(zero_field(grid), 0.5) == 0.0

    def test_quadratic_scaling(self):
        fld = sine_field(49)
        for s in (0.25, 0.5, 0.75):
            assert gagliardo_seminorm_sq(fld.with_values(2.0 * fld.values), s) \
                == pytest.approx(4.0 * gagliardo_seminorm_sq(fld, s), rel=1e-12)

    def test_positive_for_nonzero(self):
        assert gagliardo_seminorm_sq(sine_field(49), 0.3) > 0.0

    def test_s_range_enforced(self):
        with pytest.raises(ValueError):
            gagliardo_seminorm_sq(sine_field(9), 1.5)

    def test_single_node_tail_closed_form(self):
        # [DERIVED] one interior spike: the exterior term is the exact
        # integral of |x_k - y|^(-1-2s) over the complement of (a, b),
        # counted for both orderings.
        grid = make_grid("interval", (0.0, 1.0), 9)
        s = 0.4
        k = 3
        u = np.zeros(9)
        u[k] = 2.0
        fld = Field(grid, u)
        x = grid.axis_nodes()[k]
        h = grid.spacing[0]
        tail = (x ** (-2 * s) + (1.0 - x) ** (-2 * s)) / (2 * s)
        expected = 2.0 * h * 4.0 * tail     # interior double sum vanishes
        # interior pairs are zero only against other zero nodes; the spike
        # pairs with every other node, so subtract nothing: compute directly
        dx = np.abs(grid.axis_nodes() - x)
        dx[k] = 1.0
        kern = dx ** (-1 - 2 * s)
        kern[k] = 0.0
        expected += 2.0 * float(np.sum(4.0 * kern)) * h * h
        assert gagliardo_seminorm_sq(fld, s) == pytest.approx(expected,
                                                              rel=1e-12)
