import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.strategies import integers

from conftest import make_grid, make_phi, sup
from errors import NonvanishingViolation
from gen_powers import (
    YBasis,
    basis_is_tilde,
    binomial_residual,
    build_power_table,
    conjugate_table,
    convergence_constant,
    growth_bound_ratio,
    monomial_residual,
    power_at_base,
    single_integral_residual,
    symmetry_residuals,
    table_frame,
    two_point_powers,
)
from grid_quadrature import SampledFunction


class TestBuildPowerTable:
    def test_unit_phi_gives_monomials(self, one_table):
        assert one_table.order == 10
        assert monomial_residual(one_table) < 1e-10

    def test_unit_phi_centered_base(self):
        grid = make_grid(-1.0, 1.0, 513, x0=0.0)
        table = build_power_table(make_phi("constant", grid, value=1.0), order=6)
        x = grid.nodes
        assert sup(table.X[5] - x ** 5) < 1e-12
        assert sup(table.Xt[6] - x ** 6) < 1e-12

    def test_zeroth_row_is_one(self, square_table):
        assert np.all(square_table.X[0] == 1.0)
        assert np.all(square_table.Xt[0] == 1.0)

    def test_first_rows_in_closed_form(self, square_table):
        x = square_table.grid.nodes
        assert sup(square_table.X[1] - (1.0 - 1.0 / (1.0 + x))) < 1e-12
        assert sup(square_table.Xt[1] - ((1.0 + x) ** 3 - 1.0) / 3.0) < 1e-12

    def test_constant_phi_scaling(self, unit_grid):
        c = 2.5
        table = build_power_table(make_phi("constant", unit_grid, value=c), order=3)
        x = unit_grid.nodes
        assert sup(table.X[1] - x / c) < 1e-13
        assert sup(table.X[2] - x ** 2) < 1e-13
        assert sup(table.Xt[1] - c * x) < 1e-13
        assert sup(table.Xt[3] - c * x ** 3) < 1e-12

    def test_rejects_vanishing_phi(self):
        grid = make_grid(-1.0, 1.0, 17)
        phi = SampledFunction(grid, grid.nodes, name="phi")
        with pytest.raises(NonvanishingViolation):
            build_power_table(phi)

    def test_rows_are_read_only(self, square_table):
        with pytest.raises(ValueError):
            square_table.X[1, 0] = 5.0

    def test_frame_layout(self, square_table):
        frame = table_frame(square_table)
        assert frame.shape[0] == square_table.grid.size
        assert {"node", "X0_re", "X8_im", "Xt3_re"} <= set(frame.columns)


class TestIdentities:
    def test_symmetry(self, square_table):
        residuals = symmetry_residuals(square_table, seed=3)
        assert residuals["conjugate_symmetry"] < 1e-9
        assert residuals["antisymmetry"] < 1e-9

    def test_symmetry_is_deterministic(self, square_table):
        assert symmetry_residuals(square_table, seed=7) == symmetry_residuals(square_table, seed=7)

    @pytest.mark.parametrize("n", range(1, 9))
    def test_single_integral_forms(self, square_table, n):
        assert single_integral_residual(square_table, n) < 1e-9

    @pytest.mark.parametrize("n", [3, 4])
    def test_single_integral_at_chosen_nodes(self, square_table, n):
        assert single_integral_residual(square_table, n, targets=[0, 100, 256]) < 1e-9

    def test_single_integral_on_wide_grid(self):
        table = build_power_table(make_phi("constant", make_grid(0.0, 1.0, 2049), value=1.0), order=4)
        assert single_integral_residual(table, 4, n_targets=3) < 1e-10

    @pytest.mark.parametrize("n", range(1, 9))
    def test_binomial_sum(self, square_table, n):
        assert binomial_residual(square_table, n) < 1e-10

    def test_growth_bounds(self, square_table):
        assert growth_bound_ratio(square_table) <= 1.0

    def test_conjugate_table_swaps_rows(self, square_table):
        swapped = conjugate_table(square_table)
        assert sup(swapped.X - square_table.Xt) < 1e-12 * max(1.0, sup(square_table.Xt))
        assert sup(swapped.Xt - square_table.X) < 1e-12

    def test_complex_phi(self):
        grid = make_grid(0.0, 1.0, 257)
        phi = make_phi("polynomial", grid, coefficients=[[1.0, 0.5], [0.0, 1.0]])
        table = build_power_table(phi, order=6)
        residuals = symmetry_residuals(table, seed=0)
        assert max(residuals.values()) < 1e-9
        assert binomial_residual(table, 6) < 1e-10


class TestTwoPointPowers:
    @settings(max_examples=10, deadline=None)
    @given(base=integers(min_value=0, max_value=128), n=integers(min_value=0, max_value=5))
    def test_rows_match_rebased_recursion(self, base, n):
        phi = make_phi("shifted_square", make_grid(0.0, 1.0, 129))
        table = build_power_table(phi, order=5)
        matrix = two_point_powers(table, n)
        assert sup(matrix[base] - power_at_base(table, n, base)) < 1e-12 * max(1.0, sup(matrix))

    def test_base_row_is_the_table(self, square_table):
        for n in (1, 4, 7):
            assert sup(two_point_powers(square_table, n)[0] - square_table.X[n]) < 1e-12
            scale = max(1.0, sup(square_table.Xt[n]))
            assert sup(two_point_powers(square_table, n, tilde=True)[0] - square_table.Xt[n]) < 1e-12 * scale


class TestYBasis:
    def test_parity_interleaving(self, square_table):
        basis = YBasis(square_table)
        assert basis_is_tilde(1) and not basis_is_tilde(2)
        assert np.array_equal(basis.Y(3), square_table.Xt[3])
        assert np.array_equal(basis.Y(4), square_table.X[4])
        assert np.array_equal(basis.Yt(3), square_table.X[3])
        assert np.array_equal(basis.member(4, conjugate=True), square_table.Xt[4])


class TestConvergenceConstant:
    def test_shifted_square(self, square_phi):
        c, phi_max, inverse_max = convergence_constant(square_phi)
        assert phi_max == pytest.approx(4.0)
        assert inverse_max == pytest.approx(1.0)
        assert c == pytest.approx(4.0)

