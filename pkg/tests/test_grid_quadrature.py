import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis.strategies import floats, integers, tuples

from conftest import make_grid, sup
from errors import GridError, GridMismatch, JetOrderExceeded, NonvanishingViolation, TableMismatch
from grid_quadrature import (
    Grid,
    Jet,
    PhiSpec,
    SampledFunction,
    cumulative_integral,
    finite_difference_jet,
    integrate_from,
    materialize_function,
    materialize_phi,
    quadrature_checks,
    quadrature_matrix,
    read_table,
    running_integral,
)


class TestGrid:
    def test_uniform(self):
        grid = Grid.uniform(-1.0, 1.0, 9, x0=0.0)
        assert grid.size == 9
        assert grid.h == pytest.approx(0.25)
        assert grid.x0_index == 4
        assert grid.x0 == 0.0

    def test_even_count_rejected(self):
        with pytest.raises(GridError):
            Grid.uniform(0.0, 1.0, 10)

    def test_too_few_nodes_for_scheme(self):
        Grid.uniform(0.0, 1.0, 5, quadrature="simpson")
        with pytest.raises(GridError):
            Grid.uniform(0.0, 1.0, 5)

    def test_x0_off_grid(self):
        with pytest.raises(GridError):
            Grid.uniform(0.0, 1.0, 9, x0=0.3)

    def test_unknown_scheme(self):
        with pytest.raises(GridError):
            Grid.uniform(0.0, 1.0, 9, quadrature="trapezoid")

    def test_nonuniform_nodes(self):
        nodes = np.array([0.0, 0.1, 0.5, 0.6, 0.7, 0.8, 1.0])
        with pytest.raises(GridError):
            Grid(0.0, 1.0, nodes, 0)

    def test_rebased_keeps_nodes(self):
        grid = make_grid(count=17)
        other = grid.rebased(8)
        assert other.x0_index == 8
        assert grid.matches(other)

    def test_index_of(self):
        grid = make_grid(count=17)
        assert grid.index_of(0.5) == 8
        with pytest.raises(GridError):
            grid.index_of(0.51)


class TestJet:
    def test_leibniz_product_matches_polynomial(self):
        nodes = np.linspace(-1.0, 1.0, 11)
        x = Jet.from_polynomial([0.0, 1.0], nodes, 4)
        square = Jet.from_polynomial([0.0, 0.0, 1.0], nodes, 4)
        cube = Jet.from_polynomial([0.0, 0.0, 0.0, 1.0], nodes, 4)
        assert np.allclose((x * square).values, cube.values)

    def test_reciprocal_of_exp(self):
        nodes = np.linspace(0.0, 1.0, 7)
        exp = Jet.from_polynomial([0.0, 1.0], nodes, 5).exp()
        inverse = Jet.from_polynomial([0.0, -1.0], nodes, 5).exp()
        assert np.allclose(exp.reciprocal().values, inverse.values)

    def test_sqrt_squares_back(self):
        nodes = np.linspace(-1.0, 1.0, 9)
        f = Jet.from_polynomial([2.0, 0.5, 1.0], nodes, 6)
        root = f.sqrt()
        assert np.allclose((root * root).values, f.values)

    def test_order_exceeded(self):
        jet = Jet.constant(1.0, 2, 5)
        with pytest.raises(JetOrderExceeded):
            jet[3]
        with pytest.raises(JetOrderExceeded):
            jet.truncate(4)

    def test_scalar_and_array_products(self):
        nodes = np.linspace(0.0, 1.0, 5)
        x = Jet.from_polynomial([0.0, 1.0], nodes, 2)
        assert np.allclose((3.0 * x).values, 3.0 * x.values)
        assert np.allclose((x * nodes)[0], nodes ** 2)


class TestFiniteDifferenceJet:
    def test_sine_derivatives(self, unit_grid):
        x = unit_grid.nodes
        jet = finite_difference_jet(np.sin(x), unit_grid.h, 2, accuracy=6)
        assert sup(jet[1] - np.cos(x)) < 1e-8
        assert sup(jet[2] + np.sin(x)) < 1e-7

    def test_too_few_nodes(self):
        with pytest.raises(JetOrderExceeded):
            finite_difference_jet(np.ones(5), 0.1, 3, accuracy=4)


class TestRunningIntegral:
    @pytest.mark.parametrize("quadrature, degree", [("composite6", 5), ("simpson", 2)])
    def test_exact_for_low_degree(self, quadrature, degree):
        grid = make_grid(0.0, 2.0, 17, quadrature=quadrature)
        x = grid.nodes
        computed = running_integral(x ** degree, grid)
        assert sup(computed - x ** (degree + 1) / (degree + 1)) < 1e-12

    @pytest.mark.parametrize("quadrature, min_ratio", [("composite6", 40.0), ("simpson", 12.0)])
    def test_convergence_order(self, quadrature, min_ratio):
        errors = []
        for count in (17, 33):
            grid = make_grid(0.0, 1.0, count, quadrature=quadrature)
            x = grid.nodes
            errors.append(sup(running_integral(np.exp(x), grid) - (np.exp(x) - 1.0)))
        assert errors[0] / errors[1] > min_ratio

    def test_matrix_form(self):
        grid = make_grid(0.0, 1.0, 33)
        y = np.cos(3.0 * grid.nodes)
        assert sup(quadrature_matrix(grid) @ y - running_integral(y, grid)) < 1e-14

    def test_length_mismatch(self):
        with pytest.raises(GridMismatch):
            running_integral(np.ones(9), make_grid(count=17))

    def test_along_axis(self):
        grid = make_grid(count=17)
        stacked = np.vstack([grid.nodes, 2.0 * grid.nodes])
        total = running_integral(stacked.T, grid, axis=0)
        assert np.allclose(total[:, 1], 2.0 * total[:, 0])

    @settings(max_examples=10, deadline=None)
    @given(base=integers(min_value=0, max_value=32))
    def test_integrate_from_any_base(self, base):
        grid = make_grid(-1.0, 1.0, 33)
        x = grid.nodes
        values = integrate_from(np.cos(x), grid, base)
        assert values[base] == 0.0
        assert sup(values - (np.sin(x) - np.sin(x[base]))) < 1e-9

    @settings(max_examples=15, deadline=None)
    @given(parts=tuples(*[floats(min_value=-10.0, max_value=10.0)] * 4))
    def test_linear_in_the_integrand(self, parts):
        grid = make_grid(-1.0, 1.0, 65, x0=0.0)
        x = grid.nodes
        alpha, beta = complex(parts[0], parts[1]), complex(parts[2], parts[3])
        f, g = np.cos(2.0 * x) + 1j * x ** 3, np.exp(x)
        combined = integrate_from(alpha * f + beta * g, grid, grid.x0_index)
        separate = alpha * integrate_from(f, grid, grid.x0_index) + beta * integrate_from(g, grid, grid.x0_index)
        assert sup(combined - separate) <= 1e-13 * max(1.0, sup(separate))

    def test_differences_match_integral_between_nodes(self):
        grid = make_grid(-1.0, 2.0, 97, x0=0.5)
        x = grid.nodes
        F = integrate_from(np.cos(x), grid, grid.x0_index)
        for i, j in ((0, 96), (10, 40), (80, 3), (48, 48)):
            assert abs((F[j] - F[i]) - (np.sin(x[j]) - np.sin(x[i]))) < 1e-10


class TestQuadratureChecks:
    @pytest.mark.parametrize("quadrature, min_ratio", [("composite6", 40.0), ("simpson", 12.0)])
    def test_rule_passes_its_own_checks(self, quadrature, min_ratio):
        grid = make_grid(-2.0, 3.0, 129, x0=0.5, quadrature=quadrature)
        checks = quadrature_checks(grid, seed=3)
        assert set(checks) == {"linearity", "direction", "direction_limit", "order_ratio"}
        assert checks["linearity"] < 1e-13
        assert checks["direction"] <= checks["direction_limit"]
        assert checks["order_ratio"] > min_ratio

    def test_seeded(self):
        grid = make_grid(0.0, 1.0, 65)
        assert quadrature_checks(grid, seed=1) == quadrature_checks(grid, seed=1)


class TestCumulativeIntegral:
    def test_jet_shifts_up(self, unit_grid):
        f = materialize_function(PhiSpec("exp"), unit_grid, "f")
        F = cumulative_integral(f)
        assert F.jet.order == f.jet.order + 1
        assert np.allclose(F.jet[1], f.values)
        assert sup(F.values - (np.exp(unit_grid.nodes) - 1.0)) < 1e-12


class TestSampledFunction:
    def test_requires_matching_shape(self, unit_grid):
        with pytest.raises(GridError):
            SampledFunction(unit_grid, np.ones(3))

    def test_finite_difference_fallback(self, unit_grid):
        f = SampledFunction(unit_grid, np.sin(unit_grid.nodes))
        assert sup(f.derivative - np.cos(unit_grid.nodes)) < 1e-8

    def test_nonvanishing_reports_first_zero(self):
        grid = make_grid(0.0, 1.0, 17)
        with pytest.raises(NonvanishingViolation) as info:
            materialize_phi(PhiSpec.polynomial([0.0, 1.0]), grid)
        assert info.value.index == 0


class TestPhiSpec:
    def test_unknown_kind(self):
        with pytest.raises(GridError):
            PhiSpec("bessel")

    def test_unknown_parameter(self):
        with pytest.raises(GridError):
            PhiSpec.from_dict({"kind": "constant", "value": 2.0, "scale": 1.0})

    def test_builtin_jets_are_exact(self, unit_grid):
        phi = materialize_phi(PhiSpec("shifted_square"), unit_grid)
        x = unit_grid.nodes
        assert np.allclose(phi.jet[1], 2.0 * (1.0 + x))
        assert np.allclose(phi.jet[2], 2.0)

    def test_complex_constant(self, unit_grid):
        phi = materialize_phi(PhiSpec.constant([1.0, 1.0]), unit_grid)
        assert phi.values[0] == 1.0 + 1.0j
        assert not phi.is_real()


class TestReadTable:
    def _write(self, path, nodes, values):
        pd.DataFrame({"node": nodes, "value_re": values.real, "value_im": values.imag}).to_csv(path, index=False)

    def test_reads_samples(self, tmp_path):
        grid = make_grid(count=33)
        values = np.exp(grid.nodes) + 0.5j
        path = tmp_path / "phi.csv"
        self._write(path, grid.nodes, values)
        assert np.allclose(read_table(str(path), grid), values)

    def test_table_jet(self, tmp_path):
        grid = make_grid(count=129)
        path = tmp_path / "phi.csv"
        self._write(path, grid.nodes, np.exp(grid.nodes).astype(complex))
        phi = materialize_phi(PhiSpec("table", {"path": str(path)}), grid)
        assert phi.jet.order == 4
        assert sup(phi.jet[1] - np.exp(grid.nodes)) < 1e-6

    def test_row_mismatch(self, tmp_path):
        grid = make_grid(count=33)
        path = tmp_path / "phi.csv"
        self._write(path, grid.nodes[:-2], np.ones(31, dtype=complex))
        with pytest.raises(TableMismatch):
            read_table(str(path), grid)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_table(str(tmp_path / "absent.csv"), make_grid())
