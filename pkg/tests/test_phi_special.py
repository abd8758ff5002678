import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.strategies import floats

from conftest import make_grid, make_phi, sup
from errors import InsufficientOrder, ToleranceTooTight
from gen_powers import build_power_table, conjugate_table
from phi_special import (
    TRIG_NAMES,
    build_trig,
    choose_truncation,
    conjugation_residual,
    dropped_term_bound,
    phase_space_frame,
    pythagorean_residuals,
    required_trig_order,
    trig_derivative_check,
    trig_frame,
    trig_tail_bound,
    truncation_excess,
)


def trig_for(phi, epsilon=1e-12, K=None):
    order = required_trig_order(phi, epsilon) if K is None else 2 * K + 1
    return build_trig(build_power_table(phi, order=order), epsilon, K)


class TestBuildTrig:
    def test_unit_phi_reduces_to_classical(self, unit_grid):
        trig = trig_for(make_phi("constant", unit_grid, value=1.0))
        x = unit_grid.nodes
        assert sup(trig.C - np.cos(x)) < 1e-10
        assert sup(trig.S - np.sin(x)) < 1e-10
        assert sup(trig.Ch - np.cosh(x)) < 1e-10
        assert sup(trig.Sht - np.sinh(x)) < 1e-10
        assert sup(trig.Ct - trig.C) < 1e-12

    def test_tail_meets_epsilon(self, square_phi):
        trig = trig_for(square_phi, epsilon=1e-10)
        assert trig.tail_bound <= 1e-10
        assert trig.K >= 1

    def test_short_table(self, square_phi):
        table = build_power_table(square_phi, order=3)
        with pytest.raises(InsufficientOrder) as info:
            build_trig(table, 1e-10)
        assert info.value.required > 3

    def test_tolerance_below_floor(self, square_phi):
        with pytest.raises(ToleranceTooTight):
            build_trig(build_power_table(square_phi, order=3), 1e-16)

    def test_forced_truncation_reports_its_tail(self, square_phi):
        trig = trig_for(square_phi, K=2)
        assert trig.K == 2
        assert trig.tail_bound > 1e-10


class TestTrigIdentities:
    def test_pythagorean(self, square_phi):
        residuals = pythagorean_residuals(trig_for(square_phi))
        assert residuals["elliptic"] < 1e-9
        assert residuals["hyperbolic"] < 1e-9

    def test_derivative_relations(self, square_phi):
        trig = trig_for(square_phi)
        bound = dropped_term_bound(trig)
        residuals = trig_derivative_check(trig)
        assert len(residuals) == 8
        assert max(residuals.values()) <= bound + 1e-9

    def test_zero_truncation_is_worse(self, square_phi):
        coarse = trig_for(square_phi, K=0)
        fine = trig_for(square_phi, K=8)
        coarse_residuals = trig_derivative_check(coarse)
        assert max(coarse_residuals.values()) <= dropped_term_bound(coarse) + 1e-9
        assert max(coarse_residuals.values()) > max(trig_derivative_check(fine).values())
        assert pythagorean_residuals(coarse)["elliptic"] > pythagorean_residuals(fine)["elliptic"]

    def test_sqrt_cosh_phi(self):
        phi = make_phi("sqrt_cosh", make_grid(-1.0, 1.0, 257, x0=0.0))
        residuals = pythagorean_residuals(trig_for(phi))
        assert max(residuals.values()) < 1e-9


class TestTruncation:
    @settings(max_examples=25, deadline=None)
    @given(c=floats(min_value=0.1, max_value=50.0))
    def test_chosen_truncation_is_minimal(self, c):
        K, tail = choose_truncation(c, 1.0, 1.0, 1e-10)
        assert tail <= 1e-10
        if K > 0:
            assert trig_tail_bound(c, 1.0, 1.0, K - 1) > 1e-10

    def test_tail_decreases(self):
        tails = [trig_tail_bound(4.0, 1.0, 1.0, K) for K in range(10)]
        assert all(b < a for a, b in zip(tails, tails[1:]))

    def test_huge_constant_gives_up_quickly(self):
        assert trig_tail_bound(1e15, 1.0, 1.0, 0) == float("inf")
        with pytest.raises(ToleranceTooTight):
            choose_truncation(1e15, 1.0, 1.0, 1e-10)

    def test_growing_truncation_never_worsens_residuals(self, square_phi):
        table = build_power_table(square_phi, order=31)
        assert truncation_excess(table, 15) < 1e-12


class TestConjugation:
    def test_reciprocal_phi_swaps_the_sets(self, square_phi):
        trig = trig_for(square_phi)
        swapped = build_trig(conjugate_table(trig.table), K=trig.K)
        assert sup(swapped.C - trig.Ct) < 1e-12
        assert sup(swapped.Sht - trig.Sh) < 1e-12

    def test_residual(self, square_phi):
        assert conjugation_residual(trig_for(square_phi)) < 1e-12


class TestFrames:
    def test_trig_frame_columns(self, square_phi):
        frame = trig_frame(trig_for(square_phi))
        assert list(frame.columns[:3]) == ["node", "C_re", "C_im"]
        assert all(f"{name}_re" in frame.columns for name in TRIG_NAMES)

    def test_phase_space_pairs(self, square_phi):
        trig = trig_for(square_phi)
        frame = phase_space_frame(trig)
        total = frame["CCt_re"].to_numpy() + frame["SSt_re"].to_numpy()
        assert sup(total - 1.0) < 1e-9
