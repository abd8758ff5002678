"""
Supersymmetric partner potentials driven by a nodeless ground state.
W = -ψ0'/ψ0, V1 = W² - W', V2 = W² + W'; the R transform ψ0 -> 1/ψ0 swaps
the partners, and the partner spectra are compared through SPPS eigenvalues.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from errors import GroundStateVanishes, NoRootsInRange
from grid_quadrature import VANISH_TOLERANCE, SampledFunction, finite_difference_jet
from spps_solver import DEFAULT_K, build_spps, dirichlet_eigenvalues, schrodinger_problem
from utils import complex_columns

logger = logging.getLogger(__name__)

ANALYTIC_TOL = 1e-8
TABLE_TOL = 1e-5
WALL_DECAY = 1e-8


@dataclass(frozen=True, eq=False)
class SusyPair:
    """
    Ground state ψ0 with superpotential W, partner potentials V1, V2 and Φ = ψ0².
    """
    psi0: SampledFunction
    W: SampledFunction
    V1: SampledFunction
    V2: SampledFunction
    phi: SampledFunction

    @property
    def grid(self):
        return self.psi0.grid


def build_susy_pair(psi0, vanish_tolerance=VANISH_TOLERANCE):
    """
    Derive W, V1, V2 and Φ from a ground state.

    Parameters:
    -----------
    psi0 : SampledFunction
        Nonvanishing ground state; its jet (or 4th-order differences) gives ψ0' and ψ0''

    Returns:
    --------
    SusyPair : All fields populated
    """
    psi0.require_nonvanishing(vanish_tolerance, GroundStateVanishes)
    order = psi0.jet.order if psi0.jet is not None and psi0.jet.order >= 3 else 3
    jet = psi0.derivatives(order, accuracy=4)
    W = -(jet.derivative() * jet.truncate(order - 1).reciprocal())
    slope = W.derivative()
    square = W * W
    V1 = square - slope
    V2 = square + slope
    grid = psi0.grid
    phi = psi0 * psi0
    return SusyPair(
        psi0=psi0,
        W=SampledFunction.from_jet(grid, W, "W"),
        V1=SampledFunction.from_jet(grid, V1, "V1"),
        V2=SampledFunction.from_jet(grid, V2, "V2"),
        phi=SampledFunction(grid, phi.values, phi.jet, "phi"),
    )


def r_transform(pair):
    """The pair built from 1/ψ0: W changes sign and V1, V2 trade places."""
    return build_susy_pair(pair.psi0.reciprocal())


def pair_residuals(pair):
    """
    Pointwise formula residuals with W' taken by 6th-order differences of W,
    independent of the jet arithmetic used to build the pair.

    Returns:
    --------
    dict : 'W', 'V1', 'V2', 'V2-V1' residuals relative to max(1, sup-norm)
    """
    grid = pair.grid
    psi = pair.psi0.derivatives(1)
    slope = finite_difference_jet(pair.W.values, grid.h, 1, accuracy=6)[1]
    W = pair.W.values

    def relative(error, reference):
        return float(np.max(np.abs(error))) / max(1.0, float(np.max(np.abs(reference))))

    return {
        "W": relative(W + psi[1] / psi[0], W),
        "V1": relative(pair.V1.values - (W ** 2 - slope), pair.V1.values),
        "V2": relative(pair.V2.values - (W ** 2 + slope), pair.V2.values),
        "V2-V1": relative(pair.V2.values - pair.V1.values - 2.0 * slope, pair.V2.values),
    }


def ground_state_partner_residual(pair):
    """
    |-(1/ψ0)'' + V2/ψ0| relative to ‖V2/ψ0‖∞: 1/ψ0 is a zero mode of H2.
    """
    inverse = pair.psi0.reciprocal().derivatives(2, accuracy=4)
    residual = -inverse[2] + pair.V2.values * inverse[0]
    scale = max(float(np.max(np.abs(pair.V2.values * inverse[0]))), np.finfo(float).tiny)
    return float(np.max(np.abs(residual))) / scale


@dataclass(frozen=True, eq=False)
class SpectrumReport:
    """
    Dirichlet spectra of H1 and H2 and the shifted comparison.

    Raises NoRootsInRange unless H1 has n_levels + 1 levels and H2 has n_levels.
    """
    e1: np.ndarray
    e2: np.ndarray
    n_levels: int

    def __post_init__(self):
        e1, e2 = np.asarray(self.e1), np.asarray(self.e2)
        if self.n_levels and (e1.size < self.n_levels + 1 or e2.size < self.n_levels):
            raise NoRootsInRange(
                f"comparing {self.n_levels} partner levels needs {self.n_levels + 1} levels of H1 and "
                f"{self.n_levels} of H2, found {e1.size} and {e2.size}"
            )
        object.__setattr__(self, "e1", e1)
        object.__setattr__(self, "e2", e2)

    @property
    def shifted_differences(self):
        n = self.n_levels
        return self.e2[:n] - self.e1[1:n + 1]

    @property
    def max_shift_mismatch(self):
        differences = self.shifted_differences
        return float(np.max(np.abs(differences))) if differences.size else 0.0

    def frame(self):
        differences = self.shifted_differences
        n = differences.size
        return pd.DataFrame({
            "level": np.arange(n),
            "E1": self.e1[1:n + 1],
            "E2_shifted": self.e2[:n],
            "difference": differences,
        })


def _spectrum(V, ground, lambda_range, count, K):
    problem = schrodinger_problem(V, ground, x0_index=0)
    series = build_spps(problem, K)
    return dirichlet_eigenvalues(series, lambda_range, count).eigenvalues


def partner_spectrum_check(pair, lambda_range, n_levels=3, K=DEFAULT_K, n_jobs=2):
    """
    Compare E_n of H2 with E_(n+1) of H1 on the truncated interval.

    Both spectra come from SPPS with x0 at the left wall: H1 uses u0 = ψ0,
    H2 uses u0 = 1/ψ0. The two eigenproblems are independent and run in
    parallel threads.

    Parameters:
    -----------
    pair : SusyPair
        Pair on the truncated interval
    lambda_range : tuple
        Scan range for both spectra
    n_levels : int
        Number of partner levels compared
    K : int
        SPPS truncation

    Returns:
    --------
    SpectrumReport : Both spectra and the level-shift differences
    """
    if n_levels == 0:
        return SpectrumReport(np.array([]), np.array([]), 0)
    walls = np.abs(pair.psi0.values[[0, -1]])
    if np.max(walls) > WALL_DECAY * pair.psi0.sup_norm():
        logger.warning("ground state does not decay at the walls (%.3e); partner shift is approximate", np.max(walls))
    e1, e2 = Parallel(n_jobs=n_jobs, prefer="threads")([
        delayed(_spectrum)(pair.V1, pair.psi0, lambda_range, n_levels + 1, K),
        delayed(_spectrum)(pair.V2, pair.psi0.reciprocal(), lambda_range, n_levels, K),
    ])
    report = SpectrumReport(np.asarray(e1), np.asarray(e2), n_levels)
    logger.info("partner spectra: E1=%s, E2=%s", e1, e2)
    return report


def pair_frame(pair):
    """node, psi0, W, V1, V2 as (re, im) pairs."""
    columns = {"node": pair.grid.nodes}
    for name in ("psi0", "W", "V1", "V2"):
        columns.update(complex_columns(name, getattr(pair, name).values))
    return pd.DataFrame(columns)
