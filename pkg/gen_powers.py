"""
Φ-generalized power tables.
Builds X^(n) and X̃^(n) by the alternating-weight recursion, exposes the
Y basis, rebases rows at other nodes and measures the identities the
powers satisfy (conjugate symmetry, single-integral forms, binomial sums).
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from grid_quadrature import VANISH_TOLERANCE, integrate_from, running_integral
from utils import complex_columns

logger = logging.getLogger(__name__)

TOL_IDENTITY = 1e-8
SYMMETRY_BASES = 8


def step_weights(phi_values, tilde=False):
    """
    Weights of the odd and even recursion steps.

    X^(n) integrates against 1/Φ on odd n and Φ on even n; X̃^(n) swaps them.
    """
    inverse = 1.0 / phi_values
    return (phi_values, inverse) if tilde else (inverse, phi_values)


def iterated_powers(grid, odd_weight, even_weight, base_index, order, scaled=False):
    """
    Rows 0..order of the alternating-weight recursion based at one node.
    With `scaled`, row n is divided by n! as it is built so high rows stay finite.

    Parameters:
    -----------
    grid : Grid
        Integration grid
    odd_weight, even_weight : np.ndarray
        Integrand weights of odd and even steps
    base_index : int
        Node where every row n >= 1 vanishes
    order : int
        Highest row
    scaled : bool
        Return X^(n)/n! instead of X^(n)

    Returns:
    --------
    np.ndarray : (order+1, M) complex array
    """
    rows = np.zeros((order + 1, grid.size), dtype=complex)
    rows[0] = 1.0
    for n in range(1, order + 1):
        weight = odd_weight if n % 2 else even_weight
        rows[n] = (1 if scaled else n) * integrate_from(rows[n - 1] * weight, grid, base_index)
    return rows


def power_matrix(grid, odd_weight, even_weight, order):
    """
    P[i, j] = row `order` of the recursion based at node i, evaluated at node j.
    """
    matrix = np.ones((grid.size, grid.size), dtype=complex)
    for n in range(1, order + 1):
        weight = odd_weight if n % 2 else even_weight
        total = running_integral(matrix * weight[None, :], grid, axis=-1)
        matrix = n * (total - np.diag(total)[:, None])
    return matrix


def convergence_constant(phi):
    """
    c = max|Φ| * max|1/Φ| * (b-a)^2 together with max|Φ| and max|1/Φ|.
    """
    phi_max = float(np.max(np.abs(phi.values)))
    inverse_max = float(np.max(1.0 / np.abs(phi.values)))
    return phi_max * inverse_max * phi.grid.length ** 2, phi_max, inverse_max


@dataclass(frozen=True, eq=False)
class PowerTable:
    """
    X[n, i] = X^(n)(x0, x_i) and Xt[n, i] = X̃^(n)(x0, x_i) for n = 0..order.
    """
    phi: object
    x0_index: int
    X: np.ndarray
    Xt: np.ndarray
    c_bound: float

    @property
    def grid(self):
        return self.phi.grid

    @property
    def order(self):
        return self.X.shape[0] - 1

    @property
    def basis(self):
        return YBasis(self)

    @property
    def phi_max(self):
        return float(np.max(np.abs(self.phi.values)))

    @property
    def inverse_max(self):
        return float(np.max(1.0 / np.abs(self.phi.values)))

    def rows(self, tilde=False):
        return self.Xt if tilde else self.X

    def weights(self, tilde=False):
        return step_weights(self.phi.values, tilde)


def basis_is_tilde(n, conjugate=False):
    """𝒴_n is the X̃ row for odd n, the X row for even n; 𝒴̃_n the reverse."""
    return (n % 2 == 1) != conjugate


class YBasis:
    """
    Parity-interleaved view of a power table.

    Y(n) = X̃^(n) for odd n and X^(n) for even n; Yt(n) swaps the roles.
    """

    def __init__(self, table):
        self.table = table

    def Y(self, n):
        return self.table.rows(basis_is_tilde(n))[n]

    def Yt(self, n):
        return self.table.rows(basis_is_tilde(n, conjugate=True))[n]

    def member(self, n, conjugate=False):
        return self.Yt(n) if conjugate else self.Y(n)


def build_power_table(phi, x0_index=None, order=8, vanish_tolerance=VANISH_TOLERANCE):
    """
    Build X^(n)(x0, .) and X̃^(n)(x0, .) for n = 0..order.

    Parameters:
    -----------
    phi : SampledFunction
        Nonvanishing Φ
    x0_index : int, optional
        Base node, defaults to the grid's x0
    order : int
        Highest power N >= 0

    Returns:
    --------
    PowerTable : The filled table
    """
    if order < 0:
        raise ValueError(f"order must be nonnegative, got {order}")
    phi.require_nonvanishing(vanish_tolerance)
    grid = phi.grid
    if x0_index is None:
        x0_index = grid.x0_index
    X = iterated_powers(grid, *step_weights(phi.values), x0_index, order)
    Xt = iterated_powers(grid, *step_weights(phi.values, tilde=True), x0_index, order)
    c_bound, _, _ = convergence_constant(phi)
    logger.debug("power table for %s: order %d, base %d, c=%.6g", phi.name, order, x0_index, c_bound)
    for array in (X, Xt):
        array.setflags(write=False)
    return PowerTable(phi, int(x0_index), X, Xt, c_bound)


def conjugate_table(table):
    """Table of 1/Φ: its X rows are the input's X̃ rows and vice versa."""
    return build_power_table(table.phi.reciprocal(), table.x0_index, table.order)


def power_at_base(table, n, base_index, tilde=False):
    """X^(n)(x_b, .) (or X̃^(n)) by a fresh recursion from node base_index."""
    return iterated_powers(table.grid, *table.weights(tilde), base_index, n)[n]


def two_point_powers(table, n, tilde=False):
    """
    Full matrix of X^(n)(x_i, x_j), rows indexed by the base node.
    """
    return power_matrix(table.grid, *table.weights(tilde), n)


def _rebased_residuals(table, base):
    x0 = table.x0_index
    X_b = iterated_powers(table.grid, *table.weights(), base, table.order)
    Xt_b = iterated_powers(table.grid, *table.weights(tilde=True), base, table.order)
    even, odd = 0.0, 0.0
    for n in range(1, table.order + 1):
        if n % 2 == 0:
            # X̃(x0, xb) = X(xb, x0) and, with Φ -> 1/Φ, X(x0, xb) = X̃(xb, x0)
            even = max(even, abs(table.Xt[n][base] - X_b[n][x0]), abs(table.X[n][base] - Xt_b[n][x0]))
        else:
            odd = max(odd, abs(table.X[n][base] + X_b[n][x0]), abs(table.Xt[n][base] + Xt_b[n][x0]))
    return even, odd


def symmetry_residuals(table, bases=None, n_bases=SYMMETRY_BASES, seed=0, n_jobs=2):
    """
    Conjugate-symmetry (even n) and antisymmetry (odd n) residuals.

    Rebased recursions are run at a few random nodes; each rebase is
    independent, so they run in a thread pool.

    Returns:
    --------
    dict : 'conjugate_symmetry' and 'antisymmetry' max absolute residuals
    """
    if bases is None:
        rng = np.random.default_rng(seed)
        bases = rng.choice(table.grid.size, size=min(n_bases, table.grid.size), replace=False)
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_rebased_residuals)(table, int(base)) for base in bases
    )
    return {
        "conjugate_symmetry": max(r[0] for r in results),
        "antisymmetry": max(r[1] for r in results),
    }


def single_integral_residual(table, n, targets=None, n_targets=SYMMETRY_BASES, seed=0):
    """
    Residual of the one-integral forms of the powers at a few target nodes x.

    Even n: X^(n)(x0,x) = n ∫ X̃^(n-1)(ξ,x)/Φ(ξ) dξ.
    Odd n:  X̃^(n)(x0,x) = n ∫ Φ(ξ) X^(n-1)(ξ,x) dξ.

    The kernel column ξ -> X^(n-1)(ξ, x) comes from one recursion rebased at
    x through the (anti)symmetry of the powers, so no M×M matrix is formed.
    Both endpoints are always among the targets.
    """
    if n < 1 or n > table.order:
        raise ValueError(f"n must lie in 1..{table.order}, got {n}")
    size = table.grid.size
    if targets is None:
        rng = np.random.default_rng(seed)
        targets = rng.choice(size, size=min(n_targets, size), replace=False)
    targets = sorted({0, size - 1, *(int(t) for t in targets)})
    phi = table.phi.values
    worst = 0.0
    for x in targets:
        if n % 2 == 0:
            # X̃^(n-1)(ξ, x) = -X̃^(n-1)(x, ξ) for odd n-1
            kernel = -iterated_powers(table.grid, *table.weights(tilde=True), x, n - 1)[n - 1]
            weight, lhs = 1.0 / phi, table.X[n][x]
        else:
            # X^(n-1)(ξ, x) = X̃^(n-1)(x, ξ) for even n-1
            kernel = iterated_powers(table.grid, *table.weights(tilde=True), x, n - 1)[n - 1]
            weight, lhs = phi, table.Xt[n][x]
        rhs = n * integrate_from(kernel * weight, table.grid, table.x0_index)[x]
        worst = max(worst, abs(lhs - rhs))
    return float(worst)


def binomial_residual(table, n):
    """
    Relative residual of the alternating binomial sum.

    Even n pairs X^(k) with X̃^(n-k); odd n pairs X^(k) with X^(n-k).
    Measured against the largest single term.
    """
    if n > table.order:
        raise ValueError(f"n={n} exceeds table order {table.order}")
    partner = table.Xt if n % 2 == 0 else table.X
    terms = np.array([table.X[k] * partner[n - k] for k in range(n + 1)])
    signs = np.array([(-1) ** k * math.comb(n, k) for k in range(n + 1)], dtype=float)
    total = signs @ terms
    scale = max(float(np.max(np.abs(terms))), np.finfo(float).tiny)
    return float(np.max(np.abs(total))) / scale


def growth_bound_ratio(table):
    """
    Largest ratio |row| / bound over all rows; at most 1 when the bounds hold.
    """
    c, length = table.c_bound, table.grid.length
    ratio = 0.0
    for rows, odd_scale in ((table.X, table.inverse_max), (table.Xt, table.phi_max)):
        for n in range(1, table.order + 1):
            j = n // 2
            bound = c ** j if n % 2 == 0 else length * odd_scale * c ** j
            ratio = max(ratio, float(np.max(np.abs(rows[n]))) / bound)
    return ratio


def monomial_residual(table):
    """max |X^(n) - (x-x0)^n| over rows and nodes, meaningful for Φ ≡ 1."""
    shift = table.grid.nodes - table.grid.nodes[table.x0_index]
    powers = np.array([shift ** n for n in range(table.order + 1)])
    return float(max(np.max(np.abs(table.X - powers)), np.max(np.abs(table.Xt - powers))))


def table_frame(table):
    """
    CSV layout: node, X0..XN (re, im), then Xt0..XtN.

    Returns:
    --------
    pd.DataFrame : One row per grid node
    """
    columns = {"node": table.grid.nodes}
    for label, rows in (("X", table.X), ("Xt", table.Xt)):
        for n in range(table.order + 1):
            columns.update(complex_columns(f"{label}{n}", rows[n]))
    return pd.DataFrame(columns)
