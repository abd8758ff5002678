"""
Volterra composition of the first type on grid kernels.
(f⋆g)(x,y) = ∫_x^y f(x,ξ) g(ξ,y) dξ, kernel powers, the bridges between
kernel powers and Φ-powers, and the Neumann-series resolvent solution of
the Schrödinger equation built from a ground state.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import pandas as pd

from errors import DivergenceSuspected, GridError, IdentityNotMaterializable, InsufficientOrder
from gen_powers import convergence_constant, two_point_powers
from grid_quadrature import (
    JET_ORDER,
    VANISH_TOLERANCE,
    Jet,
    SampledFunction,
    integrate_from,
    quadrature_matrix,
    require_same_grid,
    running_integral,
)
from spps_solver import build_spps, evaluate_solution, sturm_liouville_problem
from susy import build_susy_pair
from utils import complex_columns

logger = logging.getLogger(__name__)

KERNEL_SIZE_CAP = 1025
SERIES_TOL = 1e-12
MAX_TERMS = 400
GROWTH_STREAK = 3


@dataclass(frozen=True, eq=False)
class Kernel:
    """
    Two-point function K[i, j] = f(x_i, x_j) on a grid.

    `full` keeps the smooth extension to j < i, which quadrature near the
    diagonal relies on; `values` shows ordered kernels with j < i zeroed.
    """
    grid: object
    full: np.ndarray
    ordered: bool = False
    name: str = "k"

    def __post_init__(self):
        if self.grid.size > KERNEL_SIZE_CAP:
            raise GridError(f"dense kernels are capped at {KERNEL_SIZE_CAP} nodes, grid has {self.grid.size}")
        full = np.array(self.full, dtype=complex)
        if full.shape != (self.grid.size, self.grid.size):
            raise GridError(f"kernel of shape {full.shape} on a grid of {self.grid.size} nodes")
        full.setflags(write=False)
        object.__setattr__(self, "full", full)

    @property
    def values(self):
        return np.triu(self.full) if self.ordered else self.full

    def _combine(self, other, sign):
        require_same_grid(self.grid, other.grid)
        return Kernel(self.grid, self.full + sign * other.full, self.ordered and other.ordered, self.name)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, scalar):
        return Kernel(self.grid, self.full * scalar, self.ordered, self.name)

    __rmul__ = __mul__


@lru_cache(maxsize=8)
def _composition_matrix(grid):
    return quadrature_matrix(grid)


def kernel_from_function(grid, func, name="k"):
    """Sample func(x, y) on all node pairs."""
    x, y = np.meshgrid(grid.nodes, grid.nodes, indexing="ij")
    return Kernel(grid, func(x, y), False, name)


def unit_kernel(grid):
    """𝟏(x, y) ≡ 1."""
    return Kernel(grid, np.ones((grid.size, grid.size)), False, "1")


def sigma_kernel(phi, inverse=False):
    """σ(x, y) = Φ(y)/Φ(x), or its reciprocal."""
    values = phi.values
    ratio = values[None, :] / values[:, None]
    return Kernel(phi.grid, 1.0 / ratio if inverse else ratio, False, "sigma^-1" if inverse else "sigma")


def power_kernel(table, n, tilde=False, weight=None):
    """
    X^(n)(x, y) (or X̃^(n)) as a kernel, optionally times Φ(y) or 1/Φ(y).

    Parameters:
    -----------
    weight : str, optional
        'phi' multiplies by Φ(y), 'inverse' by 1/Φ(y)
    """
    full = two_point_powers(table, n, tilde)
    if weight == "phi":
        full = full * table.phi.values[None, :]
    elif weight == "inverse":
        full = full / table.phi.values[None, :]
    elif weight is not None:
        raise ValueError(f"unknown kernel weight '{weight}'")
    return Kernel(table.grid, full, True, f"{'Xt' if tilde else 'X'}{n}")


def compose(f, g):
    """
    (f⋆g)[i, j] = ∫_{x_i}^{x_j} f(x_i, ξ) g(ξ, x_j) dξ for every node pair.

    With A the cumulative quadrature matrix, the integral is
    Σ_ξ (A[j, ξ] - A[i, ξ]) f[i, ξ] g[ξ, j], i.e. two matrix products.
    """
    require_same_grid(f.grid, g.grid)
    A = _composition_matrix(f.grid)
    full = f.full @ (A.T * g.full) - (f.full * A) @ g.full
    return Kernel(f.grid, full, True, f"({f.name}*{g.name})")


def compose_row(row, g, base_index, weighted=None):
    """
    Row base_index of f⋆g given only that row of f; O(M²) instead of O(M³).
    """
    A = _composition_matrix(g.grid)
    if weighted is None:
        weighted = A.T * g.full
    return row @ weighted - (A[base_index] * row) @ g.full


def kernel_power(f, n):
    """
    f^⟨n⟩ = f^⟨n-1⟩ ⋆ f for n >= 1.

    Raises:
    -------
    IdentityNotMaterializable : n = 0, the composition identity
    """
    if n == 0:
        raise IdentityNotMaterializable("f^<0> is the identity of composition and has no array form")
    if n < 0:
        raise ValueError(f"kernel powers need n >= 1, got {n}")
    result = f
    for _ in range(n - 1):
        result = compose(result, f)
    return Kernel(f.grid, result.full, True, f"{f.name}^<{n}>")


def ordered_residual(left, right):
    """Sup-norm of left - right on i <= j, relative to the sup-norm of right there."""
    mask = np.triu(np.ones((left.grid.size, left.grid.size), dtype=bool))
    difference = np.abs(left.full - right.full)[mask]
    scale = max(float(np.max(np.abs(right.full)[mask])), np.finfo(float).tiny)
    return float(np.max(difference)) / scale


def _smooth_kernel(grid, rng, name):
    a, b, c = rng.uniform(-1.0, 1.0, 3)

    def func(x, y):
        s, t = (x - grid.a) / grid.length, (y - grid.a) / grid.length
        return np.exp(a * s + b * t) * np.cos(c * s * t + a)

    return kernel_from_function(grid, func, name)


def algebra_residuals(grid, seed=0, max_power=3):
    """
    Associativity, distributivity and power permutability of ⋆ on random
    smooth kernels.

    Returns:
    --------
    dict : 'associativity', 'distributivity' and 'permutability' relative residuals
    """
    rng = np.random.default_rng(seed)
    f, g, h = (_smooth_kernel(grid, rng, name) for name in ("f", "g", "h"))
    associativity = ordered_residual(compose(compose(f, g), h), compose(f, compose(g, h)))
    distributivity = max(ordered_residual(compose(f, g + h), compose(f, g) + compose(f, h)),
                         ordered_residual(compose(f + g, h), compose(f, h) + compose(g, h)))
    powers = {n: kernel_power(f, n) for n in range(1, max_power + 1)}
    permutability = max((ordered_residual(compose(powers[n], powers[m]), compose(powers[m], powers[n]))
                         for n in powers for m in powers if n < m), default=0.0)
    return {"associativity": associativity, "distributivity": distributivity, "permutability": permutability}


def sigma_bridge_residuals(table):
    """
    (𝟏⋆σ)(x0, x) = Φ(x) X^(1)(x0, x) and (𝟏⋆σ⁻¹)(x0, x) = X̃^(1)(x0, x)/Φ(x).
    """
    grid, x0 = table.grid, table.x0_index
    phi = table.phi.values
    ones = np.ones(grid.size, dtype=complex)
    forward = compose_row(ones, sigma_kernel(table.phi), x0)
    backward = compose_row(ones, sigma_kernel(table.phi, inverse=True), x0)
    expected_forward = phi * table.X[1]
    expected_backward = table.Xt[1] / phi

    def relative(a, b):
        return float(np.max(np.abs(a - b))) / max(float(np.max(np.abs(b))), np.finfo(float).tiny)

    return {"sigma": relative(forward, expected_forward), "sigma_inverse": relative(backward, expected_backward)}


def power_bridge_residuals(table, n):
    """
    (Φ X^(1))^⟨n⟩ = Φ X^(2n-1)/(2n-1)! and ((1/Φ) X̃^(1))^⟨n⟩ ⋆ 𝟏 = X̃^(2n)/(2n)!.
    """
    rho = power_kernel(table, 1, weight="phi")
    rho_tilde = power_kernel(table, 1, tilde=True, weight="inverse")
    first = kernel_power(rho, n)
    expected_first = power_kernel(table, 2 * n - 1, weight="phi") * (1.0 / math.factorial(2 * n - 1))
    second = compose(kernel_power(rho_tilde, n), unit_kernel(table.grid))
    expected_second = power_kernel(table, 2 * n, tilde=True) * (1.0 / math.factorial(2 * n))
    return {
        "odd_power": ordered_residual(first, expected_first),
        "even_power": ordered_residual(second, expected_second),
    }


def composition_rule_residuals(table, n, m):
    """
    Composition rules for weighted Φ-power kernels.

    Φ X^(2n-1) ⋆ X^(2m) = A X^(2n+2m) and Φ X^(2n-1) ⋆ X^(2m-1) = B X^(2n+2m-1),
    with the conjugate pair (1/Φ) X̃ in place of Φ X, where
    A = (2n-1)!(2m)!/(2n+2m)! and B = (2n-1)!(2m-1)!/(2n+2m-1)!.

    Returns:
    --------
    dict : Relative residual of each of the four rules
    """
    if n < 1 or m < 1:
        raise ValueError(f"n and m must be >= 1, got n={n}, m={m}")
    if 2 * n + 2 * m > table.order:
        raise InsufficientOrder(f"composition rule for n={n}, m={m}", 2 * n + 2 * m)
    f = math.factorial
    A = f(2 * n - 1) * f(2 * m) / f(2 * n + 2 * m)
    B = f(2 * n - 1) * f(2 * m - 1) / f(2 * n + 2 * m - 1)
    residuals = {}
    for tilde, weight, label in ((False, "phi", "X"), (True, "inverse", "Xt")):
        left = power_kernel(table, 2 * n - 1, tilde, weight)
        residuals[f"A_{label}"] = ordered_residual(
            compose(left, power_kernel(table, 2 * m, tilde)), power_kernel(table, 2 * n + 2 * m, tilde) * A
        )
        residuals[f"B_{label}"] = ordered_residual(
            compose(left, power_kernel(table, 2 * m - 1, tilde)), power_kernel(table, 2 * n + 2 * m - 1, tilde) * B
        )
    return residuals


@dataclass(frozen=True, eq=False)
class ResolventSolution:
    """
    Neumann-series basis parts; ψ = c1 * u1_part + c2 * u2_part.
    """
    psi0: SampledFunction
    lam: complex
    x0_index: int
    neumann_terms: int
    u1_part: np.ndarray
    u2_part: np.ndarray
    tail_estimate: float

    @property
    def grid(self):
        return self.psi0.grid

    def combine(self, c1=1.0, c2=0.0):
        return SampledFunction(self.grid, c1 * self.u1_part + c2 * self.u2_part, None, f"psi[λ={self.lam}]")


def resolvent_kernels(psi0):
    """
    ρ(x, y) = ψ0²(y) ∫_x^y dξ/ψ0² and ρ̃(x, y) = ψ0⁻²(y) ∫_x^y ψ0² dξ.
    """
    grid = psi0.grid
    phi = psi0.values ** 2
    G = running_integral(1.0 / phi, grid)
    Gt = running_integral(phi, grid)
    rho = phi[None, :] * (G[None, :] - G[:, None])
    rho_tilde = (Gt[None, :] - Gt[:, None]) / phi[None, :]
    return Kernel(grid, rho, True, "rho"), Kernel(grid, rho_tilde, True, "rho_t")


def resolvent_solution(psi0, lam, x0_index=None, series_tol=SERIES_TOL, vanish_tolerance=VANISH_TOLERANCE):
    """
    ψ = c1 ψ0 [(Σ λ^k ρ̃^⟨k⟩) ⋆ 𝟏](x0, x) + c2/ψ0 Σ λ^k ρ^⟨k+1⟩(x0, x).

    Only the base row of each kernel power is needed, so powers are
    propagated row by row. Each row carries its power of λ.

    Parameters:
    -----------
    psi0 : SampledFunction
        Nonvanishing ground state
    lam : complex
        Spectral parameter
    x0_index : int, optional
        Base node, defaults to the grid's x0
    series_tol : float
        Stop once the newest term is this small relative to the parts

    Returns:
    --------
    ResolventSolution : u1_part and u2_part
    """
    psi0.require_nonvanishing(vanish_tolerance)
    grid = psi0.grid
    i = grid.x0_index if x0_index is None else int(x0_index)
    rho, rho_tilde = resolvent_kernels(psi0)
    A = _composition_matrix(grid)
    weighted_rho, weighted_rho_tilde = A.T * rho.full, A.T * rho_tilde.full
    psi = psi0.values

    u1 = psi.copy()
    row = rho.full[i].copy()
    u2 = row / psi
    row_tilde = rho_tilde.full[i].copy()
    c, _, _ = convergence_constant(SampledFunction(grid, psi ** 2))
    peak = math.sqrt(abs(lam) * c) + 1
    previous, streak, tail, k = math.inf, 0, 0.0, 0
    for k in range(1, MAX_TERMS + 1):
        if lam == 0:
            tail = 0.0
            k = 0
            break
        term1 = lam * psi * integrate_from(row_tilde, grid, i)
        row = lam * compose_row(row, rho, i, weighted_rho)
        term2 = row / psi
        u1 = u1 + term1
        u2 = u2 + term2
        newest = max(float(np.max(np.abs(term1))), float(np.max(np.abs(term2))))
        tail = newest / max(1.0, float(np.max(np.abs(u1))), float(np.max(np.abs(u2))))
        if tail <= series_tol:
            break
        streak = streak + 1 if newest > previous else 0
        if streak > GROWTH_STREAK and k > peak:
            raise DivergenceSuspected(f"Neumann terms grew {streak} times in a row at k={k}")
        previous = newest
        row_tilde = lam * compose_row(row_tilde, rho_tilde, i, weighted_rho_tilde)
    else:
        raise DivergenceSuspected(f"Neumann series did not reach {series_tol:.1e} in {MAX_TERMS} terms")
    logger.debug("resolvent at λ=%s: %d kernel powers, tail %.3e", lam, k, tail)
    return ResolventSolution(psi0, lam, i, k, u1, u2, tail)


def partner_resolvent(psi0, lam, x0_index=None, series_tol=SERIES_TOL):
    """Resolvent of the partner equation: ψ0 -> 1/ψ0, so ρ and ρ̃ trade places."""
    return resolvent_solution(psi0.reciprocal(), lam, x0_index, series_tol)


def equivalent_spps_problem(psi0, partner=False, x0_index=None):
    """
    (u')' - V u = λ u with u0 = ψ0 (or 1/ψ0 and V2 for the partner), the
    problem whose SPPS series coincides with the resolvent parts.
    """
    pair = build_susy_pair(psi0)
    ground, potential = (psi0.reciprocal(), pair.V2) if partner else (psi0, pair.V1)
    grid = psi0.grid
    one = SampledFunction.from_jet(grid, Jet.constant(1.0, JET_ORDER, grid.size), "1")
    return sturm_liouville_problem(one, -potential, one, ground, x0_index)


def resolvent_spps_residual(solution, K=40, partner=False):
    """
    Largest relative mismatch between resolvent parts and SPPS basis solutions.
    """
    ground = solution.psi0.reciprocal() if partner else solution.psi0
    problem = equivalent_spps_problem(ground, partner=partner, x0_index=solution.x0_index)
    series = build_spps(problem, K)
    u1 = evaluate_solution(series, solution.lam, 1.0, 0.0).values
    u2 = evaluate_solution(series, solution.lam, 0.0, 1.0).values
    first = float(np.max(np.abs(solution.u1_part - u1))) / max(1.0, float(np.max(np.abs(u1))))
    second = float(np.max(np.abs(solution.u2_part - u2))) / max(1.0, float(np.max(np.abs(u2))))
    return max(first, second)


def resolvent_frame(solution):
    """node, u1_part, u2_part as (re, im) pairs."""
    return pd.DataFrame({
        "node": solution.grid.nodes,
        **complex_columns("u1_part", solution.u1_part),
        **complex_columns("u2_part", solution.u2_part),
    })
