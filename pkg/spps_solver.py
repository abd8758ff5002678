"""
Spectral parameter power series (SPPS) solver.
Builds the (p, r)-weighted power recursions from a particular solution u0,
evaluates the general solution of (p u')' + q u = λ r u, certifies the
truncation, and finds Dirichlet eigenvalues by scanning the characteristic
polynomial in λ.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import bisect
from scipy.special import factorial

from errors import (
    GroundStateVanishes,
    NoRootsInRange,
    NotAParticularSolution,
    TruncationTooSmall,
)
from gen_powers import build_power_table, iterated_powers
from grid_quadrature import JET_ORDER, VANISH_TOLERANCE, Grid, Jet, SampledFunction, require_same_grid
from utils import complex_columns

logger = logging.getLogger(__name__)

DEFAULT_K = 30
SERIES_TOL = 1e-12
ODE_TOL = 1e-5
RESID_TOL = 1e-6
ROOT_TOL = 1e-10
SEPARATION_TOL = 1e-8
SCAN_POINTS = 2000
LOG_FLOAT_MAX = 709.0


@dataclass(frozen=True, eq=False)
class SturmLiouvilleProblem:
    """
    (p u')' + q u = λ r u with a known solution u0 of the λ = 0 equation.
    """
    grid: Grid
    p: SampledFunction
    q: SampledFunction
    r: SampledFunction
    u0: SampledFunction
    x0_index: int

    @property
    def odd_weight(self):
        """1/(u0² p), integrand of the odd X steps."""
        return 1.0 / (self.u0.values ** 2 * self.p.values)

    @property
    def even_weight(self):
        """u0² r, integrand of the even X steps."""
        return self.u0.values ** 2 * self.r.values

    def is_self_adjoint(self, tolerance=1e-14):
        return all(f.is_real(tolerance) for f in (self.p, self.q, self.r, self.u0))


def homogeneous_residual(p, q, u0):
    """
    ‖(p u0')' + q u0‖∞ relative to max(‖q u0‖∞, ‖p u0''‖∞).
    """
    p_jet, u_jet = p.derivatives(1), u0.derivatives(2)
    flux_derivative = p_jet[1] * u_jet[1] + p_jet[0] * u_jet[2]
    residual = flux_derivative + q.values * u0.values
    scale = max(float(np.max(np.abs(q.values * u0.values))),
                float(np.max(np.abs(p_jet[0] * u_jet[2]))), np.finfo(float).tiny)
    return float(np.max(np.abs(residual))) / scale


def sturm_liouville_problem(p, q, r, u0, x0_index=None, resid_tol=RESID_TOL,
                            vanish_tolerance=VANISH_TOLERANCE):
    """
    Validate and assemble a Sturm-Liouville problem.

    Raises:
    -------
    GroundStateVanishes : u0 or p has a zero on the grid
    NotAParticularSolution : u0 does not solve the λ = 0 equation
    """
    grid = u0.grid
    require_same_grid(grid, p.grid, q.grid, r.grid)
    u0.require_nonvanishing(vanish_tolerance, GroundStateVanishes)
    p.require_nonvanishing(vanish_tolerance, GroundStateVanishes)
    product = u0.values ** 2 * p.values
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        finite = np.isfinite(1.0 / product) & np.isfinite(u0.values ** 2 * r.values)
    if not np.all(finite):
        i = int(np.flatnonzero(~finite)[0])
        raise GroundStateVanishes("u0^2 p", i, grid.nodes[i], product[i])
    residual = homogeneous_residual(p, q, u0)
    if residual > resid_tol:
        raise NotAParticularSolution(f"relative residual of (p u0')' + q u0 is {residual:.3e} > {resid_tol:.1e}")
    if x0_index is None:
        x0_index = grid.x0_index
    return SturmLiouvilleProblem(grid, p, q, r, u0, int(x0_index))


def schrodinger_problem(V, psi0, grid=None, x0_index=None, resid_tol=RESID_TOL):
    """
    -ψ'' + V ψ = λ ψ in Sturm-Liouville form: p = -1, q = V, r = 1, u0 = ψ0.
    """
    grid = grid or psi0.grid
    minus_one = SampledFunction.from_jet(grid, Jet.constant(-1.0, JET_ORDER, grid.size), "p")
    one = SampledFunction.from_jet(grid, Jet.constant(1.0, JET_ORDER, grid.size), "r")
    return sturm_liouville_problem(minus_one, V, one, psi0, x0_index, resid_tol)


@dataclass(frozen=True, eq=False)
class SppsSeries:
    """
    Rows 0..2K+1 of the (p, r) recursion, stored divided by n!, plus the problem.
    """
    problem: SturmLiouvilleProblem
    scaled: np.ndarray
    scaled_t: np.ndarray
    K: int
    weight_integrals: tuple = field(default=(0.0, 0.0))

    @property
    def grid(self):
        return self.problem.grid

    @property
    def Xhat(self):
        """Unscaled X rows; entries past row 170 overflow to inf."""
        return _unscale(self.scaled)

    @property
    def Xhat_t(self):
        return _unscale(self.scaled_t)


def _unscale(rows):
    factorials = factorial(np.arange(rows.shape[0]))[:, None]
    with np.errstate(over="ignore", invalid="ignore"):
        return np.where(rows == 0.0, 0.0, rows * factorials)


def build_spps(problem, K=DEFAULT_K):
    """
    Build the SPPS rows for truncation K.

    X steps integrate 1/(u0² p) on odd n and u0² r on even n; X̃ swaps them.

    Parameters:
    -----------
    problem : SturmLiouvilleProblem
        Validated problem
    K : int
        Highest power of λ kept

    Returns:
    --------
    SppsSeries : Rows of order 0..2K+1 divided by n!
    """
    if K < 0:
        raise ValueError(f"K must be nonnegative, got {K}")
    problem.u0.require_nonvanishing(VANISH_TOLERANCE, GroundStateVanishes)
    grid, base = problem.grid, problem.x0_index
    odd, even = problem.odd_weight, problem.even_weight
    order = 2 * K + 1
    scaled = iterated_powers(grid, odd, even, base, order, scaled=True)
    scaled_t = iterated_powers(grid, even, odd, base, order, scaled=True)
    h = grid.h
    alpha = float(np.sum(np.abs(odd)) * h)
    beta = float(np.sum(np.abs(even)) * h)
    logger.debug("SPPS rows built: K=%d, ∫|1/(u0²p)|=%.4g, ∫|u0²r|=%.4g", K, alpha, beta)
    for array in (scaled, scaled_t):
        array.setflags(write=False)
    return SppsSeries(problem, scaled, scaled_t, K, (alpha, beta))


def power_table_bridge_residual(u0, order=8):
    """
    With p = r = 1 the SPPS rows are the X and X̃ rows of Φ = u0².

    q = -u0''/u0 makes u0 a particular solution; q does not enter the rows.

    Returns:
    --------
    float : Largest difference over rows 0..order, relative to max(1, |rows|)
    """
    grid = u0.grid
    jet = u0.derivatives(2)
    one = SampledFunction.from_jet(grid, Jet.constant(1.0, JET_ORDER, grid.size), "1")
    q = SampledFunction(grid, -jet[2] / jet[0], None, "q")
    problem = sturm_liouville_problem(one, q, one, u0)
    series = build_spps(problem, K=order // 2)
    table = build_power_table(u0 * u0, problem.x0_index, order)
    rows = slice(0, order + 1)
    difference = max(float(np.max(np.abs(series.Xhat[rows] - table.X))),
                     float(np.max(np.abs(series.Xhat_t[rows] - table.Xt))))
    scale = max(1.0, float(np.max(np.abs(table.X))), float(np.max(np.abs(table.Xt))))
    return difference / scale


def _term_sizes(series, lam):
    """Sup-norms of the k-th terms of u1 and u2 for k = 0..K."""
    u0 = np.abs(series.problem.u0.values)
    K = series.K
    sizes = np.zeros((2, K + 1))
    for k in range(K + 1):
        scale = abs(lam) ** k if k else 1.0
        sizes[0, k] = scale * np.max(u0 * np.abs(series.scaled_t[2 * k]))
        sizes[1, k] = scale * np.max(u0 * np.abs(series.scaled[2 * k + 1]))
    return sizes


def prior_tail_bound(growth, K, amplitude=1.0):
    """
    Closed-form bound on Σ_{k>K} amplitude · growth^k / (k!)².

    Past the peak at k = ⌊√growth⌋ the terms shrink geometrically, so the
    sum is bounded without walking k. Returns inf when the bound overflows.
    """
    if growth <= 0.0:
        return 0.0
    log_growth = math.log(growth)

    def log_term(k):
        return k * log_growth - 2.0 * math.lgamma(k + 1)

    start = K + 1
    ratio = growth / (start + 1) ** 2
    if ratio < 1.0:
        log_bound = log_term(start) - math.log1p(-ratio)
    else:
        # terms up to `settle` are at most the peak, later ones halve at least
        peak = math.floor(math.sqrt(growth))
        settle = math.ceil(math.sqrt(2.0 * growth))
        log_bound = log_term(peak) + math.log(settle - start + 2)
    log_bound += math.log(amplitude)
    return math.exp(log_bound) if log_bound < LOG_FLOAT_MAX else math.inf


def truncation_estimate(series, lam):
    """
    Tail estimate of both series after K, relative to their largest term.

    The smaller of the a priori bound of `prior_tail_bound` and a geometric
    extrapolation of the last two terms is used.

    Returns:
    --------
    tuple : (relative tail estimate, geometric ratio of the last terms)
    """
    K = series.K
    sizes = _term_sizes(series, lam)
    scale = max(float(np.max(sizes)), np.finfo(float).tiny)
    u0_max = float(np.max(np.abs(series.problem.u0.values)))
    alpha, beta = series.weight_integrals
    growth = abs(lam) * alpha * beta
    prior = prior_tail_bound(growth, K, u0_max * max(1.0, alpha))
    last = float(np.max(sizes[:, K]))
    previous = float(np.max(sizes[:, K - 1])) if K >= 1 else 0.0
    if last == 0.0:
        posterior, ratio = 0.0, 0.0
    elif previous > 0.0 and last < previous:
        ratio = last / previous
        posterior = last * ratio / (1.0 - ratio)
    else:
        posterior, ratio = math.inf, 1.0
    return min(prior, posterior) / scale, ratio


def _needed_k(series, lam, series_tol):
    K = series.K
    sizes = _term_sizes(series, lam)
    scale = max(float(np.max(sizes)), np.finfo(float).tiny)
    last = float(np.max(sizes[:, K]))
    previous = float(np.max(sizes[:, K - 1])) if K >= 1 else 0.0
    if previous > last > 0.0:
        ratio = last / previous
        extra = math.log(series_tol * scale * (1 - ratio) / last) / math.log(ratio)
        return K + max(1, math.ceil(extra)) + 1
    return 2 * max(K, 1)


def require_certified(series, lam, series_tol=SERIES_TOL):
    estimate, _ = truncation_estimate(series, lam)
    if estimate > series_tol:
        raise TruncationTooSmall(
            f"tail estimate {estimate:.3e} exceeds {series_tol:.1e} at λ={lam}", _needed_k(series, lam, series_tol)
        )
    return estimate


def series_coefficients(series):
    """
    Rows of λ^k coefficients: u1 = Σ λ^k A[k], u2 = Σ λ^k B[k].
    """
    u0 = series.problem.u0.values
    return u0 * series.scaled_t[0::2], u0 * series.scaled[1::2]


def _powers(lam, K):
    return np.array([lam ** k for k in range(K + 1)], dtype=complex)


def evaluate_solution(series, lam, c1=1.0, c2=0.0, series_tol=SERIES_TOL):
    """
    u = c1 u1 + c2 u2 at spectral parameter λ.

    Parameters:
    -----------
    series : SppsSeries
        Built rows
    lam : complex
        Spectral parameter
    c1, c2 : complex
        Coefficients of the two basis solutions
    series_tol : float
        Maximum certified relative tail

    Returns:
    --------
    SampledFunction : The solution on the grid
    """
    require_certified(series, lam, series_tol)
    first, second = series_coefficients(series)
    powers = _powers(lam, series.K)
    values = c1 * (powers @ first) + c2 * (powers @ second)
    return SampledFunction(series.grid, values, None, f"u[λ={lam}]")


def solution_derivative(series, lam, c1=1.0, c2=0.0):
    """
    u' from the recursion: a scaled row differentiates to its step weight times the previous row.
    """
    problem, K = series.problem, series.K
    u0 = problem.u0.values
    du0 = problem.u0.derivative
    odd = problem.odd_weight
    powers = _powers(lam, K)
    sum1 = powers @ series.scaled_t[0::2]
    sum2 = powers @ series.scaled[1::2]
    d1 = powers[1:] @ (odd * series.scaled_t[1:-1:2]) if K else 0.0
    d2 = powers @ (odd * series.scaled[0:-1:2])
    return c1 * (du0 * sum1 + u0 * d1) + c2 * (du0 * sum2 + u0 * d2)


def solution_wronskian_at_base(series, lam=0.0):
    """u1 u2' - u1' u2 at x0; equals 1/p(x0)."""
    i = series.problem.x0_index
    u1 = evaluate_solution(series, lam, 1.0, 0.0, series_tol=math.inf).values
    u2 = evaluate_solution(series, lam, 0.0, 1.0, series_tol=math.inf).values
    du1 = solution_derivative(series, lam, 1.0, 0.0)
    du2 = solution_derivative(series, lam, 0.0, 1.0)
    return u1[i] * du2[i] - du1[i] * u2[i]


def ode_residual(problem, u, lam):
    """
    Centered-difference residual of (p u')' + q u - λ r u on interior nodes.
    """
    h = problem.grid.h
    p_half = 0.5 * (problem.p.values[1:] + problem.p.values[:-1])
    flux = p_half * np.diff(u.values) / h
    divergence = np.diff(flux) / h
    interior = slice(1, -1)
    residual = divergence + (problem.q.values[interior] - lam * problem.r.values[interior]) * u.values[interior]
    return float(np.max(np.abs(residual)))


@dataclass(frozen=True, eq=False)
class EigenResult:
    """Dirichlet eigenvalues found in a scan range."""
    eigenvalues: np.ndarray
    residuals: np.ndarray
    K: int
    scan_range: tuple


def characteristic_polynomial(series):
    """Coefficients (lowest power first) of λ -> u2(b; λ)."""
    _, second = series_coefficients(series)
    return second[:, -1].real


def characteristic(series, lam):
    """u2(b; λ), the Dirichlet characteristic function for x0 = a."""
    return float(np.polynomial.polynomial.polyval(lam, characteristic_polynomial(series)))


def dirichlet_eigenvalues(series, lambda_range, count=5, scan_points=SCAN_POINTS,
                          root_tol=ROOT_TOL, series_tol=SERIES_TOL):
    """
    Real roots of u2(b; λ) in a range, by sign-change bracketing and bisection.

    Parameters:
    -----------
    series : SppsSeries
        Built with x0 at the left endpoint
    lambda_range : tuple
        (low, high) scan interval
    count : int
        Maximum number of eigenvalues returned
    scan_points : int
        Uniform λ mesh size

    Returns:
    --------
    EigenResult : Sorted eigenvalues with normalized residuals
    """
    problem = series.problem
    if problem.x0_index != 0:
        raise ValueError("Dirichlet eigenvalues need x0 at the left endpoint")
    if not problem.is_self_adjoint():
        raise ValueError("Dirichlet eigenvalue search needs real p, q, r and u0")
    if len(lambda_range) != 2:
        raise ValueError(f"lambda_range needs (low, high), got {lambda_range!r}")
    low, high = float(lambda_range[0]), float(lambda_range[1])
    if not high > low:
        raise NoRootsInRange(f"empty λ range [{low}, {high}]")
    edge = low if abs(low) > abs(high) else high
    require_certified(series, edge, series_tol)
    coefficients = characteristic_polynomial(series)
    mesh = np.linspace(low, high, scan_points)
    values = np.polynomial.polynomial.polyval(mesh, coefficients)
    scale = max(float(np.max(np.abs(values))), np.finfo(float).tiny)

    def func(lam):
        return float(np.polynomial.polynomial.polyval(lam, coefficients))

    roots = []
    for i in range(scan_points - 1):
        if len(roots) >= count:
            break
        left, right = values[i], values[i + 1]
        if left == 0.0:
            roots.append(mesh[i])
        elif left * right < 0.0:
            roots.append(bisect(func, mesh[i], mesh[i + 1], xtol=root_tol, maxiter=200))
    roots = [lam for k, lam in enumerate(roots) if k == 0 or lam - roots[k - 1] > SEPARATION_TOL]
    if not roots:
        raise NoRootsInRange(f"no sign change of the characteristic function in [{low}, {high}]")
    eigenvalues = np.array(roots[:count])
    residuals = np.array([abs(func(lam)) for lam in eigenvalues]) / scale
    logger.info("found %d Dirichlet eigenvalues in [%g, %g] with K=%d", eigenvalues.size, low, high, series.K)
    return EigenResult(eigenvalues, residuals, series.K, (low, high))


def finite_difference_eigenvalues(V, a, b, count, nodes=8193):
    """
    Lowest Dirichlet eigenvalues of -ψ'' + V ψ by second-order differences.

    Parameters:
    -----------
    V : callable
        Potential, evaluated at interior nodes
    a, b : float
        Interval with ψ(a) = ψ(b) = 0
    count : int
        Number of eigenvalues
    nodes : int
        Grid size including both walls

    Returns:
    --------
    np.ndarray : Ascending eigenvalues
    """
    x = np.linspace(a, b, nodes)[1:-1]
    h = (b - a) / (nodes - 1)
    diagonal = 2.0 / h ** 2 + V(x)
    off_diagonal = -np.ones(x.size - 1) / h ** 2
    return eigh_tridiagonal(diagonal, off_diagonal, eigvals_only=True, select="i",
                            select_range=(0, count - 1))


def eigen_frame(result):
    """index, lambda, residual."""
    return pd.DataFrame({
        "index": np.arange(1, result.eigenvalues.size + 1),
        "lambda": result.eigenvalues,
        "residual": result.residuals,
    })


def solution_frame(series, u):
    """node, u (re, im)."""
    return pd.DataFrame({"node": series.grid.nodes, **complex_columns("u", u.values)})
