"""
Φ-derivatives and the calculus built on the Y basis.
Covers the derivative formulas for power rows, the supersymmetric Taylor
expansion with its exact remainder, Wronskians, fundamental solution sets,
Cauchy particular solutions and the ordinary-derivative expansion of D^(n).
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from errors import (
    ConditioningFailure,
    InsufficientOrder,
    OrderCapExceeded,
    ParityMismatch,
    PositivePhiRequired,
    RealPhiRequired,
)
from gen_powers import YBasis, basis_is_tilde, two_point_powers
from grid_quadrature import Jet, SampledFunction, integrate_from, require_same_grid
from utils import complex_columns

logger = logging.getLogger(__name__)

WRONSKIAN_ORDER_CAP = 4
FUNDAMENTAL_ORDER_CAP = 6
CONDITION_LIMIT = 1e10
REAL_TOLERANCE = 1e-14

VARIANTS = ("DX", "DtXt", "DtX", "DXt")


class PhiDerivativeOperator:
    """
    D h = Φ h' and D̃ h = h'/Φ acting on jets.

    Higher orders alternate: D^(k) = D D̃ D ... (k factors, outermost D) and
    D̃^(k) = D̃ D D̃ ...; starts_with_tilde picks which one `power` applies.

    Parameters:
    -----------
    phi : SampledFunction
        Φ, with a jet long enough for the orders used
    starts_with_tilde : bool
        Outermost factor is D̃ instead of D
    """

    def __init__(self, phi, starts_with_tilde=False):
        self.phi = phi
        self.starts_with_tilde = starts_with_tilde

    def _weights(self, order):
        phi_jet = self.phi.derivatives(max(order, 0))
        return phi_jet, phi_jet.reciprocal()

    def D(self, jet):
        phi_jet, _ = self._weights(jet.order - 1)
        return phi_jet * jet.derivative()

    def Dt(self, jet):
        _, inverse_jet = self._weights(jet.order - 1)
        return inverse_jet * jet.derivative()

    def power(self, jet, k, tilde=None):
        """Apply k alternating factors; the result jet loses k orders."""
        if tilde is None:
            tilde = self.starts_with_tilde
        if k > jet.order:
            raise InsufficientOrder("jet too short for this many Φ-derivatives", k)
        if k == 0:
            return jet
        phi_jet, inverse_jet = self._weights(jet.order - 1)
        # innermost factor first: it is D̃ exactly when (k odd) == tilde
        for i in reversed(range(k)):
            use_tilde = (i % 2 == 0) == tilde
            jet = (inverse_jet if use_tilde else phi_jet) * jet.derivative()
        return jet

    def scheme(self, jet, k):
        """𝒟_k: D̃^(k) for odd k, D^(k) for even k."""
        return self.power(jet, k, tilde=(k % 2 == 1))


def apply_phi_derivative(jet, phi, k, tilde=False):
    """D^(k) (or D̃^(k) when tilde) of a jet; returns the resulting jet."""
    return PhiDerivativeOperator(phi).power(jet, k, tilde)


def power_row_derivative(table, n, tilde=False):
    """Exact first derivative of a power row: n * w_n * row[n-1]."""
    if n == 0:
        return np.zeros(table.grid.size, dtype=complex)
    odd_weight, even_weight = table.weights(tilde)
    weight = odd_weight if n % 2 else even_weight
    return n * weight * table.rows(tilde)[n - 1]


def power_jet(table, n, order, tilde=False):
    """
    Jet of X^(n) (or X̃^(n)) up to `order`, from (X^(n))' = n w_n X^(n-1).

    Only Φ's own jet is differentiated; power rows are never differenced.
    """
    if n > table.order:
        raise InsufficientOrder(f"row {n} requested from a table of order {table.order}", n)
    phi_jet = table.phi.derivatives(max(order - 1, 0))
    inverse_jet = phi_jet.reciprocal()
    odd_weight, even_weight = (phi_jet, inverse_jet) if tilde else (inverse_jet, phi_jet)
    rows = table.rows(tilde)
    start = max(0, n - order)
    if start == 0:
        jet = Jet.constant(1.0, order - n, table.grid.size)
    else:
        jet = Jet(rows[start][None, :])
    for m in range(start + 1, n + 1):
        need = order - (n - m)
        weight = odd_weight if m % 2 else even_weight
        lower = weight.truncate(need - 1) * jet
        jet = Jet(np.vstack([rows[m], m * lower.values]))
    return jet


def basis_jet(table, n, order, conjugate=False):
    """Jet of 𝒴_n (or 𝒴̃_n)."""
    return power_jet(table, n, order, tilde=basis_is_tilde(n, conjugate))


def _variant_rule(variant):
    # (operator is D̃, acts on X̃, needs same parity)
    return {
        "DX": (False, False, True),
        "DtXt": (True, True, True),
        "DtX": (True, False, False),
        "DXt": (False, True, False),
    }[variant]


def phi_derivative_power(table, k, n, variant="DX"):
    """
    Apply D^(k) or D̃^(k) to X^(n) or X̃^(n) where the derivative formula holds.

    Parameters:
    -----------
    table : PowerTable
        Source rows
    k, n : int
        Derivative order and power
    variant : str
        'DX' (D^(k)X^(n)), 'DtXt' (D̃^(k)X̃^(n)), 'DtX' (D̃^(k)X^(n)) or 'DXt' (D^(k)X̃^(n))

    Returns:
    --------
    np.ndarray : Samples of the derivative; equal to n!/(n-k)! times row n-k
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant '{variant}', expected one of {VARIANTS}")
    operator_tilde, row_tilde, same_parity = _variant_rule(variant)
    if k < 0 or n < 0:
        raise ParityMismatch(f"orders must be nonnegative, got k={k}, n={n}")
    if same_parity and ((n - k) % 2 != 0 or n < k):
        raise ParityMismatch(f"{variant} needs k, n of the same parity with n >= k (k={k}, n={n})")
    if not same_parity and ((n - k) % 2 == 0 or n <= k):
        raise ParityMismatch(f"{variant} needs k, n of opposite parity with n > k (k={k}, n={n})")
    jet = power_jet(table, n, k, tilde=row_tilde)
    return apply_phi_derivative(jet, table.phi, k, tilde=operator_tilde)[0]


def predicted_derivative_power(table, k, n, variant="DX"):
    """n!/(n-k)! times the order-(n-k) row the formula predicts."""
    _, row_tilde, _ = _variant_rule(variant)
    return math.factorial(n) / math.factorial(n - k) * table.rows(row_tilde)[n - k]


def require_real_phi(phi):
    if not phi.is_real(REAL_TOLERANCE):
        raise RealPhiRequired(f"{phi.name} must be real-valued")


@dataclass(frozen=True, eq=False)
class TaylorExpansion:
    """
    f = Σ_k 𝒟_k f(x0)/k! 𝒴_k(x0, x) + R_n(x) on the grid.
    """
    x0_index: int
    order: int
    coefficients: np.ndarray
    basis: YBasis
    remainder: np.ndarray
    target: np.ndarray

    @property
    def partial_sum(self):
        return sum(c * self.basis.Y(k) for k, c in enumerate(self.coefficients))

    def residual(self):
        return float(np.max(np.abs(self.partial_sum + self.remainder - self.target)))


def taylor_expand(f, table, n):
    """
    Supersymmetric Taylor expansion of f around the table's base node.

    Parameters:
    -----------
    f : SampledFunction
        Target, with a jet of order n+1 (otherwise finite differences are used)
    table : PowerTable
        Real Φ, order >= n
    n : int
        Expansion order

    Returns:
    --------
    TaylorExpansion : Coefficients, basis and exact remainder
    """
    require_real_phi(table.phi)
    require_same_grid(f.grid, table.grid)
    if n > table.order:
        raise InsufficientOrder(f"Taylor order {n} exceeds table order {table.order}", n)
    x0 = table.x0_index
    operator = PhiDerivativeOperator(table.phi)
    f_jet = f.derivatives(n + 1)
    coefficients = np.array([
        operator.scheme(f_jet.truncate(k), k)[0][x0] / math.factorial(k) for k in range(n + 1)
    ])
    top = operator.scheme(f_jet, n + 1)[0]
    phi = table.phi.values
    weight = phi if n % 2 == 0 else 1.0 / phi
    kernel = two_point_powers(table, n, tilde=basis_is_tilde(n))
    integrand = kernel.T * (weight * top)[None, :]
    remainder = np.diag(integrate_from(integrand, table.grid, x0, axis=-1)) / math.factorial(n)
    logger.debug("Taylor order %d of %s: coefficients %s", n, f.name, np.round(coefficients, 12))
    return TaylorExpansion(x0, n, coefficients, table.basis, remainder, f.values)


def taylor_frames(expansion, nodes):
    """
    Coefficient table (k, coefficient) and per-node remainder table.
    """
    coefficients = pd.DataFrame({"k": np.arange(expansion.order + 1),
                                 **complex_columns("coefficient", expansion.coefficients)})
    remainder = pd.DataFrame({"node": nodes,
                              **complex_columns("remainder", expansion.remainder),
                              **complex_columns("partial_sum", expansion.partial_sum)})
    return coefficients, remainder


class WronskianForms:
    """
    Closed forms 𝒲_n = α_n Φ^((n+1)/2) (n odd), α_n Φ^(n/2) (n even) and the
    tilde forms with 1/Φ, where α_n = Π_{k<=n} k!.
    """

    def __init__(self, phi, n):
        require_real_phi(phi)
        if np.any(phi.values.real <= 0):
            raise PositivePhiRequired(f"{phi.name} must be positive for the Wronskian closed forms")
        self.phi = phi
        self.n = n
        self.alpha = float(math.prod(math.factorial(k) for k in range(n + 1)))

    @property
    def exponent(self):
        return (self.n + 1) / 2 if self.n % 2 else self.n / 2

    def values(self):
        phi = self.phi.values.real
        return self.alpha * phi ** self.exponent, self.alpha * phi ** (-self.exponent)


def wronskian_closed_form(forms, index):
    """(𝒲_n, 𝒲̃_n) at node `index`."""
    W, Wt = forms.values()
    return W[index], Wt[index]


def wronskian_matrices(table, n, tilde=False):
    """
    Stack of (n+1)x(n+1) matrices M[i, r, m] = r-th derivative of 𝒴_m at node i.
    """
    if n > WRONSKIAN_ORDER_CAP:
        raise OrderCapExceeded(f"numerical Wronskians are capped at n={WRONSKIAN_ORDER_CAP}, got {n}")
    jets = [basis_jet(table, m, n, conjugate=tilde).values for m in range(n + 1)]
    return np.transpose(np.array(jets), (2, 1, 0))


def wronskian_numeric(table, n, index=None, tilde=False):
    """
    Determinant of the 𝒴 (or 𝒴̃) derivative matrix.

    Returns a scalar at one node, or samples at all nodes when index is None.
    """
    determinants = np.linalg.det(wronskian_matrices(table, n, tilde))
    return determinants if index is None else determinants[index]


def wronskian_diagonal_residual(table, n, tilde=False):
    """
    At x0 the derivative matrix is lower triangular with diagonal m! Φ(x0)
    (m odd) or m! (m even); tilde uses 1/Φ. Returns (diagonal, upper) errors.
    """
    x0 = table.x0_index
    matrix = wronskian_matrices(table, n, tilde)[x0]
    phi0 = table.phi.values[x0]
    odd_factor = 1.0 / phi0 if tilde else phi0
    expected = np.array([math.factorial(m) * (odd_factor if m % 2 else 1.0) for m in range(n + 1)])
    diagonal = float(np.max(np.abs(np.diag(matrix) - expected)))
    upper = float(np.max(np.abs(np.triu(matrix, 1)))) if n > 0 else 0.0
    return diagonal, upper


def fundamental_set_residual(table, n):
    """
    Max |operator(member)| over both fundamental sets of order n.

    n odd:  D^(n+1) kills 𝒴_0..𝒴_n and D̃^(n+1) kills 𝒴̃_0..𝒴̃_n.
    n even: D^(n+1) kills 𝒴̃_0..𝒴̃_n and D̃^(n+1) kills 𝒴_0..𝒴_n.
    """
    if n > FUNDAMENTAL_ORDER_CAP:
        raise OrderCapExceeded(f"fundamental sets are checked up to n={FUNDAMENTAL_ORDER_CAP}, got {n}")
    worst = 0.0
    for operator_tilde in (False, True):
        conjugate = operator_tilde if n % 2 else not operator_tilde
        for m in range(n + 1):
            jet = basis_jet(table, m, n + 1, conjugate=conjugate)
            image = apply_phi_derivative(jet, table.phi, n + 1, tilde=operator_tilde)[0]
            worst = max(worst, float(np.max(np.abs(image))))
    return worst


def particular_solution(table, h, n, tilde=False):
    """
    Cauchy-function solution of D^(n+1) y = h (or D̃^(n+1) y = h when tilde).

    y(x) = (1/n!) ∫ X̃^(n)(ξ,x) h(ξ)/Φ(ξ) dξ, and with Φ -> 1/Φ for the tilde
    equation. The returned jet comes from splitting the kernel into
    products of rows based at x0, so the operator can be applied exactly.

    Parameters:
    -----------
    table : PowerTable
        Φ and rows up to order n
    h : SampledFunction
        Right-hand side, with a jet of order n (or finite differences)
    n : int
        Equation order minus one, at most 6
    tilde : bool
        Solve the D̃ equation

    Returns:
    --------
    SampledFunction : y_p with a jet of order n+1
    """
    if n > FUNDAMENTAL_ORDER_CAP:
        raise OrderCapExceeded(f"particular solutions are supported up to n={FUNDAMENTAL_ORDER_CAP}, got {n}")
    if n > table.order:
        raise InsufficientOrder(f"order {n} exceeds table order {table.order}", n)
    require_same_grid(h.grid, table.grid)
    grid, x0 = table.grid, table.x0_index
    phi = table.phi.values
    weight = phi if tilde else 1.0 / phi
    kernel = two_point_powers(table, n, tilde=not tilde)
    integrand = kernel.T * (weight * h.values)[None, :]
    values = np.diag(integrate_from(integrand, grid, x0, axis=-1)) / math.factorial(n)

    # kernel(ξ,x) = Σ_k C(n,k) (-1)^k 𝒴_k(x0,ξ) B_{n-k}(x0,x)
    phi_jet = table.phi.derivatives(n)
    weight_jet = phi_jet if tilde else phi_jet.reciprocal()
    h_jet = h.derivatives(n)
    total = Jet.constant(0.0, n + 1, grid.size)
    for k in range(n + 1):
        inner = basis_jet(table, k, n, conjugate=tilde) * weight_jet * h_jet
        primitive = integrate_from(inner[0], grid, x0)
        inner_jet = Jet(np.vstack([primitive, inner.values]))
        outer_is_tilde = (k % 2 == 0) != tilde
        outer = power_jet(table, n - k, n + 1, tilde=outer_is_tilde)
        total = total + (math.comb(n, k) * (-1) ** k) * (outer * inner_jet)
    jet = total / math.factorial(n)
    return SampledFunction(grid, values, jet, name=f"y_p[n={n}]")


def particular_solution_residual(table, h, n, tilde=False):
    """max |D^(n+1) y_p - h| relative to max(1, |h|)."""
    solution = particular_solution(table, h, n, tilde)
    image = apply_phi_derivative(solution.jet, table.phi, n + 1, tilde=tilde)[0]
    return float(np.max(np.abs(image - h.values))) / max(1.0, h.sup_norm())


@dataclass(frozen=True, eq=False)
class DerivativeExpansion:
    """
    D^(n) f = Σ_k a[k] f^(k) and D̃^(n) f = Σ_k a_tilde[k] f^(k), per node.
    """
    n: int
    a: np.ndarray
    a_tilde: np.ndarray


def _monic_coefficients(table, n, conjugate):
    """
    Coefficients of L_n f = 𝒲[𝒴_0..𝒴_{n-1}, f] / 𝒲_{n-1} by cofactor expansion.
    """
    jets = np.array([basis_jet(table, m, n, conjugate=conjugate).values for m in range(n)])
    # frame[i, r, m]: r-th derivative of basis member m at node i
    frame = np.transpose(jets, (2, 1, 0))
    leading = frame[:, :n, :]
    condition = np.linalg.cond(leading)
    if np.max(condition) > CONDITION_LIMIT:
        raise ConditioningFailure(f"Wronskian matrix condition {np.max(condition):.3e} exceeds {CONDITION_LIMIT:.0e}")
    denominator = np.linalg.det(leading)
    coefficients = np.zeros((n + 1, table.grid.size), dtype=complex)
    for r in range(n + 1):
        minor = np.delete(frame, r, axis=1)
        coefficients[r] = (-1) ** (r + n) * np.linalg.det(minor) / denominator
    return coefficients


def derivative_expansion_coefficients(table, n):
    """
    Ordinary-derivative coefficients of D^(n) and D̃^(n) for n in {2, 3}.

    D^(n) = L_n (n even), Φ L̃_n (n odd); D̃^(n) = L̃_n (n even), L_n/Φ (n odd),
    where L is built on 𝒴 and L̃ on 𝒴̃.
    """
    if n not in (2, 3):
        raise OrderCapExceeded(f"derivative expansion is implemented for n in (2, 3), got {n}")
    require_real_phi(table.phi)
    if np.any(table.phi.values.real <= 0):
        raise PositivePhiRequired("derivative expansion needs a positive Φ")
    plain = _monic_coefficients(table, n, conjugate=False)
    conjugate = _monic_coefficients(table, n, conjugate=True)
    phi = table.phi.values
    if n % 2 == 0:
        a, a_tilde = plain, conjugate
    else:
        a, a_tilde = phi * conjugate, plain / phi
    return DerivativeExpansion(n, a, a_tilde)


def smooth_family(grid, order):
    """Jets of x, x², x³ and eˣ used to test the expansion."""
    nodes = grid.nodes
    return {
        "x": Jet.from_polynomial([0.0, 1.0], nodes, order),
        "x^2": Jet.from_polynomial([0.0, 0.0, 1.0], nodes, order),
        "x^3": Jet.from_polynomial([0.0, 0.0, 0.0, 1.0], nodes, order),
        "exp": Jet(np.tile(np.exp(nodes), (order + 1, 1))),
    }


def expansion_residual(table, expansion):
    """
    Relative mismatch between direct alternating application and the
    expanded form, over the smooth family and both operators.
    """
    n = expansion.n
    worst = 0.0
    for jet in smooth_family(table.grid, n).values():
        for tilde, coefficients in ((False, expansion.a), (True, expansion.a_tilde)):
            direct = apply_phi_derivative(jet, table.phi, n, tilde=tilde)[0]
            expanded = sum(coefficients[k] * jet[k] for k in range(n + 1))
            scale = max(1.0, float(np.max(np.abs(direct))))
            worst = max(worst, float(np.max(np.abs(direct - expanded))) / scale)
    return worst
