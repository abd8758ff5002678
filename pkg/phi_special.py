"""
Φ-generalized trigonometric and hyperbolic functions.
Partial sums of the power rows with a truncation certified by the
c^j/(2j)! bound, plus the Pythagorean and derivative identity checks.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from errors import InsufficientOrder, ToleranceTooTight
from gen_powers import conjugate_table, convergence_constant
from phi_calculus import power_row_derivative
from utils import complex_columns

logger = logging.getLogger(__name__)

EPSILON = 1e-10
EPSILON_FLOOR = 1e-15
MAX_TRUNCATION = 80
LOG_FLOAT_MAX = 709.0

TRIG_NAMES = ("C", "Ct", "S", "St", "Ch", "Cht", "Sh", "Sht")


def _log_term(c, j, offset=0):
    return j * math.log(c) - math.lgamma(2 * j + 1 + offset)


def trig_tail_bound(c, length, inverse_max, K):
    """
    Bound on Σ_{j>K} c^j/(2j)! * (1 + (b-a) max|1/Φ|) in closed form.

    Terms grow while (2j+1)(2j+2) <= c and shrink geometrically after, so
    the sum is bounded by the peak term and a geometric tail.
    """
    start = K + 1
    ratio = c / ((2 * start + 1) * (2 * start + 2))
    if ratio < 1.0:
        log_total = _log_term(c, start) - math.log1p(-ratio)
    else:
        # terms up to `settle` are at most the peak, later ones halve at least
        center = math.floor(math.sqrt(c) / 2)
        peak = max(_log_term(c, j) for j in range(max(start, center - 1), center + 3))
        settle = math.ceil(math.sqrt(2.0 * c) / 2)
        log_total = peak + math.log(settle - start + 2)
    log_total += math.log1p(length * inverse_max)
    return math.exp(log_total) if log_total < LOG_FLOAT_MAX else math.inf


def choose_truncation(c, length, inverse_max, epsilon=EPSILON):
    """
    Smallest K whose tail bound is at most epsilon.

    Returns:
    --------
    tuple : (K, tail_bound)
    """
    if epsilon < EPSILON_FLOOR:
        raise ToleranceTooTight(f"epsilon={epsilon:.1e} is below the double-precision floor {EPSILON_FLOOR:.0e}")
    for K in range(MAX_TRUNCATION + 1):
        tail = trig_tail_bound(c, length, inverse_max, K)
        if tail <= epsilon:
            return K, tail
    raise ToleranceTooTight(f"no truncation up to K={MAX_TRUNCATION} reaches epsilon={epsilon:.1e} for c={c:.3g}")


def required_trig_order(phi, epsilon=EPSILON):
    """Table order 2K+1 needed to build trig sets for Φ at this epsilon."""
    c, _, inverse_max = convergence_constant(phi)
    K, _ = choose_truncation(c, phi.grid.length, inverse_max, epsilon)
    return 2 * K + 1


@dataclass(frozen=True, eq=False)
class PhiTrigSet:
    """
    Partial sums j = 0..K of the eight Φ-trigonometric series.
    """
    table: object
    K: int
    C: np.ndarray
    Ct: np.ndarray
    S: np.ndarray
    St: np.ndarray
    Ch: np.ndarray
    Cht: np.ndarray
    Sh: np.ndarray
    Sht: np.ndarray
    tail_bound: float

    def arrays(self):
        return {name: getattr(self, name) for name in TRIG_NAMES}


def _series(rows, K, parity, alternating):
    total = np.zeros(rows.shape[1], dtype=complex)
    for j in range(K + 1):
        n = 2 * j + parity
        sign = (-1) ** j if alternating else 1
        total += sign / math.factorial(n) * rows[n]
    return total


def build_trig(table, epsilon=EPSILON, K=None):
    """
    Build C, C̃, S, S̃, Ch, C̃h, Sh, S̃h from a power table.

    Parameters:
    -----------
    table : PowerTable
        Rows up to order 2K+1
    epsilon : float
        Requested tail bound
    K : int, optional
        Force a truncation; the reported tail_bound then need not meet epsilon

    Returns:
    --------
    PhiTrigSet : Partial sums with their certified tail bound
    """
    length = table.grid.length
    if K is None:
        K, tail = choose_truncation(table.c_bound, length, table.inverse_max, epsilon)
    else:
        tail = trig_tail_bound(table.c_bound, length, table.inverse_max, K)
    if table.order < 2 * K + 1:
        raise InsufficientOrder(f"trig series with K={K} needs more power rows than order {table.order}", 2 * K + 1)
    logger.debug("trig truncation K=%d, tail bound %.3e (epsilon %.1e)", K, tail, epsilon)
    X, Xt = table.X, table.Xt
    return PhiTrigSet(
        table=table,
        K=K,
        C=_series(X, K, 0, True),
        Ct=_series(Xt, K, 0, True),
        S=_series(X, K, 1, True),
        St=_series(Xt, K, 1, True),
        Ch=_series(X, K, 0, False),
        Cht=_series(Xt, K, 0, False),
        Sh=_series(X, K, 1, False),
        Sht=_series(Xt, K, 1, False),
        tail_bound=tail,
    )


def pythagorean_residuals(trig):
    """
    max |C C̃ + S S̃ - 1| and max |Ch C̃h - Sh S̃h - 1|.
    """
    elliptic = trig.C * trig.Ct + trig.S * trig.St - 1.0
    hyperbolic = trig.Ch * trig.Cht - trig.Sh * trig.Sht - 1.0
    return {
        "elliptic": float(np.max(np.abs(elliptic))),
        "hyperbolic": float(np.max(np.abs(hyperbolic))),
    }


def conjugation_residual(trig):
    """
    The trig set of 1/Φ against this one with tilde and plain arrays swapped,
    relative to the largest array.
    """
    swapped = build_trig(conjugate_table(trig.table), K=trig.K)
    arrays = trig.arrays()
    worst = 0.0
    for plain in ("C", "S", "Ch", "Sh"):
        tilde = plain + "t"
        worst = max(worst, float(np.max(np.abs(getattr(swapped, plain) - arrays[tilde]))),
                    float(np.max(np.abs(getattr(swapped, tilde) - arrays[plain]))))
    scale = max(1.0, *(float(np.max(np.abs(values))) for values in arrays.values()))
    return worst / scale


def truncation_excess(table, K):
    """
    Largest rise of the Pythagorean residuals when the truncation grows by one,
    over truncations up to K whose tail bound is already below one.
    """
    c, length, inverse_max = table.c_bound, table.grid.length, table.inverse_max
    start = next((k for k in range(K + 1) if trig_tail_bound(c, length, inverse_max, k) <= 1.0), K)
    residuals = [max(pythagorean_residuals(build_trig(table, K=k)).values()) for k in range(start, K + 1)]
    return max([0.0] + [later - earlier for earlier, later in zip(residuals, residuals[1:])])


def _series_derivative(table, K, parity, alternating, tilde):
    total = np.zeros(table.grid.size, dtype=complex)
    for j in range(K + 1):
        n = 2 * j + parity
        sign = (-1) ** j if alternating else 1
        total += sign / math.factorial(n) * power_row_derivative(table, n, tilde)
    return total


def dropped_term_bound(trig):
    """
    Bound on the first odd and even terms beyond K; derivative residuals
    are partial-sum mismatches of exactly this size.
    """
    c, K = trig.table.c_bound, trig.K
    length = trig.table.grid.length
    odd_scale = max(trig.table.inverse_max, trig.table.phi_max)
    return length * odd_scale * math.exp(_log_term(c, K, 1)) + math.exp(_log_term(c, K + 1))


def trig_derivative_check(trig):
    """
    Residuals of DS = C, D̃C = -S, D Sh = Ch, D̃ Ch = Sh and their tilde
    companions (D̃S̃ = C̃, DC̃ = -S̃, D̃S̃h = C̃h, DC̃h = S̃h).

    Derivatives of the rows come from the recursion, never from differencing.

    Returns:
    --------
    dict : Max absolute residual per relation
    """
    table, K = trig.table, trig.K
    phi = table.phi.values
    derivative = {}
    for name, parity, alternating, tilde in (
        ("C", 0, True, False), ("S", 1, True, False), ("Ch", 0, False, False), ("Sh", 1, False, False),
        ("Ct", 0, True, True), ("St", 1, True, True), ("Cht", 0, False, True), ("Sht", 1, False, True),
    ):
        derivative[name] = _series_derivative(table, K, parity, alternating, tilde)

    def worst(values):
        return float(np.max(np.abs(values)))

    return {
        "DS-C": worst(phi * derivative["S"] - trig.C),
        "DtC+S": worst(derivative["C"] / phi + trig.S),
        "DSh-Ch": worst(phi * derivative["Sh"] - trig.Ch),
        "DtCh-Sh": worst(derivative["Ch"] / phi - trig.Sh),
        "DtSt-Ct": worst(derivative["St"] / phi - trig.Ct),
        "DCt+St": worst(phi * derivative["Ct"] + trig.St),
        "DtSht-Cht": worst(derivative["Sht"] / phi - trig.Cht),
        "DCht-Sht": worst(phi * derivative["Cht"] - trig.Sht),
    }


def trig_frame(trig):
    """node, then C, Ct, S, St, Ch, Cht, Sh, Sht as (re, im) pairs."""
    columns = {"node": trig.table.grid.nodes}
    for name, values in trig.arrays().items():
        columns.update(complex_columns(name, values))
    return pd.DataFrame(columns)


def phase_space_frame(trig):
    """Parametric pairs (C C̃, S S̃) and (Ch C̃h, Sh S̃h) per node."""
    columns = {"node": trig.table.grid.nodes}
    columns.update(complex_columns("CCt", trig.C * trig.Ct))
    columns.update(complex_columns("SSt", trig.S * trig.St))
    columns.update(complex_columns("ChCht", trig.Ch * trig.Cht))
    columns.update(complex_columns("ShSht", trig.Sh * trig.Sht))
    return pd.DataFrame(columns)
