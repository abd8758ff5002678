"""
Numerical substrate for the Φ-power library.
Handles uniform grids, sampled functions with derivative jets, cumulative
quadrature and the PhiSpec vocabulary of builtin and tabulated functions.
"""

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from numpy.polynomial import Polynomial

from errors import (
    GridError,
    GridMismatch,
    JetOrderExceeded,
    NonvanishingViolation,
    TableMismatch,
)

logger = logging.getLogger(__name__)

VANISH_TOLERANCE = 1e-12
JET_ORDER = 10
TABLE_JET_ORDER = 4
TABLE_FD_ACCURACY = 4
FUNCTION_FD_ACCURACY = 6
DEFAULT_SCHEME = "composite6"

# Cumulative 6-point rule: two start-up rows, a symmetric interior stencil,
# and the start-up rows mirrored at the right end.
_C6_INTERIOR = np.array([11.0, -93.0, 802.0, 802.0, -93.0, 11.0]) / 1440.0
_C6_BOUNDARY = np.array([
    [475.0, 1427.0, -798.0, 482.0, -173.0, 27.0],
    [-27.0, 637.0, 1022.0, -258.0, 77.0, -11.0],
]) / 1440.0

MIN_NODES = {"simpson": 5, "composite6": 7}


@dataclass(frozen=True, eq=False)
class Grid:
    """
    Uniform grid on [a, b] with an odd number of nodes and a base node x0.

    Parameters:
    -----------
    a, b : float
        Interval endpoints, a < b
    nodes : np.ndarray
        Strictly increasing, uniformly spaced nodes from a to b
    x0_index : int
        Index of the distinguished base node
    quadrature : str
        Cumulative rule used by every integral on this grid
    """
    a: float
    b: float
    nodes: np.ndarray
    x0_index: int
    quadrature: str = DEFAULT_SCHEME

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if not self.a < self.b:
            raise GridError(f"need a < b, got a={self.a}, b={self.b}")
        if self.quadrature not in MIN_NODES:
            raise GridError(f"unknown quadrature scheme '{self.quadrature}', expected one of {sorted(MIN_NODES)}")
        count = nodes.size
        if count < MIN_NODES[self.quadrature] or count % 2 == 0:
            raise GridError(
                f"node count must be odd and >= {MIN_NODES[self.quadrature]} for {self.quadrature}, got {count}"
            )
        if nodes[0] != self.a or nodes[-1] != self.b:
            raise GridError("first and last nodes must equal a and b")
        steps = np.diff(nodes)
        if np.any(steps <= 0):
            raise GridError("nodes must be strictly increasing")
        h = (self.b - self.a) / (count - 1)
        if np.max(np.abs(steps - h)) > 1e-12 * max(abs(self.a), abs(self.b), h):
            raise GridError("nodes are not uniformly spaced")
        if not 0 <= self.x0_index < count:
            raise GridError(f"x0_index {self.x0_index} outside 0..{count - 1}")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "x0_index", int(self.x0_index))

    @classmethod
    def uniform(cls, a, b, count, x0=None, quadrature=DEFAULT_SCHEME):
        """
        Build a uniform grid; x0 defaults to a and must land on a node.
        """
        a, b = float(a), float(b)
        if count < 2:
            raise GridError(f"node count must be odd and >= {MIN_NODES[quadrature]}, got {count}")
        nodes = np.linspace(a, b, int(count))
        if x0 is None:
            x0_index = 0
        else:
            h = (b - a) / (count - 1)
            x0_index = int(round((float(x0) - a) / h))
            if not 0 <= x0_index < count or abs(nodes[x0_index] - x0) > 1e-12 * max(1.0, abs(x0), abs(b - a)):
                raise GridError(f"x0={x0} is not a grid node")
        return cls(a, b, nodes, x0_index, quadrature)

    @property
    def size(self):
        return self.nodes.size

    @property
    def h(self):
        return (self.b - self.a) / (self.size - 1)

    @property
    def x0(self):
        return float(self.nodes[self.x0_index])

    @property
    def length(self):
        return self.b - self.a

    def rebased(self, index):
        """Same nodes, different base node."""
        return Grid(self.a, self.b, self.nodes, index, self.quadrature)

    def index_of(self, x):
        index = int(round((float(x) - self.a) / self.h))
        if not 0 <= index < self.size or abs(self.nodes[index] - x) > 1e-12 * max(1.0, abs(x)):
            raise GridError(f"x={x} is not a grid node")
        return index

    def matches(self, other):
        return self is other or (
            self.size == other.size
            and self.quadrature == other.quadrature
            and np.array_equal(self.nodes, other.nodes)
        )


def require_same_grid(*grids):
    first = grids[0]
    for other in grids[1:]:
        if not first.matches(other):
            raise GridMismatch("objects live on different grids")


class Jet:
    """
    Derivatives of orders 0..J of a function at every grid node.

    values[k, i] holds the k-th derivative at node i. Products follow the
    Leibniz rule, so jets built from exact builtins stay exact.
    """

    def __init__(self, values):
        values = np.array(values, dtype=complex, ndmin=2)
        values.setflags(write=False)
        self.values = values

    @property
    def order(self):
        return self.values.shape[0] - 1

    @property
    def size(self):
        return self.values.shape[1]

    @classmethod
    def constant(cls, value, order, size):
        values = np.zeros((order + 1, size), dtype=complex)
        values[0] = value
        return cls(values)

    @classmethod
    def from_polynomial(cls, coefficients, nodes, order):
        poly = Polynomial(np.asarray(coefficients, dtype=complex))
        rows = [poly(nodes)]
        for k in range(1, order + 1):
            rows.append(poly.deriv(k)(nodes) if k <= poly.degree() else np.zeros(len(nodes)))
        return cls(np.array(rows, dtype=complex))

    def __getitem__(self, k):
        if k > self.order:
            raise JetOrderExceeded(f"derivative of order {k} requested from a jet of order {self.order}")
        return self.values[k]

    def truncate(self, order):
        if order > self.order:
            raise JetOrderExceeded(f"cannot extend a jet of order {self.order} to {order}")
        return Jet(self.values[: order + 1])

    def derivative(self):
        if self.order < 1:
            raise JetOrderExceeded("jet of order 0 has no derivative")
        return Jet(self.values[1:])

    def _coerce(self, other):
        if isinstance(other, Jet):
            order = min(self.order, other.order)
            return self.values[: order + 1], other.values[: order + 1]
        other = np.broadcast_to(np.asarray(other, dtype=complex), self.values.shape[1:])
        return self.values, np.vstack([other, np.zeros((self.order, self.size), dtype=complex)])

    def __add__(self, other):
        left, right = self._coerce(other)
        return Jet(left + right)

    __radd__ = __add__

    def __sub__(self, other):
        left, right = self._coerce(other)
        return Jet(left - right)

    def __rsub__(self, other):
        left, right = self._coerce(other)
        return Jet(right - left)

    def __neg__(self):
        return Jet(-self.values)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            if np.ndim(other) == 0:
                return Jet(self.values * other)
            other = Jet(np.vstack([np.asarray(other, dtype=complex),
                                   np.zeros((self.order, self.size), dtype=complex)]))
        order = min(self.order, other.order)
        a, b = self.values, other.values
        out = np.zeros((order + 1, self.size), dtype=complex)
        for k in range(order + 1):
            for i in range(k + 1):
                out[k] += math.comb(k, i) * a[i] * b[k - i]
        return Jet(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return Jet(self.values / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def reciprocal(self):
        f = self.values
        g = np.zeros_like(f)
        g[0] = 1.0 / f[0]
        for k in range(1, self.order + 1):
            acc = np.zeros(self.size, dtype=complex)
            for i in range(1, k + 1):
                acc += math.comb(k, i) * f[i] * g[k - i]
            g[k] = -acc * g[0]
        return Jet(g)

    def sqrt(self):
        f = self.values
        g = np.zeros_like(f)
        g[0] = np.sqrt(f[0])
        for k in range(1, self.order + 1):
            acc = f[k].copy()
            for i in range(1, k):
                acc -= math.comb(k, i) * g[i] * g[k - i]
            g[k] = acc / (2.0 * g[0])
        return Jet(g)

    def exp(self):
        u = self.values
        g = np.zeros_like(u)
        g[0] = np.exp(u[0])
        for k in range(1, self.order + 1):
            for i in range(k):
                g[k] += math.comb(k - 1, i) * u[i + 1] * g[k - 1 - i]
        return Jet(g)


def finite_difference_weights(offsets, k):
    """
    Stencil weights for the k-th derivative at offset 0 (unit spacing).

    Parameters:
    -----------
    offsets : array-like
        Integer node offsets of the stencil
    k : int
        Derivative order

    Returns:
    --------
    np.ndarray : weights w with f^(k) ~ sum(w * f[offsets]) / h**k
    """
    offsets = np.asarray(offsets, dtype=float)
    powers = np.arange(offsets.size)
    scale = np.array([math.factorial(p) for p in powers], dtype=float)
    vandermonde = offsets[None, :] ** powers[:, None] / scale[:, None]
    rhs = np.zeros(offsets.size)
    rhs[k] = 1.0
    return np.linalg.solve(vandermonde, rhs)


def finite_difference_jet(values, h, order, accuracy=TABLE_FD_ACCURACY):
    """
    Jet from sampled values by polynomial-fit stencils.

    Interior nodes use central stencils, the first and last few nodes
    one-sided stencils of the same width, so every node gets at least the
    requested accuracy order.
    """
    values = np.asarray(values, dtype=complex)
    size = values.size
    rows = [values]
    for k in range(1, order + 1):
        width = k + accuracy
        if width % 2 == 0:
            width += 1
        if width > size:
            raise JetOrderExceeded(f"{size} nodes cannot support a derivative of order {k} at accuracy {accuracy}")
        half = width // 2
        deriv = np.zeros(size, dtype=complex)
        central = finite_difference_weights(np.arange(-half, half + 1), k)
        for t, w in enumerate(central):
            deriv[half:size - half] += w * values[t:size - 2 * half + t]
        for i in list(range(half)) + list(range(size - half, size)):
            start = min(max(i - half, 0), size - width)
            weights = finite_difference_weights(np.arange(start, start + width) - i, k)
            deriv[i] = weights @ values[start:start + width]
        rows.append(deriv / h ** k)
    return Jet(np.array(rows))


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """
    Complex samples of a function on a grid, optionally with a derivative jet.
    """
    grid: Grid
    values: np.ndarray
    jet: Jet = None
    name: str = "f"

    def __post_init__(self):
        values = np.array(self.values, dtype=complex)
        if values.shape != (self.grid.size,):
            raise GridError(f"{self.name}: expected {self.grid.size} samples, got shape {values.shape}")
        if self.jet is not None and self.jet.size != self.grid.size:
            raise GridError(f"{self.name}: jet sampled on {self.jet.size} nodes, grid has {self.grid.size}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_jet(cls, grid, jet, name="f"):
        return cls(grid, jet.values[0], jet, name)

    @property
    def derivative(self):
        """First derivative per node: exact when a jet is carried."""
        return self.derivatives(1)[1]

    def derivatives(self, order, accuracy=FUNCTION_FD_ACCURACY):
        """
        Jet of the requested order; falls back to finite differences when the
        carried jet is missing or too short.
        """
        if self.jet is not None and self.jet.order >= order:
            return self.jet.truncate(order)
        logger.debug("%s: finite-difference jet of order %d (accuracy %d)", self.name, order, accuracy)
        return finite_difference_jet(self.values, self.grid.h, order, accuracy)

    def with_values(self, values, jet=None, name=None):
        return SampledFunction(self.grid, values, jet, name or self.name)

    def reciprocal(self):
        jet = self.jet.reciprocal() if self.jet is not None else None
        return SampledFunction(self.grid, 1.0 / self.values, jet, f"1/{self.name}")

    def __mul__(self, other):
        if isinstance(other, SampledFunction):
            require_same_grid(self.grid, other.grid)
            jet = self.jet * other.jet if self.jet is not None and other.jet is not None else None
            return SampledFunction(self.grid, self.values * other.values, jet, f"{self.name}*{other.name}")
        jet = self.jet * other if self.jet is not None else None
        return SampledFunction(self.grid, self.values * other, jet, self.name)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def is_real(self, tolerance=0.0):
        return float(np.max(np.abs(self.values.imag))) <= tolerance * max(1.0, self.sup_norm())

    def require_nonvanishing(self, tolerance=VANISH_TOLERANCE, error=NonvanishingViolation):
        magnitude = np.abs(self.values)
        bad = np.flatnonzero(magnitude <= tolerance)
        if bad.size:
            i = bad[0]
            raise error(self.name, i, self.grid.nodes[i], self.values[i])
        return self


def as_complex(value):
    """Accept numbers or [re, im] pairs (the JSON encoding of a complex)."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError(f"complex values are [re, im] pairs, got {value!r}")
        return complex(float(value[0]), float(value[1]))
    return complex(value)


@dataclass(frozen=True)
class PhiSpec:
    """
    Recipe for a sampled function.

    Builtin kinds carry exact derivative jets; 'table' reads a CSV with
    columns node, value_re[, value_im] and differentiates numerically.
    """
    kind: str
    params: dict = field(default_factory=dict)

    KINDS = {
        "constant": {"value"},
        "polynomial": {"coefficients"},
        "shifted_square": set(),
        "sqrt_cosh": set(),
        "gaussian_ground": set(),
        "gaussian": set(),
        "cosh": set(),
        "exp": set(),
        "sin": set(),
        "cos": set(),
        "table": {"path", "jet_order"},
    }

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise GridError(f"unknown function kind '{self.kind}', expected one of {sorted(self.KINDS)}")
        unknown = set(self.params) - self.KINDS[self.kind]
        if unknown:
            raise GridError(f"kind '{self.kind}' does not accept {sorted(unknown)}")
        if self.kind == "table" and "path" not in self.params:
            raise GridError("kind 'table' needs a 'path'")
        if self.kind == "polynomial" and not self.params.get("coefficients"):
            raise GridError("kind 'polynomial' needs a non-empty 'coefficients' list")

    @classmethod
    def from_dict(cls, spec):
        spec = dict(spec)
        if "kind" not in spec:
            raise GridError("function spec needs a 'kind'")
        kind = spec.pop("kind")
        return cls(kind, spec)

    @classmethod
    def constant(cls, value=1.0):
        return cls("constant", {"value": value})

    @classmethod
    def polynomial(cls, coefficients):
        return cls("polynomial", {"coefficients": list(coefficients)})


def _builtin_jet(spec, nodes, order):
    kind = spec.kind
    if kind == "constant":
        return Jet.constant(as_complex(spec.params.get("value", 1.0)), order, nodes.size)
    if kind == "polynomial":
        coefficients = [as_complex(c) for c in spec.params["coefficients"]]
        return Jet.from_polynomial(coefficients, nodes, order)
    if kind == "shifted_square":
        return Jet.from_polynomial([1.0, 2.0, 1.0], nodes, order)
    if kind == "gaussian":
        return Jet.from_polynomial([0.0, 0.0, -0.5], nodes, order).exp()
    if kind == "gaussian_ground":
        return Jet.from_polynomial([0.0, 0.0, -1.0], nodes, order).exp()
    if kind == "exp":
        return Jet(np.tile(np.exp(nodes), (order + 1, 1)))
    if kind in ("sin", "cos"):
        shift = 0.0 if kind == "sin" else np.pi / 2
        return Jet([np.sin(nodes + shift + k * np.pi / 2) for k in range(order + 1)])
    cosh = Jet([np.cosh(nodes) if k % 2 == 0 else np.sinh(nodes) for k in range(order + 1)])
    if kind == "cosh":
        return cosh
    return cosh.sqrt()


def read_table(path, grid):
    """
    Load tabulated samples and check they sit on the grid nodes.

    Returns:
    --------
    np.ndarray : complex samples, one per node
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Table file not found: {path}")
    frame = pd.read_csv(path)
    missing = {"node", "value_re"} - set(frame.columns)
    if missing:
        raise TableMismatch(f"{path}: missing columns {sorted(missing)}")
    nodes = frame["node"].to_numpy(dtype=float)
    if nodes.size != grid.size:
        raise TableMismatch(f"{path}: {nodes.size} rows for a grid of {grid.size} nodes")
    scale = max(1.0, float(np.max(np.abs(grid.nodes))))
    worst = float(np.max(np.abs(nodes - grid.nodes)))
    if worst > 1e-12 * scale:
        raise TableMismatch(f"{path}: nodes differ from the grid by up to {worst:.3e}")
    values = frame["value_re"].to_numpy(dtype=float).astype(complex)
    if "value_im" in frame.columns:
        values = values + 1j * frame["value_im"].to_numpy(dtype=float)
    return values


def materialize_function(spec, grid, name=None, jet_order=JET_ORDER):
    """
    Sample a PhiSpec on a grid without the nonvanishing check.

    Used for coefficients that may vanish (q, V, Taylor targets).
    """
    name = name or spec.kind
    if spec.kind == "table":
        values = read_table(spec.params["path"], grid)
        order = int(spec.params.get("jet_order", TABLE_JET_ORDER))
        jet = finite_difference_jet(values, grid.h, order, TABLE_FD_ACCURACY)
    else:
        jet = _builtin_jet(spec, grid.nodes, jet_order)
    logger.debug("materialized %s (%s) with jet order %d", name, spec.kind, jet.order)
    return SampledFunction.from_jet(grid, jet, name)


def materialize_phi(spec, grid, vanish_tolerance=VANISH_TOLERANCE, jet_order=JET_ORDER):
    """
    Sample Φ and check it has no zero on the grid.

    Parameters:
    -----------
    spec : PhiSpec
        Builtin kind or table
    grid : Grid
        Target grid
    vanish_tolerance : float
        |Φ| at or below this counts as a zero

    Returns:
    --------
    SampledFunction : Φ with its derivative jet
    """
    phi = materialize_function(spec, grid, name="phi", jet_order=jet_order)
    return phi.require_nonvanishing(vanish_tolerance)


def running_integral(values, grid, axis=-1):
    """
    Integral from node 0 to every node along one axis, with the grid's rule.
    """
    y = np.moveaxis(np.asarray(values), axis, -1)
    dtype = np.result_type(y.dtype, float)
    y = y.astype(dtype, copy=False)
    size = y.shape[-1]
    if size != grid.size:
        raise GridMismatch(f"axis of length {size} does not match grid of {grid.size} nodes")
    h = grid.h
    total = np.zeros(y.shape, dtype=dtype)
    if grid.quadrature == "simpson":
        left, mid, right = y[..., 0:-2:2], y[..., 1:-1:2], y[..., 2::2]
        total[..., 2::2] = np.cumsum(h / 3.0 * (left + 4.0 * mid + right), axis=-1)
        # odd nodes: quadratic through the panel, integrated over its first half
        total[..., 1::2] = total[..., 0:-1:2] + h / 12.0 * (5.0 * left + 8.0 * mid - right)
    else:
        steps = np.zeros(y.shape[:-1] + (size - 1,), dtype=dtype)
        steps[..., :2] = y[..., :6] @ _C6_BOUNDARY.T
        for t, c in enumerate(_C6_INTERIOR):
            steps[..., 2:size - 3] += c * y[..., t:size - 5 + t]
        steps[..., size - 3:] = (y[..., ::-1][..., :6] @ _C6_BOUNDARY.T)[..., ::-1]
        total[..., 1:] = np.cumsum(h * steps, axis=-1)
    return np.moveaxis(total, -1, axis)


def integrate_from(values, grid, from_index, axis=-1):
    """Signed integral from nodes[from_index] to every node."""
    total = running_integral(values, grid, axis)
    return total - np.take(total, [from_index], axis=axis)


def cumulative_integral(f, from_index=None):
    """
    F[i] = integral of f from nodes[from_index] to nodes[i], both directions.

    Parameters:
    -----------
    f : SampledFunction
        Integrand
    from_index : int, optional
        Base node, defaults to the grid's x0

    Returns:
    --------
    SampledFunction : F, whose jet is f's jet shifted up by one order
    """
    grid = f.grid
    if from_index is None:
        from_index = grid.x0_index
    values = integrate_from(f.values, grid, from_index)
    jet = Jet(np.vstack([values, f.jet.values])) if f.jet is not None else None
    return SampledFunction(grid, values, jet, f"int({f.name})")


def quadrature_matrix(grid):
    """
    Dense matrix A with running_integral(y)[j] = (A @ y)[j].
    """
    return running_integral(np.eye(grid.size), grid).T


def quadrature_checks(grid, seed=0):
    """
    Linearity, direction and order checks of the grid's cumulative rule.

    Integrands live on t = (x - a)/(b - a) so their size does not depend on
    the interval. The order check compares the closed-form error of cos on
    65 and 129 nodes of the same interval and scheme.

    Returns:
    --------
    dict : 'linearity' (relative), 'direction' and 'direction_limit'
        (worst pair error and twice the worst error from x0, plus round-off), 'order_ratio'
    """
    rng = np.random.default_rng(seed)
    t = (grid.nodes - grid.a) / grid.length
    f = np.cos(3.0 * t) + 1j * t ** 2
    g = np.exp(-t)
    alpha, beta = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    base = grid.x0_index
    combined = integrate_from(alpha * f + beta * g, grid, base)
    separate = alpha * integrate_from(f, grid, base) + beta * integrate_from(g, grid, base)
    linearity = float(np.max(np.abs(combined - separate))) / max(1.0, float(np.max(np.abs(separate))))

    omega = 4.0 * np.pi / grid.length
    exact = np.sin(omega * (grid.nodes - grid.a)) / omega
    F = integrate_from(np.cos(omega * (grid.nodes - grid.a)), grid, base)
    base_error = float(np.max(np.abs(F - (exact - exact[base]))))
    starts = rng.choice(grid.size, size=min(8, grid.size), replace=False)
    pair_error = max(float(np.max(np.abs((F - F[i]) - (exact - exact[i])))) for i in starts)

    errors = []
    for count in (65, 129):
        coarse = Grid.uniform(grid.a, grid.b, count, None, grid.quadrature)
        phase = omega * (coarse.nodes - grid.a)
        errors.append(float(np.max(np.abs(running_integral(np.cos(phase), coarse) - np.sin(phase) / omega))))
    return {
        "linearity": linearity,
        "direction": pair_error,
        "direction_limit": 2.0 * base_error + 1e-13 * max(1.0, grid.length),
        "order_ratio": errors[0] / max(errors[1], np.finfo(float).tiny),
    }
