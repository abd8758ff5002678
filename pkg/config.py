"""
Run configuration module for the phipowers CLI.
This module loads the JSON config, rejects unknown keys with the line they
appear on, resolves tolerance overrides and builds grids, Φ and problems.
"""

import json
import logging
import os
from dataclasses import dataclass, field, fields, replace

from errors import ConfigError, PhiPowerError
from gen_powers import TOL_IDENTITY
from grid_quadrature import DEFAULT_SCHEME, VANISH_TOLERANCE, Grid, PhiSpec, materialize_function, materialize_phi
from phi_special import EPSILON
from spps_solver import ODE_TOL, RESID_TOL, ROOT_TOL, SERIES_TOL, schrodinger_problem, sturm_liouville_problem

logger = logging.getLogger(__name__)

ENV_PREFIX = "PHIPOWERS_"

BLOCK_KEYS = {
    "interval": {"a", "b"},
    "powers": {"order"},
    "trig": {"epsilon", "K"},
    "taylor": {"order", "function"},
    "problem": {"kind", "potential", "psi0", "p", "q", "r", "u0"},
    "solve": {"lambda", "c1", "c2", "K"},
    "eigen": {"lambda_range", "count", "K", "mesh"},
    "susy": {"psi0", "lambda_range", "n_levels", "K"},
    "volterra": {"psi0", "lambda", "partner"},
}
SCALAR_KEYS = {"grid_size", "x0", "phi", "quadrature", "seed", "tolerances"}
PROBLEM_KEYS = {
    "schrodinger": {"kind", "potential", "psi0"},
    "sturm_liouville": {"kind", "p", "q", "r", "u0"},
}


@dataclass(frozen=True)
class Tolerances:
    """Numerical knobs shared by every subcommand."""
    tol_identity: float = TOL_IDENTITY
    vanish_tolerance: float = VANISH_TOLERANCE
    epsilon: float = EPSILON
    series_tol: float = SERIES_TOL
    ode_tol: float = ODE_TOL
    resid_tol: float = RESID_TOL
    root_tol: float = ROOT_TOL

    @classmethod
    def names(cls):
        return {f.name for f in fields(cls)}


@dataclass(frozen=True)
class RunConfig:
    """
    Validated contents of one config file.

    Parameters:
    -----------
    a, b : float
        Interval
    grid_size : int
        Odd node count
    x0 : float
        Base node, defaults to a
    phi : PhiSpec
        Φ for powers, trig, taylor and verify
    blocks : dict
        Per-subcommand settings, already checked for unknown keys
    """
    a: float
    b: float
    grid_size: int
    x0: float = None
    phi: PhiSpec = field(default_factory=PhiSpec.constant)
    quadrature: str = DEFAULT_SCHEME
    seed: int = 0
    tolerances: Tolerances = field(default_factory=Tolerances)
    blocks: dict = field(default_factory=dict)
    base_dir: str = "."

    def block(self, name):
        return self.blocks.get(name, {})


def _line_of(text, key, within=None):
    """1-based line of the first "key" in the raw JSON, after "within" when given."""
    lines = text.splitlines()
    start = 0
    if within is not None:
        start = next((i for i, line in enumerate(lines) if f'"{within}"' in line), 0)
    needle = f'"{key}"'
    for number, line in enumerate(lines[start:], start=start + 1):
        if needle in line:
            return number
    return None


def _is_int(value, minimum):
    return isinstance(value, int) and not isinstance(value, bool) and value >= minimum


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_complex(value):
    if isinstance(value, list):
        return len(value) == 2 and all(_is_number(part) for part in value)
    return _is_number(value)


def _is_range(value):
    return isinstance(value, list) and len(value) == 2 and all(_is_number(v) for v in value) and value[0] < value[1]


def _natural(minimum):
    return f"an integer >= {minimum}", lambda value: _is_int(value, minimum)


COMPLEX = ("a number or an [re, im] pair", _is_complex)
RANGE = ("a [low, high] pair with low < high", _is_range)
VALUE_RULES = {
    "powers": {"order": _natural(0)},
    "trig": {"epsilon": ("a positive number", lambda value: _is_number(value) and value > 0), "K": _natural(0)},
    "taylor": {"order": _natural(0)},
    "solve": {"lambda": COMPLEX, "c1": COMPLEX, "c2": COMPLEX, "K": _natural(0)},
    "eigen": {"lambda_range": RANGE, "count": _natural(1), "K": _natural(1), "mesh": _natural(2)},
    "susy": {"lambda_range": RANGE, "n_levels": _natural(0), "K": _natural(1)},
    "volterra": {"lambda": COMPLEX, "partner": ("true or false", lambda value: isinstance(value, bool))},
}


def _check_values(text, name, block):
    for key, (expected, accepts) in VALUE_RULES.get(name, {}).items():
        if key in block and not accepts(block[key]):
            raise ConfigError(f"'{name}.{key}' must be {expected}, got {block[key]!r}", _line_of(text, key, name))


def _reject_unknown(text, mapping, allowed, where):
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in {where}", _line_of(text, key))


def _function_spec(text, spec, key, base_dir):
    if not isinstance(spec, dict):
        raise ConfigError(f"'{key}' must be an object with a 'kind'", _line_of(text, key))
    try:
        parsed = PhiSpec.from_dict(spec)
    except PhiPowerError as e:
        raise ConfigError(f"'{key}': {e}", _line_of(text, key)) from e
    if parsed.kind == "table" and not os.path.isabs(parsed.params["path"]):
        params = dict(parsed.params, path=os.path.join(base_dir, parsed.params["path"]))
        parsed = PhiSpec("table", params)
    return parsed


def resolve_tolerances(block=None, environ=None):
    """
    Defaults, then the config 'tolerances' block, then PHIPOWERS_* variables.

    Returns:
    --------
    Tolerances : Resolved values
    """
    environ = os.environ if environ is None else environ
    values = dict(block or {})
    for name in Tolerances.names():
        variable = ENV_PREFIX + name.upper()
        if variable in environ:
            try:
                values[name] = float(environ[variable])
            except ValueError as e:
                raise ConfigError(f"{variable}={environ[variable]!r} is not a number") from e
    resolved = replace(Tolerances(), **{k: float(v) for k, v in values.items()})
    for name in Tolerances.names():
        if not getattr(resolved, name) > 0:
            raise ConfigError(f"tolerance '{name}' must be positive")
    return resolved


def parse_config(text, base_dir=".", environ=None):
    """
    Validate JSON text into a RunConfig.

    Raises:
    -------
    ConfigError : Syntax errors (line and column), unknown keys, bad values
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at column {e.colno}: {e.msg}", e.lineno) from e
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", 1)
    _reject_unknown(text, raw, SCALAR_KEYS | set(BLOCK_KEYS), "config")
    for name, allowed in BLOCK_KEYS.items():
        if name in raw:
            if not isinstance(raw[name], dict):
                raise ConfigError(f"'{name}' must be an object", _line_of(text, name))
            _reject_unknown(text, raw[name], allowed, f"'{name}'")
            _check_values(text, name, raw[name])
    if "tolerances" in raw:
        if not isinstance(raw["tolerances"], dict):
            raise ConfigError("'tolerances' must be an object", _line_of(text, "tolerances"))
        _reject_unknown(text, raw["tolerances"], Tolerances.names(), "'tolerances'")

    for required in ("interval", "grid_size"):
        if required not in raw:
            raise ConfigError(f"missing required key '{required}'")
    interval = raw["interval"]
    if set(interval) != {"a", "b"}:
        raise ConfigError("'interval' needs both 'a' and 'b'", _line_of(text, "interval"))
    grid_size = raw["grid_size"]
    if not isinstance(grid_size, int) or grid_size % 2 == 0:
        raise ConfigError(f"'grid_size' must be an odd integer, got {grid_size!r}", _line_of(text, "grid_size"))
    if not _is_number(interval["a"]) or not _is_number(interval["b"]):
        raise ConfigError("'interval' ends must be numbers", _line_of(text, "interval"))
    if raw.get("x0") is not None and not _is_number(raw["x0"]):
        raise ConfigError(f"'x0' must be a number, got {raw['x0']!r}", _line_of(text, "x0"))
    if not _is_int(raw.get("seed", 0), 0):
        raise ConfigError(f"'seed' must be an integer >= 0, got {raw['seed']!r}", _line_of(text, "seed"))

    blocks = {name: dict(raw[name]) for name in BLOCK_KEYS if name in raw and name != "interval"}
    if "function" in blocks.get("taylor", {}):
        blocks["taylor"]["function"] = _function_spec(text, blocks["taylor"]["function"], "function", base_dir)
    for name in ("susy", "volterra"):
        if "psi0" in blocks.get(name, {}):
            blocks[name]["psi0"] = _function_spec(text, blocks[name]["psi0"], "psi0", base_dir)
    if "problem" in blocks:
        problem = blocks["problem"]
        kind = problem.get("kind")
        if kind not in PROBLEM_KEYS:
            raise ConfigError(f"problem kind must be one of {sorted(PROBLEM_KEYS)}, got {kind!r}", _line_of(text, "kind"))
        if set(problem) != PROBLEM_KEYS[kind]:
            raise ConfigError(f"'{kind}' problem needs exactly {sorted(PROBLEM_KEYS[kind] - {'kind'})}",
                              _line_of(text, "problem"))
        for key in PROBLEM_KEYS[kind] - {"kind"}:
            problem[key] = _function_spec(text, problem[key], key, base_dir)

    phi = _function_spec(text, raw["phi"], "phi", base_dir) if "phi" in raw else PhiSpec.constant()
    config = RunConfig(
        a=float(interval["a"]),
        b=float(interval["b"]),
        grid_size=grid_size,
        x0=None if raw.get("x0") is None else float(raw["x0"]),
        phi=phi,
        quadrature=raw.get("quadrature", DEFAULT_SCHEME),
        seed=int(raw.get("seed", 0)),
        tolerances=resolve_tolerances(raw.get("tolerances"), environ),
        blocks=blocks,
        base_dir=base_dir,
    )
    try:
        build_grid(config)
    except PhiPowerError as e:
        raise ConfigError(str(e), _line_of(text, "grid_size")) from e
    return config


def load_config(path, environ=None):
    """
    Read and validate a config file.

    Parameters:
    -----------
    path : str
        JSON file; relative table paths inside it resolve against its directory

    Returns:
    --------
    RunConfig : Validated configuration
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Config file not found: {path}")
    with open(path, encoding="utf-8") as handle:
        text = handle.read()
    config = parse_config(text, os.path.dirname(os.path.abspath(path)), environ)
    logger.debug("loaded config %s: [%g, %g], M=%d", path, config.a, config.b, config.grid_size)
    return config


def build_grid(config, x0_index=None):
    grid = Grid.uniform(config.a, config.b, config.grid_size, config.x0, config.quadrature)
    return grid if x0_index is None else grid.rebased(x0_index)


def build_phi(config, grid):
    return materialize_phi(config.phi, grid, config.tolerances.vanish_tolerance)


def build_function(spec, grid, name):
    return materialize_function(spec, grid, name)


def build_problem(config, grid, x0_index=None):
    """
    Assemble the configured Schrödinger or Sturm-Liouville problem.

    Raises:
    -------
    ConfigError : The config has no 'problem' block
    """
    spec = config.block("problem")
    if not spec:
        raise ConfigError("this subcommand needs a 'problem' block")
    tolerances = config.tolerances
    if spec["kind"] == "schrodinger":
        V = build_function(spec["potential"], grid, "V")
        psi0 = build_function(spec["psi0"], grid, "psi0")
        return schrodinger_problem(V, psi0, grid, x0_index, tolerances.resid_tol)
    p, q, r, u0 = (build_function(spec[key], grid, key) for key in ("p", "q", "r", "u0"))
    return sturm_liouville_problem(p, q, r, u0, x0_index, tolerances.resid_tol, tolerances.vanish_tolerance)

