"""Shared fixtures for the phipowers test suite."""

import json

import numpy as np
import pytest

from gen_powers import build_power_table
from grid_quadrature import Grid, PhiSpec, materialize_function, materialize_phi


def make_grid(a=0.0, b=1.0, count=257, x0=None, quadrature="composite6"):
    return Grid.uniform(a, b, count, x0, quadrature)


def make_phi(kind="constant", grid=None, **params):
    return materialize_phi(PhiSpec(kind, params), grid or make_grid())


def make_function(kind, grid, name="f", **params):
    return materialize_function(PhiSpec(kind, params), grid, name)


def sup(values):
    return float(np.max(np.abs(values)))


@pytest.fixture
def unit_grid():
    return make_grid(0.0, 1.0, 513)


@pytest.fixture
def square_phi():
    """Φ = (1+x)² on [0, 1]."""
    return make_phi("shifted_square", make_grid(0.0, 1.0, 257))


@pytest.fixture
def square_table(square_phi):
    return build_power_table(square_phi, order=8)


@pytest.fixture
def one_table(unit_grid):
    return build_power_table(make_phi("constant", unit_grid, value=1.0), order=10)


@pytest.fixture
def write_config(tmp_path):
    def _write(payload, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(payload, indent=2))
        return str(path)
    return _write
