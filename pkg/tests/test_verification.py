import json
import math

import pytest

from config import parse_config
from errors import NoRootsInRange
from verification import COMPOSITION_RULES, DERIVATIVE_CASES, DERIVATIVE_ORDER, IdentityVerifier

UNIT = {"interval": {"a": 0.0, "b": 1.0}, "grid_size": 129}

BOX = {
    "interval": {"a": 0.0, "b": math.pi},
    "grid_size": 257,
    "problem": {
        "kind": "schrodinger",
        "potential": {"kind": "constant", "value": 0.0},
        "psi0": {"kind": "constant", "value": 1.0},
    },
    "eigen": {"lambda_range": [0.5, 10.0], "count": 3, "K": 30},
}


def config_for(payload):
    return parse_config(json.dumps(payload, indent=2), environ={})


def records_of(verifier, module):
    return {record["check"]: record for record in verifier.results if record["module"] == module}


class TestCaseTables:
    def test_derivative_cases_reach_order_eight(self):
        for variant in ("DX", "DtXt"):
            assert all((n - k) % 2 == 0 and 1 <= k <= n for k, n in DERIVATIVE_CASES[variant])
        for variant in ("DtX", "DXt"):
            assert all((n - k) % 2 == 1 and 1 <= k < n for k, n in DERIVATIVE_CASES[variant])
        assert (DERIVATIVE_ORDER, DERIVATIVE_ORDER) in DERIVATIVE_CASES["DX"]
        assert (1, DERIVATIVE_ORDER) in DERIVATIVE_CASES["DXt"]

    def test_composition_rules_fit_default_table(self):
        assert (3, 1) in COMPOSITION_RULES and (2, 1) in COMPOSITION_RULES
        assert all(2 * n + 2 * m <= 8 for n, m in COMPOSITION_RULES)


class TestUnitSuite:
    @pytest.fixture(scope="class")
    def verifier(self):
        verifier = IdentityVerifier(config_for(UNIT), n_jobs=1)
        verifier.run_full_suite()
        return verifier

    def test_passes(self, verifier):
        assert verifier.passed

    @pytest.mark.parametrize("module, check", [
        ("grid_quadrature", "linearity"),
        ("grid_quadrature", "direction_consistency"),
        ("grid_quadrature", "convergence_order"),
        ("phi_special", "conjugation_coherence"),
        ("phi_special", "monotone_truncation"),
        ("phi_calculus", "derivative_of_powers"),
        ("volterra", "associativity"),
        ("volterra", "distributivity"),
        ("volterra", "permutability"),
        ("volterra", "power_bridges"),
        ("volterra", "composition_rules"),
    ])
    def test_check_recorded(self, verifier, module, check):
        record = records_of(verifier, module)[check]
        assert record["passed"]
        assert not record["detail"].startswith("skipped")


class TestSpectralChecks:
    def test_box_bridge_and_stability(self):
        verifier = IdentityVerifier(config_for(BOX), n_jobs=1)
        verifier.verify_spps()
        records = records_of(verifier, "spps_solver")
        for check in ("power_table_bridge", "eigenvalue_stability", "dirichlet_spectrum"):
            assert records[check]["passed"], records[check]

    def test_missing_partner_levels_are_an_error(self):
        payload = {"interval": {"a": -5.0, "b": 5.0}, "grid_size": 257,
                   "susy": {"psi0": {"kind": "gaussian"}, "lambda_range": [-0.5, 2.5], "n_levels": 3, "K": 60}}
        verifier = IdentityVerifier(config_for(payload), n_jobs=1)
        with pytest.raises(NoRootsInRange):
            verifier.verify_susy()
