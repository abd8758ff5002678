import json
import math

import numpy as np
import pandas as pd
import pytest

from main import build_parser, main

BOX = {
    "interval": {"a": 0.0, "b": math.pi},
    "grid_size": 1025,
    "problem": {
        "kind": "schrodinger",
        "potential": {"kind": "constant", "value": 0.0},
        "psi0": {"kind": "constant", "value": 1.0},
    },
}


def run(argv_config, subcommand, out_dir):
    return main([subcommand, "--config", argv_config, "--out", str(out_dir)])


class TestParser:
    def test_config_is_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["powers"])

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["plot", "--config", "c.json"])


class TestSubcommands:
    def test_powers(self, write_config, tmp_path):
        path = write_config({"interval": {"a": 0.0, "b": 1.0}, "grid_size": 65, "powers": {"order": 4}})
        assert run(path, "powers", tmp_path / "out") == 0
        frame = pd.read_csv(tmp_path / "out" / "powers.csv")
        assert np.allclose(frame["X4_re"], frame["node"] ** 4)

    def test_trig(self, write_config, tmp_path):
        path = write_config({"interval": {"a": 0.0, "b": 1.0}, "grid_size": 129,
                             "phi": {"kind": "shifted_square"}, "trig": {"epsilon": 1e-10}})
        assert run(path, "trig", tmp_path / "out") == 0
        assert (tmp_path / "out" / "trig.csv").exists()
        assert (tmp_path / "out" / "phase_space.csv").exists()

    def test_taylor(self, write_config, tmp_path):
        path = write_config({"interval": {"a": 0.0, "b": 1.0}, "grid_size": 129,
                             "taylor": {"order": 3, "function": {"kind": "exp"}}})
        assert run(path, "taylor", tmp_path / "out") == 0
        coefficients = pd.read_csv(tmp_path / "out" / "taylor_coefficients.csv")
        assert np.allclose(coefficients["coefficient_re"], [1.0, 1.0, 0.5, 1.0 / 6.0], atol=1e-10)

    def test_solve(self, write_config, tmp_path):
        path = write_config(dict(BOX, solve={"lambda": 4.0, "c1": 1.0, "c2": 0.0, "K": 40}))
        assert run(path, "solve", tmp_path / "out") == 0
        frame = pd.read_csv(tmp_path / "out" / "solution.csv")
        assert np.allclose(frame["u_re"], np.cos(2.0 * frame["node"]), atol=1e-9)

    def test_eigen(self, write_config, tmp_path):
        path = write_config(dict(BOX, eigen={"lambda_range": [0.5, 26.0], "count": 5, "K": 40}))
        assert run(path, "eigen", tmp_path / "out") == 0
        frame = pd.read_csv(tmp_path / "out" / "eigenvalues.csv")
        assert np.allclose(frame["lambda"], [1.0, 4.0, 9.0, 16.0, 25.0], atol=1e-7)

    def test_volterra(self, write_config, tmp_path):
        path = write_config({"interval": {"a": -1.0, "b": 1.0}, "grid_size": 129,
                             "volterra": {"psi0": {"kind": "gaussian"}, "lambda": 2.0, "partner": True}})
        assert run(path, "volterra", tmp_path / "out") == 0
        assert (tmp_path / "out" / "resolvent.csv").exists()
        assert (tmp_path / "out" / "partner_resolvent.csv").exists()

    def test_susy_without_spectrum(self, write_config, tmp_path):
        path = write_config({"interval": {"a": -5.0, "b": 5.0}, "grid_size": 257,
                             "susy": {"psi0": {"kind": "gaussian"}}})
        assert run(path, "susy", tmp_path / "out") == 0
        assert (tmp_path / "out" / "susy_pair.csv").exists()
        assert not (tmp_path / "out" / "susy_spectrum.csv").exists()


class TestVerify:
    def test_unit_phi_passes(self, write_config, tmp_path):
        path = write_config({"interval": {"a": 0.0, "b": 1.0}, "grid_size": 257})
        assert run(path, "verify", tmp_path / "out") == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["passed"] is True
        modules = {check["module"] for check in report["checks"]}
        assert {"gen_powers", "phi_special", "phi_calculus", "volterra"} <= modules


class TestExitCodes:
    def test_unknown_key_is_a_config_error(self, write_config, tmp_path, capsys):
        path = write_config({"interval": {"a": 0.0, "b": 1.0}, "grid_size": 65, "colour": "red"})
        assert run(path, "powers", tmp_path / "out") == 2
        assert "ConfigError" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert run(str(tmp_path / "absent.json"), "powers", tmp_path / "out") == 2

    def test_missing_block_is_a_config_error(self, write_config, tmp_path):
        path = write_config({"interval": {"a": 0.0, "b": 1.0}, "grid_size": 65})
        assert run(path, "eigen", tmp_path / "out") == 2

    def test_vanishing_phi_is_a_library_error(self, write_config, tmp_path, capsys):
        path = write_config({"interval": {"a": 0.0, "b": 1.0}, "grid_size": 65,
                             "phi": {"kind": "polynomial", "coefficients": [0.0, 1.0]}})
        assert run(path, "powers", tmp_path / "out") == 1
        assert "NonvanishingViolation" in capsys.readouterr().err

    def test_vanishing_ground_state_in_susy(self, write_config, tmp_path, capsys):
        path = write_config({"interval": {"a": 0.0, "b": math.pi}, "grid_size": 65,
                             "susy": {"psi0": {"kind": "sin"}}})
        assert run(path, "susy", tmp_path / "out") == 1
        assert "GroundStateVanishes" in capsys.readouterr().err

    def test_negative_order_is_a_config_error(self, write_config, tmp_path, capsys):
        path = write_config({"interval": {"a": 0.0, "b": 1.0}, "grid_size": 65, "powers": {"order": -1}})
        assert run(path, "powers", tmp_path / "out") == 2
        assert "powers.order" in capsys.readouterr().err

    def test_one_sided_range_is_a_config_error(self, write_config, tmp_path):
        path = write_config(dict(BOX, eigen={"lambda_range": [5]}))
        assert run(path, "eigen", tmp_path / "out") == 2

    def test_complex_problem_cannot_give_eigenvalues(self, write_config, tmp_path):
        # (i u')' = λ u has u0 = 1 but is not self-adjoint
        problem = {
            "kind": "sturm_liouville",
            "p": {"kind": "constant", "value": [0.0, 1.0]},
            "q": {"kind": "constant", "value": 0.0},
            "r": {"kind": "constant", "value": 1.0},
            "u0": {"kind": "constant", "value": 1.0},
        }
        path = write_config(dict(BOX, problem=problem, eigen={"lambda_range": [0.5, 26.0]}))
        assert run(path, "eigen", tmp_path / "out") == 2
