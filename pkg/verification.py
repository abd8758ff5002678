"""
Identity verification module for phipowers.
Runs every identity the library promises against one configuration and
collects residuals into a single report.
"""

import json
import logging
import math
import os

import numpy as np

from config import build_function, build_grid, build_phi, build_problem
from errors import PhiPowerError
from gen_powers import (
    binomial_residual,
    build_power_table,
    conjugate_table,
    growth_bound_ratio,
    monomial_residual,
    single_integral_residual,
    symmetry_residuals,
)
from grid_quadrature import PhiSpec, as_complex, materialize_function, quadrature_checks, running_integral
from phi_calculus import (
    FUNDAMENTAL_ORDER_CAP,
    WRONSKIAN_ORDER_CAP,
    WronskianForms,
    derivative_expansion_coefficients,
    expansion_residual,
    fundamental_set_residual,
    particular_solution_residual,
    phi_derivative_power,
    predicted_derivative_power,
    require_real_phi,
    taylor_expand,
    wronskian_diagonal_residual,
    wronskian_numeric,
)
from phi_special import (
    build_trig,
    conjugation_residual,
    dropped_term_bound,
    pythagorean_residuals,
    required_trig_order,
    trig_derivative_check,
    truncation_excess,
)
from spps_solver import (
    DEFAULT_K,
    build_spps,
    dirichlet_eigenvalues,
    evaluate_solution,
    finite_difference_eigenvalues,
    ode_residual,
    power_table_bridge_residual,
    solution_wronskian_at_base,
    truncation_estimate,
)
from susy import (
    ANALYTIC_TOL,
    TABLE_TOL,
    build_susy_pair,
    ground_state_partner_residual,
    pair_residuals,
    partner_spectrum_check,
    r_transform,
)
from utils import check_record, compare_checks, print_section_header, skip_record, write_csv
from volterra import (
    KERNEL_SIZE_CAP,
    Kernel,
    algebra_residuals,
    compose,
    composition_rule_residuals,
    ordered_residual,
    partner_resolvent,
    power_bridge_residuals,
    resolvent_solution,
    resolvent_spps_residual,
    sigma_bridge_residuals,
    unit_kernel,
)

logger = logging.getLogger(__name__)

DEFAULT_TABLE_ORDER = 8
TRIG_ORDER_CAP = 61
RESOLVENT_TOL = 1e-7
ORACLE_TOL = 1e-4
PARTNER_SHIFT_TOL = 1e-3
STABILITY_TOL = 1e-8
MIN_ORDER_RATIO = 12.0
DERIVATIVE_ORDER = 8
BRIDGE_POWER = 4
COMPOSITION_RULES = ((1, 1), (1, 2), (2, 1), (1, 3), (2, 2), (3, 1))
# (k, n) pairs the derivative formula covers: same parity with k <= n, or opposite parity with k < n
DERIVATIVE_CASES = {
    variant: tuple((k, n) for n in range(1, DERIVATIVE_ORDER + 1) for k in range(1, n + 1)
                   if ((n - k) % 2 == 0) == same_parity)
    for variant, same_parity in (("DX", True), ("DtXt", True), ("DtX", False), ("DXt", False))
}


def _relative(difference, reference):
    return float(np.max(np.abs(difference))) / max(1.0, float(np.max(np.abs(reference))))


class IdentityVerifier:
    """
    Runs the identity checks of every module for one RunConfig.
    """

    def __init__(self, config, n_jobs=2):
        """
        Initialize the verifier.

        Parameters:
        -----------
        config : RunConfig
            Validated configuration
        n_jobs : int
            Threads for independent sub-checks
        """
        self.config = config
        self.tol = config.tolerances
        self.n_jobs = n_jobs
        self.grid = build_grid(config)
        self.phi = None
        self.table = None
        self.results = []
        self.report = None

    def _record(self, module, check, residual, tolerance, detail=""):
        record = check_record(module, check, residual, tolerance, detail)
        self.results.append(record)
        status = "PASS" if record["passed"] else "FAIL"
        print(f"  [{status}] {module}.{check}: {record['residual']:.3e} (tol {tolerance:.1e})")
        return record

    def _skip(self, module, check, reason):
        self.results.append(skip_record(module, check, reason))
        print(f"  [SKIP] {module}.{check}: {reason}")

    def _guarded(self, module, method):
        try:
            method()
        except PhiPowerError as e:
            self._record(module, "error", math.inf, 0.0, f"{type(e).__name__}: {e}")

    def _require_table(self):
        if self.table is None:
            raise ValueError("Power table not built. Call verify_gen_powers first.")
        return self.table

    def verify_quadrature(self):
        """Closed-form integral, linearity, direction consistency and order."""
        print_section_header("Grid quadrature")
        nodes = self.grid.nodes
        computed = running_integral(np.cos(nodes), self.grid)
        exact = np.sin(nodes) - np.sin(nodes[0])
        self._record("grid_quadrature", "cumulative_cos", _relative(computed - exact, exact), self.tol.tol_identity)
        checks = quadrature_checks(self.grid, self.config.seed)
        self._record("grid_quadrature", "linearity", checks["linearity"], self.tol.tol_identity)
        self._record("grid_quadrature", "direction_consistency", checks["direction"], checks["direction_limit"],
                     "pair differences against twice the error from x0")
        self._record("grid_quadrature", "convergence_order", MIN_ORDER_RATIO / checks["order_ratio"], 1.0,
                     f"error shrinks {checks['order_ratio']:.1f}x when h halves")

    def verify_gen_powers(self):
        """Symmetry, single-integral, binomial, growth and conjugation checks."""
        print_section_header("Generalized powers")
        order = int(self.config.block("powers").get("order", DEFAULT_TABLE_ORDER))
        self.phi = build_phi(self.config, self.grid)
        self.table = table = build_power_table(self.phi, order=order, vanish_tolerance=self.tol.vanish_tolerance)
        scale = max(1.0, float(np.max(np.abs(table.X))), float(np.max(np.abs(table.Xt))))
        tol = self.tol.tol_identity

        symmetry = symmetry_residuals(table, seed=self.config.seed, n_jobs=self.n_jobs)
        for name, residual in symmetry.items():
            self._record("gen_powers", name, residual / scale, tol)
        single = max((single_integral_residual(table, n, seed=self.config.seed) for n in range(1, order + 1)),
                     default=0.0)
        self._record("gen_powers", "single_integral_form", single / scale, tol)
        binomial = max((binomial_residual(table, n) for n in range(2, order + 1)), default=0.0)
        self._record("gen_powers", "binomial_sum", binomial, tol)
        self._record("gen_powers", "growth_bound", max(0.0, growth_bound_ratio(table) - 1.0), tol,
                     "excess of |row| over its bound")
        swapped = conjugate_table(table)
        self._record("gen_powers", "conjugation_swap",
                     max(_relative(swapped.X - table.Xt, table.Xt), _relative(swapped.Xt - table.X, table.X)), tol)
        if self.config.phi == PhiSpec.constant():
            self._record("gen_powers", "monomial_reduction", monomial_residual(table), 1e-10)
        else:
            self._skip("gen_powers", "monomial_reduction", "only defined for Φ ≡ 1")

    def verify_phi_special(self):
        """Pythagorean and derivative identities of the Φ-trig set."""
        print_section_header("Phi-trigonometric functions")
        table = self._require_table()
        order = required_trig_order(self.phi, self.tol.epsilon)
        if order > TRIG_ORDER_CAP:
            self._skip("phi_special", "trig", f"needs {order} power rows, more than {TRIG_ORDER_CAP}")
            return
        if order > table.order:
            table = build_power_table(self.phi, order=order, vanish_tolerance=self.tol.vanish_tolerance)
        trig = build_trig(table, self.tol.epsilon)
        scale = max(1.0, float(np.max(np.abs(trig.Ch * trig.Cht))))
        for name, residual in pythagorean_residuals(trig).items():
            self._record("phi_special", f"pythagorean_{name}", residual / scale, self.tol.tol_identity,
                         f"K={trig.K}, tail bound {trig.tail_bound:.1e}")
        derivative = trig_derivative_check(trig)
        worst = max(derivative, key=derivative.get)
        self._record("phi_special", "derivative_relations", derivative[worst],
                     dropped_term_bound(trig) + self.tol.tol_identity * scale, f"worst: {worst}")
        self._record("phi_special", "conjugation_coherence", conjugation_residual(trig), self.tol.tol_identity)
        self._record("phi_special", "monotone_truncation", truncation_excess(table, trig.K), self.tol.tol_identity,
                     f"largest rise for K <= {trig.K}")

    def verify_phi_calculus(self):
        """Derivative formulas, Taylor, Wronskians, fundamental sets, Cauchy solutions, expansion."""
        print_section_header("Phi-calculus")
        table = self._require_table()
        tol = self.tol.tol_identity
        try:
            require_real_phi(self.phi)
        except PhiPowerError as e:
            self._skip("phi_calculus", "all", str(e))
            return

        # table Φ carries a short jet; its higher derivatives would be differenced
        max_k = DERIVATIVE_ORDER if self.phi.jet is None else min(DERIVATIVE_ORDER, self.phi.jet.order + 1)
        worst = 0.0
        for variant, cases in DERIVATIVE_CASES.items():
            for k, n in cases:
                if n > table.order or k > max_k:
                    continue
                predicted = predicted_derivative_power(table, k, n, variant)
                worst = max(worst, _relative(phi_derivative_power(table, k, n, variant) - predicted, predicted))
        self._record("phi_calculus", "derivative_of_powers", worst, tol, f"n <= {min(DERIVATIVE_ORDER, table.order)}")

        taylor = self.config.block("taylor")
        n = min(int(taylor.get("order", 4)), table.order)
        spec = taylor.get("function", PhiSpec("exp"))
        f = materialize_function(spec, self.grid, "f")
        expansion = taylor_expand(f, table, n)
        self._record("phi_calculus", "taylor_identity", expansion.residual() / max(1.0, f.sup_norm()), tol,
                     f"order {n}")

        if np.all(self.phi.values.real > 0):
            n_max = min(WRONSKIAN_ORDER_CAP, table.order)
            worst = 0.0
            for m in range(n_max + 1):
                W, Wt = WronskianForms(self.phi, m).values()
                worst = max(worst, _relative(wronskian_numeric(table, m) - W, W),
                            _relative(wronskian_numeric(table, m, tilde=True) - Wt, Wt))
            self._record("phi_calculus", "wronskian_closed_form", worst, tol, f"n <= {n_max}")
            diagonal, upper = wronskian_diagonal_residual(table, n_max)
            self._record("phi_calculus", "wronskian_at_base", max(diagonal, upper), tol)
            for m in (2, 3):
                if m <= table.order:
                    residual = expansion_residual(table, derivative_expansion_coefficients(table, m))
                    self._record("phi_calculus", f"derivative_expansion_{m}", residual, tol)
        else:
            self._skip("phi_calculus", "wronskian_closed_form", "Φ is not positive")

        n_fund = min(FUNDAMENTAL_ORDER_CAP, table.order - 1)
        scale = max(1.0, float(np.max(np.abs(table.X))), float(np.max(np.abs(table.Xt))))
        self._record("phi_calculus", "fundamental_set", fundamental_set_residual(table, n_fund) / scale, tol,
                     f"order {n_fund + 1}")
        h = materialize_function(PhiSpec("exp"), self.grid, "h")
        n_part = min(3, table.order)
        residual = max(particular_solution_residual(table, h, n_part),
                       particular_solution_residual(table, h, n_part, tilde=True))
        self._record("phi_calculus", "particular_solution", residual, tol, f"n = {n_part}")

    def verify_spps(self):
        """Solution residual, base Wronskian, truncation and Dirichlet spectrum."""
        print_section_header("SPPS solver")
        if not self.config.block("problem"):
            self._skip("spps_solver", "all", "no 'problem' block")
            return
        solve = self.config.block("solve")
        K = int(solve.get("K", DEFAULT_K))
        lam = as_complex(solve.get("lambda", 1.0))
        problem = build_problem(self.config, self.grid)
        series = build_spps(problem, K)
        estimate, _ = truncation_estimate(series, lam)
        self._record("spps_solver", "truncation", estimate, self.tol.series_tol, f"K={K}, λ={lam}")
        for label, (c1, c2) in (("u1", (1.0, 0.0)), ("u2", (0.0, 1.0))):
            u = evaluate_solution(series, lam, c1, c2, series_tol=math.inf)
            scale = max(1.0, u.sup_norm() * max(1.0, abs(lam)))
            self._record("spps_solver", f"ode_residual_{label}", ode_residual(problem, u, lam) / scale,
                         self.tol.ode_tol)
        p0 = problem.p.values[problem.x0_index]
        wronskian = solution_wronskian_at_base(series, lam)
        self._record("spps_solver", "wronskian_at_base", abs(wronskian * p0 - 1.0), self.tol.tol_identity)
        self._record("spps_solver", "power_table_bridge", power_table_bridge_residual(problem.u0), self.tol.tol_identity,
                     "p = r = 1 rows against the X, X~ rows of u0²")

        eigen = self.config.block("eigen")
        if not eigen:
            self._skip("spps_solver", "dirichlet_spectrum", "no 'eigen' block")
            return
        K_eigen = int(eigen.get("K", K))
        left = build_problem(self.config, self.grid.rebased(0), x0_index=0)
        if not left.is_self_adjoint():
            self._skip("spps_solver", "dirichlet_spectrum", "problem is not self-adjoint")
            return
        settings = (eigen["lambda_range"], int(eigen.get("count", 5)), int(eigen.get("mesh", 2000)),
                    self.tol.root_tol, self.tol.series_tol)
        result = dirichlet_eigenvalues(build_spps(left, K_eigen), *settings)
        doubled = dirichlet_eigenvalues(build_spps(left, 2 * K_eigen), *settings)
        shift = (float(np.max(np.abs(doubled.eigenvalues - result.eigenvalues)))
                 if doubled.eigenvalues.size == result.eigenvalues.size else math.inf)
        self._record("spps_solver", "eigenvalue_stability", shift, STABILITY_TOL, f"K={K_eigen} against K={2 * K_eigen}")
        if self.config.block("problem")["kind"] != "schrodinger":
            self._skip("spps_solver", "dirichlet_spectrum", "difference oracle covers Schrödinger problems only")
            return
        V = left.q.values.real
        oracle = finite_difference_eigenvalues(lambda x: np.interp(x, self.grid.nodes, V),
                                               self.grid.a, self.grid.b, result.eigenvalues.size)
        mismatch = float(np.max(np.abs(result.eigenvalues - oracle) / np.maximum(1.0, np.abs(oracle))))
        self._record("spps_solver", "dirichlet_spectrum", mismatch, ORACLE_TOL,
                     f"{result.eigenvalues.size} levels against second-order differences")

    def verify_susy(self):
        """Pair formulas, zero mode of H2, R transform and partner spectra."""
        print_section_header("SUSY partners")
        block = self.config.block("susy")
        if "psi0" not in block:
            self._skip("susy", "all", "no 'susy.psi0'")
            return
        spec = block["psi0"]
        psi0 = build_function(spec, self.grid, "psi0")
        tol = TABLE_TOL if spec.kind == "table" else ANALYTIC_TOL
        pair = build_susy_pair(psi0, self.tol.vanish_tolerance)
        residuals = pair_residuals(pair)
        worst = max(residuals, key=residuals.get)
        self._record("susy", "pair_formulas", residuals[worst], tol, f"worst: {worst}")
        self._record("susy", "partner_zero_mode", ground_state_partner_residual(pair), tol)
        swapped = r_transform(pair)
        self._record("susy", "r_transform",
                     max(_relative(swapped.W.values + pair.W.values, pair.W.values),
                         _relative(swapped.V1.values - pair.V2.values, pair.V2.values),
                         _relative(swapped.V2.values - pair.V1.values, pair.V1.values)), tol)
        if "lambda_range" not in block:
            self._skip("susy", "partner_spectrum", "no 'susy.lambda_range'")
            return
        left = build_function(spec, self.grid.rebased(0), "psi0")
        if not left.is_real():
            self._skip("susy", "partner_spectrum", "psi0 is not real")
            return
        report = partner_spectrum_check(build_susy_pair(left), block["lambda_range"],
                                        int(block.get("n_levels", 3)), int(block.get("K", DEFAULT_K)), self.n_jobs)
        self._record("susy", "partner_spectrum", report.max_shift_mismatch, PARTNER_SHIFT_TOL,
                     f"{report.shifted_differences.size} levels")

    def verify_volterra(self):
        """Composition bridges, composition rules and the resolvent equivalence."""
        print_section_header("Volterra composition")
        table = self._require_table()
        if self.grid.size > KERNEL_SIZE_CAP:
            self._skip("volterra", "all", f"grid larger than {KERNEL_SIZE_CAP} nodes")
            return
        tol = self.tol.tol_identity
        ones = unit_kernel(self.grid)
        x, y = np.meshgrid(self.grid.nodes, self.grid.nodes, indexing="ij")
        self._record("volterra", "unit_composition",
                     ordered_residual(compose(ones, ones), Kernel(self.grid, y - x, True)), tol)
        algebra = algebra_residuals(self.grid, self.config.seed)
        for name, residual in algebra.items():
            self._record("volterra", name, residual, tol)
        bridges = sigma_bridge_residuals(table)
        self._record("volterra", "sigma_bridges", max(bridges.values()), tol)
        bridges = {}
        for n in range(1, BRIDGE_POWER + 1):
            if 2 * n <= table.order:
                bridges.update({f"{k}_{n}": v for k, v in power_bridge_residuals(table, n).items()})
        if bridges:
            self._record("volterra", "power_bridges", max(bridges.values()), tol)
        rules = {}
        for n, m in COMPOSITION_RULES:
            if 2 * n + 2 * m <= table.order:
                rules.update({f"{k}_{n}{m}": v for k, v in composition_rule_residuals(table, n, m).items()})
        if rules:
            worst = max(rules, key=rules.get)
            self._record("volterra", "composition_rules", rules[worst], tol, f"worst: {worst}")
        else:
            self._skip("volterra", "composition_rules", "table order below 4")

        block = self.config.block("volterra")
        if "psi0" not in block:
            self._skip("volterra", "resolvent", "no 'volterra.psi0'")
            return
        psi0 = build_function(block["psi0"], self.grid, "psi0")
        lam = as_complex(block.get("lambda", 1.0))
        solution = resolvent_solution(psi0, lam, series_tol=self.tol.series_tol)
        self._record("volterra", "resolvent_equivalence", resolvent_spps_residual(solution), RESOLVENT_TOL,
                     f"{solution.neumann_terms} kernel powers")
        if block.get("partner", False):
            partner = partner_resolvent(psi0, lam, series_tol=self.tol.series_tol)
            self._record("volterra", "partner_resolvent_equivalence",
                         resolvent_spps_residual(partner, partner=True), RESOLVENT_TOL)

    def run_full_suite(self):
        """
        Run every module's checks; library errors are recorded as failures.

        Returns:
        --------
        pd.DataFrame : The report, failed checks first
        """
        self._guarded("grid_quadrature", self.verify_quadrature)
        self._guarded("gen_powers", self.verify_gen_powers)
        if self.table is not None:
            self._guarded("phi_special", self.verify_phi_special)
            self._guarded("phi_calculus", self.verify_phi_calculus)
            self._guarded("volterra", self.verify_volterra)
        self._guarded("spps_solver", self.verify_spps)
        self._guarded("susy", self.verify_susy)
        self.report = compare_checks(self.results)
        return self.report

    @property
    def passed(self):
        if self.report is None:
            raise ValueError("No report available. Call run_full_suite first.")
        return bool(self.report["passed"].all())

    def save_report(self, out_dir):
        """
        Write report.csv and report.json.

        Returns:
        --------
        tuple : Paths of the CSV and JSON files
        """
        if self.report is None:
            raise ValueError("No report available. Call run_full_suite first.")
        csv_path = write_csv(self.report, os.path.join(out_dir, "report.csv"))
        json_path = os.path.join(out_dir, "report.json")
        records = self.report.replace({np.nan: None}).to_dict(orient="records")
        with open(json_path, "w", encoding="utf-8") as handle:
            json.dump({"passed": self.passed, "checks": records}, handle, indent=2, sort_keys=True)
        print(f"Report saved to: {json_path}")
        return csv_path, json_path


def verify_config(config, out_dir=None, n_jobs=2):
    """
    Convenience function: run the full suite and optionally save the report.

    Returns:
    --------
    IdentityVerifier : The verifier holding results and report
    """
    verifier = IdentityVerifier(config, n_jobs=n_jobs)
    verifier.run_full_suite()
    if out_dir is not None:
        verifier.save_report(out_dir)
    logger.info("verification finished: %s", "passed" if verifier.passed else "failed")
    return verifier
