"""
Command-line driver for phipowers.
One subcommand per run, configured by a single JSON file:

    python main.py <subcommand> --config <path> [--out <dir>] [--verbose]

Exit codes: 0 success, 1 failed check or library error, 2 config error.
"""

import argparse
import logging
import os
import sys

from config import build_function, build_grid, build_phi, build_problem, load_config
from errors import ConfigError, PhiPowerError
from gen_powers import build_power_table, table_frame
from grid_quadrature import PhiSpec, as_complex
from phi_calculus import taylor_expand, taylor_frames
from phi_special import build_trig, phase_space_frame, required_trig_order, trig_frame
from spps_solver import DEFAULT_K, build_spps, dirichlet_eigenvalues, eigen_frame, evaluate_solution, solution_frame
from susy import build_susy_pair, pair_frame, partner_spectrum_check
from utils import print_section_header, write_csv
from verification import verify_config
from volterra import partner_resolvent, resolvent_frame, resolvent_solution

logger = logging.getLogger(__name__)

SUBCOMMANDS = ("powers", "trig", "taylor", "solve", "eigen", "susy", "volterra", "verify")
DEFAULT_OUT = "output"


def run_powers(config, out_dir):
    grid = build_grid(config)
    phi = build_phi(config, grid)
    order = int(config.block("powers").get("order", 8))
    table = build_power_table(phi, order=order, vanish_tolerance=config.tolerances.vanish_tolerance)
    print(f"Built X and X~ rows 0..{order} on {grid.size} nodes (c = {table.c_bound:.6g})")
    write_csv(table_frame(table), os.path.join(out_dir, "powers.csv"))
    return 0


def run_trig(config, out_dir):
    grid = build_grid(config)
    phi = build_phi(config, grid)
    block = config.block("trig")
    epsilon = float(block.get("epsilon", config.tolerances.epsilon))
    K = block.get("K")
    order = 2 * int(K) + 1 if K is not None else required_trig_order(phi, epsilon)
    table = build_power_table(phi, order=order, vanish_tolerance=config.tolerances.vanish_tolerance)
    trig = build_trig(table, epsilon, None if K is None else int(K))
    print(f"Truncation K = {trig.K}, certified tail bound {trig.tail_bound:.3e}")
    write_csv(trig_frame(trig), os.path.join(out_dir, "trig.csv"))
    write_csv(phase_space_frame(trig), os.path.join(out_dir, "phase_space.csv"))
    return 0


def run_taylor(config, out_dir):
    grid = build_grid(config)
    phi = build_phi(config, grid)
    block = config.block("taylor")
    n = int(block.get("order", 4))
    f = build_function(block.get("function", PhiSpec("exp")), grid, "f")
    table = build_power_table(phi, order=n, vanish_tolerance=config.tolerances.vanish_tolerance)
    expansion = taylor_expand(f, table, n)
    print(f"Taylor order {n} about x0 = {grid.x0}: identity residual {expansion.residual():.3e}")
    coefficients, remainder = taylor_frames(expansion, grid.nodes)
    write_csv(coefficients, os.path.join(out_dir, "taylor_coefficients.csv"))
    write_csv(remainder, os.path.join(out_dir, "taylor_remainder.csv"))
    return 0


def run_solve(config, out_dir):
    grid = build_grid(config)
    problem = build_problem(config, grid)
    block = config.block("solve")
    lam = as_complex(block.get("lambda", 0.0))
    series = build_spps(problem, int(block.get("K", DEFAULT_K)))
    u = evaluate_solution(series, lam, as_complex(block.get("c1", 1.0)), as_complex(block.get("c2", 0.0)),
                          config.tolerances.series_tol)
    print(f"Solution at λ = {lam} with K = {series.K}")
    write_csv(solution_frame(series, u), os.path.join(out_dir, "solution.csv"))
    return 0


def run_eigen(config, out_dir):
    block = config.block("eigen")
    if "lambda_range" not in block:
        raise ConfigError("'eigen' needs a 'lambda_range'")
    grid = build_grid(config, x0_index=0)
    problem = build_problem(config, grid, x0_index=0)
    if not problem.is_self_adjoint():
        raise ConfigError("'eigen' needs a self-adjoint problem: real p, q, r and u0")
    series = build_spps(problem, int(block.get("K", DEFAULT_K)))
    tolerances = config.tolerances
    result = dirichlet_eigenvalues(series, block["lambda_range"], int(block.get("count", 5)),
                                   int(block.get("mesh", 2000)), tolerances.root_tol, tolerances.series_tol)
    print(f"Eigenvalues: {', '.join(f'{lam:.10g}' for lam in result.eigenvalues)}")
    write_csv(eigen_frame(result), os.path.join(out_dir, "eigenvalues.csv"))
    return 0


def run_susy(config, out_dir):
    block = config.block("susy")
    if "psi0" not in block:
        raise ConfigError("'susy' needs a 'psi0'")
    grid = build_grid(config, x0_index=0)
    pair = build_susy_pair(build_function(block["psi0"], grid, "psi0"), config.tolerances.vanish_tolerance)
    write_csv(pair_frame(pair), os.path.join(out_dir, "susy_pair.csv"))
    if "lambda_range" in block:
        if not pair.psi0.is_real():
            raise ConfigError("'susy.lambda_range' needs a real psi0")
        report = partner_spectrum_check(pair, block["lambda_range"], int(block.get("n_levels", 3)),
                                        int(block.get("K", DEFAULT_K)))
        print(f"Largest partner level mismatch: {report.max_shift_mismatch:.3e}")
        write_csv(report.frame(), os.path.join(out_dir, "susy_spectrum.csv"))
    return 0


def run_volterra(config, out_dir):
    block = config.block("volterra")
    if "psi0" not in block:
        raise ConfigError("'volterra' needs a 'psi0'")
    grid = build_grid(config)
    psi0 = build_function(block["psi0"], grid, "psi0")
    lam = as_complex(block.get("lambda", 0.0))
    series_tol = config.tolerances.series_tol
    solution = resolvent_solution(psi0, lam, series_tol=series_tol)
    print(f"Resolvent at λ = {lam}: {solution.neumann_terms} kernel powers, tail {solution.tail_estimate:.3e}")
    write_csv(resolvent_frame(solution), os.path.join(out_dir, "resolvent.csv"))
    if block.get("partner", False):
        partner = partner_resolvent(psi0, lam, series_tol=series_tol)
        write_csv(resolvent_frame(partner), os.path.join(out_dir, "partner_resolvent.csv"))
    return 0


def run_verify(config, out_dir):
    verifier = verify_config(config, out_dir)
    return 0 if verifier.passed else 1


COMMANDS = {
    "powers": run_powers,
    "trig": run_trig,
    "taylor": run_taylor,
    "solve": run_solve,
    "eigen": run_eigen,
    "susy": run_susy,
    "volterra": run_volterra,
    "verify": run_verify,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="phipowers", description="Φ-generalized powers and the identities built on them")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=DEFAULT_OUT, help="output directory (default: %(default)s)")
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    return parser


def main(argv=None):
    """
    Parse arguments, run one subcommand and map failures to exit codes.

    Returns:
    --------
    int : 0 success, 1 failed check or library error, 2 config error
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        config = load_config(args.config)
    except (ConfigError, FileNotFoundError) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 2

    print_section_header(f"phipowers {args.subcommand}")
    try:
        status = COMMANDS[args.subcommand](config, args.out)
    except ConfigError as e:
        print(f"ConfigError: {e}", file=sys.stderr)
        return 2
    except (PhiPowerError, FileNotFoundError) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        # a configured value broke an operation's precondition
        print(f"ConfigError: {e}", file=sys.stderr)
        return 2
    print_section_header(f"{args.subcommand} {'completed' if status == 0 else 'failed'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
