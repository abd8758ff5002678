"""
Utility functions for the phipowers pipeline.
This module contains helpers for console output, CSV writing and summarising
identity checks.
"""

import os

import numpy as np
import pandas as pd

CSV_FLOAT_FORMAT = "%.17g"


def complex_columns(name, values):
    """
    Split complex samples into '<name>_re' and '<name>_im' columns.

    Parameters:
    -----------
    name : str
        Column stem
    values : array-like
        Complex samples

    Returns:
    --------
    dict : Column name to real array
    """
    values = np.asarray(values, dtype=complex)
    return {f"{name}_re": values.real, f"{name}_im": values.imag}


def write_csv(frame, filepath):
    """
    Write a DataFrame with 17 significant digits so no precision is lost.

    Parameters:
    -----------
    frame : pd.DataFrame
        Data to write
    filepath : str
        Destination; parent directories are created
    """
    directory = os.path.dirname(filepath)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(filepath, index=False, float_format=CSV_FLOAT_FORMAT)
    print(f"CSV saved to: {filepath}")
    return filepath


def check_record(module, check, residual, tolerance, detail=""):
    """
    One row of an identity report.

    Returns:
    --------
    dict : module, check, residual, tolerance, passed, detail
    """
    residual = float(residual)
    return {
        "module": module,
        "check": check,
        "residual": residual,
        "tolerance": float(tolerance),
        "passed": bool(np.isfinite(residual) and residual <= tolerance),
        "detail": detail,
    }


def skip_record(module, check, reason):
    """A check that could not run for this configuration; it does not fail the suite."""
    return {
        "module": module,
        "check": check,
        "residual": float("nan"),
        "tolerance": float("nan"),
        "passed": True,
        "detail": f"skipped: {reason}",
    }


def compare_checks(results_list):
    """
    Tabulate identity-check records and print the summary.

    Parameters:
    -----------
    results_list : list
        Records produced by check_record

    Returns:
    --------
    pd.DataFrame : Report sorted by module, failed checks first
    """
    report = pd.DataFrame(results_list, columns=["module", "check", "residual", "tolerance", "passed", "detail"])
    if report.empty:
        print("No checks were run.")
        return report
    report = report.sort_values(["passed", "module"], kind="stable").reset_index(drop=True)

    print("\n" + "=" * 80)
    print("IDENTITY CHECK SUMMARY")
    print("=" * 80)
    with pd.option_context("display.max_rows", None, "display.width", 120):
        print(report[["module", "check", "residual", "tolerance", "passed"]].to_string(index=False))
    failed = int((~report["passed"]).sum())
    print("=" * 80)
    print(f"{len(report) - failed} passed, {failed} failed")
    print("=" * 80 + "\n")
    return report


def print_section_header(title):
    """
    Print a formatted section header.

    Parameters:
    -----------
    title : str
        Section title
    """
    print("\n" + "=" * 80)
    print(f"  {title.upper()}")
    print("=" * 80 + "\n")
