"""Excel workbook for run comparisons and verification results."""

from __future__ import annotations

from pathlib import Path

import pandas as pd
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter

from qrobust.models import VerificationResult

# Cell styling
_HEADER_FILL = PatternFill(start_color="2B3E50", end_color="2B3E50", fill_type="solid")
_HEADER_FONT = Font(name="Segoe UI", size=11, bold=True, color="FFFFFF")
_PASS_FILL = PatternFill(start_color="D4EDDA", end_color="D4EDDA", fill_type="solid")
_FAIL_FILL = PatternFill(start_color="F8D7DA", end_color="F8D7DA", fill_type="solid")
_BEST_FILL = PatternFill(start_color="FFF3CD", end_color="FFF3CD", fill_type="solid")
_STATUS_FILLS = {"PASS": _PASS_FILL, "FAIL": _FAIL_FILL}

_COMPARISON_HEADERS = {
    "run": "Run",
    "algorithm": "Algorithm",
    "parameters": "Parameters",
    "seed": "Seed",
    "generations": "Generations",
    "training_seconds": "Training time (s)",
    "training_fitness": "Training fitness",
    "testing_mean": "Testing mean",
    "testing_min": "Testing min",
    "testing_std": "Testing std",
}


def write_comparison_report(
    comparison: pd.DataFrame,
    output_path: str | Path,
    problem: str = "",
) -> str:
    """Write the comparison table to Excel, highlighting the best run (first row)."""
    output_path = str(output_path)

    with pd.ExcelWriter(output_path, engine="openpyxl") as writer:
        df = comparison.rename(columns=_COMPARISON_HEADERS)
        df.to_excel(writer, sheet_name=_safe_sheet_name(problem or "Comparison"), index=False)

    _apply_formatting(output_path, highlight_best=len(comparison) > 1)
    return output_path


def write_verification_report(result: VerificationResult, output_path: str | Path) -> str:
    """One row per analytic check with its residual and tolerance."""
    output_path = str(output_path)
    checks = pd.DataFrame(
        [
            {
                "Check": c.name,
                "Category": c.category,
                "Status": c.status,
                "Residual": c.residual,
                "Tolerance": c.tolerance,
            }
            for c in result.checks
        ],
        columns=["Check", "Category", "Status", "Residual", "Tolerance"],
    )
    with pd.ExcelWriter(output_path, engine="openpyxl") as writer:
        checks.to_excel(writer, sheet_name="Verification", index=False)

    _apply_formatting(output_path, highlight_best=False)
    return output_path


def _apply_formatting(output_path: str, highlight_best: bool) -> None:
    from openpyxl import load_workbook

    wb = load_workbook(output_path)

    for index, ws in enumerate(wb.worksheets):
        for cell in ws[1]:
            cell.fill = _HEADER_FILL
            cell.font = _HEADER_FONT
            cell.alignment = Alignment(horizontal="center", vertical="center")

        for col_idx in range(1, ws.max_column + 1):
            max_length = 0
            for (c,) in ws.iter_rows(min_col=col_idx, max_col=col_idx):
                if c.value is not None:
                    max_length = max(max_length, len(str(c.value)))
            ws.column_dimensions[get_column_letter(col_idx)].width = min(max_length + 4, 60)

        if index == 0 and highlight_best and ws.max_row >= 2:
            for cell in ws[2]:
                cell.fill = _BEST_FILL

        for row in ws.iter_rows(min_row=2):
            for cell in row:
                val = str(cell.value).upper() if cell.value else ""
                if val in _STATUS_FILLS:
                    cell.fill = _STATUS_FILLS[val]
                    cell.font = Font(bold=True)

    wb.save(output_path)


def _safe_sheet_name(name: str) -> str:
    for ch in r"[]:*?/\\":
        name = name.replace(ch, "_")
    return name[:31]
