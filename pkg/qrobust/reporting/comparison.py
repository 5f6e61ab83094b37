"""Side-by-side comparison of finished training runs."""

from __future__ import annotations

import math
from pathlib import Path

import pandas as pd

from qrobust.io import records
from qrobust.logging import get_logger
from qrobust.models import RunRecord

logger = get_logger(__name__)

COMPARISON_COLUMNS = [
    "run",
    "algorithm",
    "parameters",
    "seed",
    "generations",
    "training_seconds",
    "training_fitness",
    "testing_mean",
    "testing_min",
    "testing_std",
]


def load_records(run_dirs: list[str | Path]) -> list[tuple[str, RunRecord]]:
    """``(run name, record)`` for each run directory, in the given order."""
    loaded = []
    for run_dir in run_dirs:
        record = records.load_run_record(run_dir)
        loaded.append((Path(run_dir).name, record))
        logger.debug("Loaded run %s (%s, %s)", run_dir, record.problem, record.algorithm)
    return loaded


def compare_runs(loaded: list[tuple[str, RunRecord]]) -> pd.DataFrame:
    """One row per run, best testing mean first.

    All runs must belong to the same problem; interrupted runs without a
    test report sort last.
    """
    if not loaded:
        raise ValueError("No runs to compare")
    problems = sorted({record.problem for _, record in loaded})
    if len(problems) > 1:
        raise ValueError(f"Runs belong to different problems: {', '.join(problems)}")

    rows = []
    for name, record in loaded:
        report = record.report
        rows.append({
            "run": name,
            "algorithm": record.algorithm,
            "parameters": record.parameters,
            "seed": record.seed,
            "generations": record.generations,
            "training_seconds": record.training_seconds,
            "training_fitness": record.training_fitness,
            "testing_mean": record.testing_mean,
            "testing_min": float(report.get("min", float("nan"))),
            "testing_std": float(report.get("std", float("nan"))),
        })
    df = pd.DataFrame(rows, columns=COMPARISON_COLUMNS)
    df = df.sort_values("testing_mean", ascending=False, na_position="last", kind="stable")
    return df.reset_index(drop=True)


def format_duration(seconds: float) -> str:
    """``3h05m12s`` style wall-clock duration."""
    if seconds is None or not math.isfinite(seconds):
        return "n/a"
    total = int(round(seconds))
    hours, rest = divmod(total, 3600)
    minutes, secs = divmod(rest, 60)
    if hours:
        return f"{hours}h{minutes:02d}m{secs:02d}s"
    if minutes:
        return f"{minutes}m{secs:02d}s"
    return f"{seconds:.1f}s"


def _cell(value) -> str:
    if isinstance(value, float):
        return "n/a" if math.isnan(value) else f"{value:.4f}"
    return str(value)


def to_markdown(df: pd.DataFrame, problem: str = "") -> str:
    """Markdown table with the columns a performance comparison reports."""
    headers = ["Algorithm", "Parameters", "Training time", "Training fitness", "Testing mean"]
    lines = []
    if problem:
        lines.append(f"### {problem}")
        lines.append("")
    lines.append("| " + " | ".join(headers) + " |")
    lines.append("|" + "|".join("---" for _ in headers) + "|")
    for row in df.itertuples(index=False):
        cells = [
            row.algorithm,
            row.parameters,
            format_duration(row.training_seconds),
            _cell(row.training_fitness),
            _cell(row.testing_mean),
        ]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_comparison_csv(df: pd.DataFrame, path: str | Path) -> str:
    return records.write_frame_csv(df, path)
