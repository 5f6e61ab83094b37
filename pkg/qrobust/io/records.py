"""Run-directory artefacts: CSV tables, resolved configs and run records.

Every file is written to a temporary sibling and moved into place with
``os.replace``, so a reader never sees a half-written artefact.
"""

from __future__ import annotations

import os
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator

import numpy as np
import pandas as pd
import yaml

from qrobust.models import RobustnessReport, RunHistory, RunRecord

FLOAT_FORMAT = "%.17g"

CONFIG_FILE = "config.resolved.yaml"
HISTORY_FILE = "history.csv"
TIMING_FILE = "timing.csv"
GENOME_FILE = "genome.csv"
REPORT_FILE = "report.csv"
DRIFT_FILE = "drift.csv"
EVOLUTION_FILE = "evolution.csv"
RECORD_FILE = "record.yaml"
FAILED_GENOME_FILE = "failed_genome.csv"

GENOME_COLUMNS = ["channel", "step", "value"]


@contextmanager
def atomic_open(path: str | Path, mode: str = "w") -> Iterator[Any]:
    """Open a temporary file next to ``path`` and replace ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, mode, encoding="utf-8", newline="") as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_frame_csv(df: pd.DataFrame, path: str | Path) -> str:
    with atomic_open(path) as f:
        df.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return str(path)


def write_yaml(data: dict[str, Any], path: str | Path) -> str:
    with atomic_open(path) as f:
        yaml.safe_dump(data, f, sort_keys=False, default_flow_style=False, allow_unicode=True)
    return str(path)


def read_yaml(path: str | Path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as f:
        return yaml.safe_load(f) or {}


# ---------------------------------------------------------------------------
# History
# ---------------------------------------------------------------------------

def write_history_csv(history: RunHistory, path: str | Path) -> str:
    """Columns: generation, best_fitness, mean_fitness, evaluations, strategy_1..strategy_4."""
    return write_frame_csv(history.to_frame(), path)


def write_timing_csv(history: RunHistory, path: str | Path) -> str:
    return write_frame_csv(history.timing_frame(), path)


def read_history_csv(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def read_training_seconds(run_dir: str | Path) -> float:
    """Last wall-clock entry of ``timing.csv``, NaN when absent."""
    path = Path(run_dir) / TIMING_FILE
    if not path.exists():
        return float("nan")
    df = pd.read_csv(path, float_precision="round_trip")
    return float(df["elapsed_seconds"].iloc[-1]) if len(df) else float("nan")


# ---------------------------------------------------------------------------
# Genome
# ---------------------------------------------------------------------------

def genome_frame(genome: np.ndarray, channel_labels: list[str]) -> pd.DataFrame:
    genome = np.asarray(genome, dtype=float).ravel()
    channels = len(channel_labels)
    if genome.size % channels:
        raise ValueError(f"Genome of length {genome.size} does not split into {channels} channels")
    steps = genome.size // channels
    return pd.DataFrame({
        "channel": np.repeat(channel_labels, steps),
        "step": np.tile(np.arange(steps, dtype=int), channels),
        "value": genome,
    })


def write_genome_csv(genome: np.ndarray, channel_labels: list[str], path: str | Path) -> str:
    """One row per control value, channel-major: ``channel, step, value``."""
    return write_frame_csv(genome_frame(genome, channel_labels), path)


def read_genome_csv(path: str | Path, channel_labels: list[str] | None = None) -> np.ndarray:
    """Channel-major genome from a ``channel, step, value`` table.

    With ``channel_labels`` the channels are ordered by that list and every
    label must be present; otherwise they keep their order of appearance.
    """
    df = pd.read_csv(path, dtype={"channel": str}, float_precision="round_trip")
    missing = [c for c in GENOME_COLUMNS if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing genome columns {missing}")
    order = channel_labels or list(dict.fromkeys(df["channel"]))
    unknown = set(df["channel"]) - set(order)
    if unknown:
        raise ValueError(f"{path}: unknown channels {sorted(unknown)}")

    parts = []
    for label in order:
        rows = df[df["channel"] == label].sort_values("step")
        if rows.empty:
            raise ValueError(f"{path}: channel {label!r} has no values")
        if not np.array_equal(rows["step"].to_numpy(), np.arange(len(rows))):
            raise ValueError(f"{path}: channel {label!r} has missing or duplicate steps")
        parts.append(rows["value"].to_numpy(dtype=float))
    if len({p.size for p in parts}) != 1:
        raise ValueError(f"{path}: channels have different numbers of steps")
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Reports and records
# ---------------------------------------------------------------------------

def write_report_csv(report: RobustnessReport, path: str | Path) -> str:
    """Columns: sample, theta_1..theta_p, fitness."""
    return write_frame_csv(report.to_frame(), path)


def write_record_yaml(record: RunRecord, path: str | Path) -> str:
    return write_yaml(record.to_dict(), path)


def read_record_yaml(path: str | Path) -> RunRecord:
    return RunRecord.from_dict(read_yaml(path))


def load_run_record(run_dir: str | Path) -> RunRecord:
    """Record of a finished run directory, with training time from ``timing.csv``."""
    run_dir = Path(run_dir)
    path = run_dir / RECORD_FILE
    if not path.exists():
        raise FileNotFoundError(f"{run_dir}: no {RECORD_FILE}; is this a training run directory?")
    record = read_record_yaml(path)
    record.training_seconds = read_training_seconds(run_dir)
    return record
