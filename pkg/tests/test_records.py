"""Tests for run-directory artefacts."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from qrobust.io.records import (
    RECORD_FILE,
    TIMING_FILE,
    atomic_open,
    load_run_record,
    read_genome_csv,
    read_record_yaml,
    read_training_seconds,
    write_genome_csv,
    write_history_csv,
    write_record_yaml,
    write_report_csv,
    write_timing_csv,
)
from qrobust.models import RobustnessReport, RunHistory, RunRecord


class TestAtomicWrites:
    def test_replaces_existing_file(self, tmp_path: Path):
        path = tmp_path / "out.txt"
        path.write_text("old", encoding="utf-8")
        with atomic_open(path) as f:
            f.write("new")
        assert path.read_text(encoding="utf-8") == "new"
        assert list(tmp_path.iterdir()) == [path]

    def test_failure_keeps_previous_content(self, tmp_path: Path):
        path = tmp_path / "out.txt"
        path.write_text("old", encoding="utf-8")
        with pytest.raises(RuntimeError):
            with atomic_open(path) as f:
                f.write("partial")
                raise RuntimeError("disk full")
        assert path.read_text(encoding="utf-8") == "old"
        assert list(tmp_path.iterdir()) == [path]

    def test_creates_parent_directories(self, tmp_path: Path):
        path = tmp_path / "a" / "b" / "out.txt"
        with atomic_open(path) as f:
            f.write("x")
        assert path.exists()


class TestGenomeCsv:
    def test_channel_major_layout(self, tmp_path: Path):
        path = tmp_path / "genome.csv"
        write_genome_csv(np.arange(6.0), ["u1x", "u1z"], path)
        df = pd.read_csv(path)
        assert df["channel"].tolist() == ["u1x"] * 3 + ["u1z"] * 3
        assert df["step"].tolist() == [0, 1, 2, 0, 1, 2]

    def test_values_exact(self, tmp_path: Path, rng):
        genome = rng.uniform(-10, 10, 40)
        path = tmp_path / "genome.csv"
        write_genome_csv(genome, ["u"], path)
        np.testing.assert_array_equal(read_genome_csv(path, ["u"]), genome)

    def test_many_values_exact(self, tmp_path: Path, rng):
        genome = rng.normal(0.0, 1e3, 200) * np.exp(rng.uniform(-20, 20, 200))
        path = tmp_path / "genome.csv"
        write_genome_csv(genome, ["x", "y"], path)
        np.testing.assert_array_equal(read_genome_csv(path, ["x", "y"]), genome)

    def test_reordered_rows(self, tmp_path: Path):
        path = tmp_path / "genome.csv"
        path.write_text(
            "channel,step,value\nb,1,4\na,0,1\nb,0,3\na,1,2\n", encoding="utf-8"
        )
        np.testing.assert_array_equal(read_genome_csv(path, ["a", "b"]), [1, 2, 3, 4])

    def test_uneven_split(self, tmp_path: Path):
        with pytest.raises(ValueError):
            write_genome_csv(np.zeros(5), ["a", "b"], tmp_path / "genome.csv")

    @pytest.mark.parametrize(
        "text",
        [
            "channel,value\nu,1\n",
            "channel,step,value\nu,0,1\nv,0,2\n",
            "channel,step,value\nu,0,1\nu,2,2\n",
        ],
    )
    def test_malformed(self, tmp_path: Path, text):
        path = tmp_path / "genome.csv"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(ValueError):
            read_genome_csv(path, ["u"])

    def test_missing_channel(self, tmp_path: Path):
        path = tmp_path / "genome.csv"
        path.write_text("channel,step,value\nu1x,0,1\n", encoding="utf-8")
        with pytest.raises(ValueError):
            read_genome_csv(path, ["u1x", "u1z"])


class TestTablesAndRecords:
    def setup_method(self):
        self.history = RunHistory(algorithm="msms_de")
        self.history.record(0.1, 0.05, 6, elapsed=0.5)
        self.history.record(0.2, 0.1, 12, strategies=[1, 2, 2, 1], elapsed=2.25)

    def test_history_csv(self, tmp_path: Path):
        path = tmp_path / "history.csv"
        write_history_csv(self.history, path)
        df = pd.read_csv(path)
        assert df["best_fitness"].tolist() == [0.1, 0.2]
        assert df["strategy_3"].tolist() == [0, 2]

    def test_training_seconds(self, tmp_path: Path):
        write_timing_csv(self.history, tmp_path / TIMING_FILE)
        assert read_training_seconds(tmp_path) == 2.25

    def test_training_seconds_absent(self, tmp_path: Path):
        assert np.isnan(read_training_seconds(tmp_path))

    def test_report_csv(self, tmp_path: Path):
        report = RobustnessReport(fitness=[0.1, 0.3], thetas=[[0.9, 1.1], [1.0, 1.0]])
        path = tmp_path / "report.csv"
        write_report_csv(report, path)
        assert pd.read_csv(path).columns.tolist() == ["sample", "theta_1", "theta_2", "fitness"]

    def test_record_has_no_timestamp(self, tmp_path: Path):
        record = RunRecord(problem="sphere", algorithm="msms_de", report={"mean": -0.5})
        path = tmp_path / RECORD_FILE
        write_record_yaml(record, path)
        text = path.read_text(encoding="utf-8")
        assert "time" not in text
        assert read_record_yaml(path).testing_mean == -0.5

    def test_load_run_record(self, tmp_path: Path):
        write_record_yaml(RunRecord(problem="sphere"), tmp_path / RECORD_FILE)
        write_timing_csv(self.history, tmp_path / TIMING_FILE)
        assert load_run_record(tmp_path).training_seconds == 2.25

    def test_not_a_run_directory(self, tmp_path: Path):
        with pytest.raises(FileNotFoundError):
            load_run_record(tmp_path)
