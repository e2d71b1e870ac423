"""Tests for CSV and summary artifacts"""

import csv

import numpy as np
import pytest

from asyncopt.core.errors import ConfigError
from asyncopt.models.schemas import DelayParams, EngineKind, Provenance, SummaryEntry
from asyncopt.models.trace import RunTrace
from asyncopt.services.delay_service import DelayService
from asyncopt.services.export_service import TRACE_COLUMNS, ExportService


def _read(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def _trace():
    return RunTrace(
        engine=EngineKind.PIAG,
        ks=np.arange(3),
        objective_error=np.array([1.0, 0.1 + 0.2, 1e-300]),
        stationarity_sq=np.array([np.nan, 0.5, 0.25]),
        running_best=np.array([np.nan, 0.5, 0.25]),
        gamma=np.array([0.99, 0.5, 1.0 / 3.0]),
        tau=np.array([0, 1, 0]),
    )


class TestTraceCsv:
    def test_header_and_rows(self, tmp_path):
        path = tmp_path / "out" / "trace.csv"
        ExportService.write_trace_csv(_trace(), path)
        rows = _read(path)
        assert rows[0] == TRACE_COLUMNS
        assert len(rows) == 4
        assert rows[2][-1] == "1"

    def test_floats_round_trip(self, tmp_path):
        trace = _trace()
        path = tmp_path / "trace.csv"
        ExportService.write_trace_csv(trace, path)
        rows = _read(path)[1:]
        parsed = np.array([float(row[1]) for row in rows])
        np.testing.assert_array_equal(parsed, trace.objective_error)
        assert float(rows[2][4]) == 1.0 / 3.0
        assert rows[0][2] == "nan"


class TestDelayCsv:
    def test_round_trip_with_components(self, tmp_path):
        params = DelayParams(a=0.5, b=0.6)
        seq = DelayService.sample_stochastic_delays(params, 50, 3, seed=1)
        path = tmp_path / "delays.csv"
        ExportService.write_delays_csv(seq, path)
        assert _read(path)[0] == ["k", "tau", "tau_1", "tau_2", "tau_3"]
        loaded = ExportService.read_delays_csv(path, params)
        np.testing.assert_array_equal(loaded.values, seq.values)
        np.testing.assert_array_equal(loaded.per_component, seq.per_component)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "delays.csv"
        path.write_text("step,delay\n0,0\n")
        with pytest.raises(ConfigError):
            ExportService.read_delays_csv(path, DelayParams(a=0.5, b=0.6))

    def test_out_of_order_rows(self, tmp_path):
        path = tmp_path / "delays.csv"
        path.write_text("k,tau\n0,0\n2,1\n")
        with pytest.raises(ConfigError):
            ExportService.read_delays_csv(path, DelayParams(a=0.5, b=0.6))

    def test_future_read_rejected_without_validation(self, tmp_path):
        path = tmp_path / "delays.csv"
        path.write_text("k,tau\n0,0\n1,5\n2,0\n")
        with pytest.raises(ConfigError, match="k=1"):
            ExportService.read_delays_csv(path, DelayParams(a=0.5, b=1.0), validate=False)

    def test_violating_file_rejected(self, tmp_path):
        path = tmp_path / "delays.csv"
        path.write_text("k,tau\n0,0\n1,1\n")
        with pytest.raises(ConfigError):
            ExportService.read_delays_csv(path, DelayParams(a=0.5, b=1.0))


class TestSummary:
    def test_line_format(self):
        entries = [
            SummaryEntry(key="a", value="0.1", provenance=Provenance.PAPER),
            SummaryEntry(key="lambda", value="0.5", provenance=Provenance.DERIVED, note="surrogate"),
        ]
        assert ExportService.format_summary(entries) == (
            "a = 0.1  [paper]\nlambda = 0.5  [derived]  # surrogate\n"
        )

    def test_comparison_columns(self, tmp_path):
        path = tmp_path / "comparison.csv"
        ExportService.write_comparison_csv(
            np.arange(2), {"error_b0.2": np.array([1.0, 0.5]), "error_b1": np.array([1.0, 0.75])}, path
        )
        assert _read(path) == [["k", "error_b0.2", "error_b1"], ["0", "1.0", "1.0"], ["1", "0.5", "0.75"]]
