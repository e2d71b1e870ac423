"""CSV and summary artifacts"""

import csv
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np

from asyncopt.core.errors import ConfigError
from asyncopt.models.schemas import DelayParams, SummaryEntry
from asyncopt.models.trace import AveragedTrace, DelaySequence, RunTrace
from asyncopt.services.delay_service import DelayService

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["k", "objective_error", "stationarity_sq", "running_best", "gamma", "tau"]
AVERAGED_COLUMNS = [
    "k",
    "objective_error",
    "objective_error_stderr",
    "stationarity_sq",
    "running_best",
    "running_best_stderr",
    "gamma",
    "tau",
]

PathLike = Union[str, Path]


def format_float(value) -> str:
    """Shortest string that parses back to the same double"""
    return repr(float(value))


class ExportService:
    """Writers for traces, bounds, delays, sweeps and run summaries"""

    @staticmethod
    def _write_rows(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        logger.info(f"Wrote {path}")

    @staticmethod
    def write_trace_csv(trace: Union[RunTrace, AveragedTrace], path: PathLike) -> None:
        columns = AVERAGED_COLUMNS if isinstance(trace, AveragedTrace) else TRACE_COLUMNS
        rows = []
        for idx, k in enumerate(trace.ks):
            row = [str(int(k))]
            for name in columns[1:-1]:
                row.append(format_float(getattr(trace, name)[idx]))
            row.append(str(int(trace.tau[idx])))
            rows.append(row)
        ExportService._write_rows(path, columns, rows)

    @staticmethod
    def write_bound_csv(ks: np.ndarray, bounds: np.ndarray, path: PathLike) -> None:
        rows = ([str(int(k)), format_float(v)] for k, v in zip(ks, bounds))
        ExportService._write_rows(path, ["k", "bound"], rows)

    @staticmethod
    def write_comparison_csv(
        ks: np.ndarray, columns: Dict[str, np.ndarray], path: PathLike
    ) -> None:
        """Aligned columns k, <name_1>, <name_2>, ... over the common ks"""
        names = list(columns)
        rows = (
            [str(int(k))] + [format_float(columns[name][idx]) for name in names]
            for idx, k in enumerate(ks)
        )
        ExportService._write_rows(path, ["k"] + names, rows)

    @staticmethod
    def write_delays_csv(seq: DelaySequence, path: PathLike) -> None:
        """Columns k,tau or k,tau,tau_1,...,tau_n"""
        header = ["k", "tau"]
        table = None
        if seq.per_component is not None:
            table = np.asarray(seq.per_component)
            header += [f"tau_{i + 1}" for i in range(table.shape[0])]
        rows = []
        for k, tau in enumerate(seq.values):
            row = [str(k), str(int(tau))]
            if table is not None:
                row += [str(int(v)) for v in table[:, k]]
            rows.append(row)
        ExportService._write_rows(path, header, rows)

    @staticmethod
    def read_delays_csv(path: PathLike, params: DelayParams, validate: bool = True) -> DelaySequence:
        """Load a delay CSV as a user-supplied sequence"""
        with Path(path).open("r", encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if not header or header[:2] != ["k", "tau"]:
                raise ConfigError(f"{path}: expected a header starting with k,tau")
            rows: List[List[int]] = []
            for line_number, row in enumerate(reader, start=2):
                try:
                    values = [int(v) for v in row]
                except ValueError:
                    raise ConfigError(f"{path}: line {line_number}: non-integer delay")
                if len(values) != len(header) or values[0] != len(rows):
                    raise ConfigError(f"{path}: line {line_number}: malformed row")
                rows.append(values)
        if not rows:
            raise ConfigError(f"{path}: no delays")
        data = np.array(rows, dtype=np.int64)
        per_component = data[:, 2:].T if data.shape[1] > 2 else None
        return DelayService.from_table(data[:, 1], params, per_component, validate=validate)

    @staticmethod
    def format_summary(entries: Sequence[SummaryEntry]) -> str:
        lines = []
        for entry in entries:
            line = f"{entry.key} = {entry.value}  [{entry.provenance.value}]"
            if entry.note:
                line += f"  # {entry.note}"
            lines.append(line)
        return "\n".join(lines) + "\n"

    @staticmethod
    def write_summary(entries: Sequence[SummaryEntry], path: PathLike) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(ExportService.format_summary(entries), encoding="utf-8")
        logger.info(f"Wrote {path}")
