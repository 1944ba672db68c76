import logging
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Generator, Literal, Optional, Sequence

import polars as pl
from pydantic import BaseModel, Field

from dyadic_engine import __version__
from diagnostics_engine import DiagnosticsRecord, records_frame
from errors import ArtifactError
from integrator_engine import Trajectory

logger = logging.getLogger(__name__)

STATES_FILE = "states.csv"
DIAGNOSTICS_FILE = "diagnostics.csv"
PLOT_FILE = "plot.gp"
RECORD_FILE = "record.json"


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


class RunRecord(BaseModel):
    """Manifest of one scenario run, persisted as record.json."""
    version: str = __version__
    config_digest: str
    scenario: str
    started_at: datetime
    finished_at: Optional[datetime] = None
    status: Literal["completed", "budget_exhausted", "failed"] = "completed"
    error: Optional[str] = None
    files: list[str] = []
    summary: dict[str, Any] = Field(default_factory=dict)


class ArtifactStore:
    """Writes run artifacts into one output directory owned by the run."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    @contextmanager
    def open_file(self, name: str) -> Generator[Path, None, None]:
        """
        Yield the target path for `name`, creating the directory on demand.
        Any OSError while writing surfaces as ArtifactError with the path.
        """
        path = self.directory / name
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
            yield path
        except OSError as e:
            logger.error(f"Failed to write artifact {path}: {e}")
            raise ArtifactError(f"cannot write artifact ({e.strerror or e})", str(path)) from e

    def write_frame(self, frame: pl.DataFrame, name: str) -> str:
        with self.open_file(name) as path:
            frame.write_csv(path)
        return name

    def write_states(self, trajectory: Optional[Trajectory], truncation: int = 0, name: str = STATES_FILE) -> str:
        """Header `t,a_0,...,a_N`; header only for an empty trajectory."""
        n = trajectory.truncation if trajectory is not None else truncation
        prefix = trajectory.variable_kind.value if trajectory is not None else "a"
        columns = ["t", *(f"{prefix}_{j}" for j in range(n + 1))]
        if trajectory is None or len(trajectory) == 0:
            frame = pl.DataFrame(schema={c: pl.Float64 for c in columns})
        else:
            data = {"t": trajectory.times}
            data.update({columns[j + 1]: trajectory.values[:, j] for j in range(n + 1)})
            frame = pl.DataFrame(data)
        return self.write_frame(frame, name)

    def write_diagnostics(self, rows: Sequence[DiagnosticsRecord], name: str = DIAGNOSTICS_FILE) -> str:
        return self.write_frame(records_frame(rows), name)

    def write_text(self, text: str, name: str) -> str:
        with self.open_file(name) as path:
            path.write_text(text, encoding="utf-8")
        return name

    def write_model(self, model: BaseModel, name: str) -> str:
        return self.write_text(model.model_dump_json(indent=2) + "\n", name)

    def write_plot_script(self, truncation: int, variable: str = "a", name: str = PLOT_FILE) -> str:
        """gnuplot script over states.csv / diagnostics.csv (log-scale amplitudes, energy, sup norm)."""
        last_column = truncation + 2
        script = "\n".join([
            "set datafile separator ','",
            "set key autotitle columnhead outside",
            "set xlabel 't'",
            "set logscale y",
            f"set title 'shell amplitudes {variable}_j(t)'",
            f"plot for [i=3:{last_column}] '{STATES_FILE}' using 1:i with lines",
            "pause -1",
            "unset logscale y",
            "set title 'energy and sup-norm'",
            f"plot '{DIAGNOSTICS_FILE}' using 1:2 with lines, '' using 1:3 with lines",
            "pause -1",
            "",
        ])
        return self.write_text(script, name)

    @staticmethod
    def load_record(path: str | Path) -> RunRecord:
        try:
            return RunRecord.model_validate_json(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise ArtifactError(f"cannot read run record ({e.strerror or e})", str(path)) from e


def write_outputs(
    record: RunRecord,
    trajectory: Optional[Trajectory],
    rows: Sequence[DiagnosticsRecord],
    directory: str | Path,
    extra_tables: Optional[dict[str, pl.DataFrame]] = None,
) -> RunRecord:
    """
    Write states.csv, diagnostics.csv, plot.gp and any extra tables, then
    record.json listing them. Returns the record with its file list filled in.
    """
    store = ArtifactStore(directory)
    files = [
        store.write_states(trajectory),
        store.write_diagnostics(rows),
    ]
    for name, frame in (extra_tables or {}).items():
        files.append(store.write_frame(frame, name))
    if trajectory is not None:
        files.append(store.write_plot_script(trajectory.truncation, trajectory.variable_kind.value))

    record = record.model_copy(update={"files": files})
    store.write_model(record, RECORD_FILE)
    logger.info(f"Wrote {len(files) + 1} artifacts to {store.directory}")
    return record
