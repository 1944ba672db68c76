"""
Scenario orchestration: run one configured experiment and persist its artifacts.
"""
import logging
from pathlib import Path
from typing import Callable, Optional

from artifact_store import RECORD_FILE, ArtifactStore, RunRecord, utc_now, write_outputs
from diagnostics_engine import diagnostics_rows
from dyadic_engine import VariableKind
from errors import NumericalError
from run_config import RunConfig, Scenario
from scenarios import certificate, convergence, decay, energy_balance, onsager, regularity, scaling, simulate
from scenarios.common import ScenarioResult
from scenarios.convergence import convergence_study

logger = logging.getLogger(__name__)

SCENARIOS: dict[Scenario, Callable[[RunConfig], ScenarioResult]] = {
    Scenario.SIMULATE: simulate.run,
    Scenario.REGULARITY: regularity.run,
    Scenario.DECAY: decay.run,
    Scenario.SCALING: scaling.run,
    Scenario.ENERGY_BALANCE: energy_balance.run,
    Scenario.ONSAGER: onsager.run,
    Scenario.GALERKIN_CONVERGENCE: convergence.run,
    Scenario.CERTIFICATE: certificate.run,
}

__all__ = ["SCENARIOS", "ScenarioResult", "convergence_study", "run_scenario"]


def run_scenario(config: RunConfig, out_dir: Optional[str | Path] = None) -> RunRecord:
    """
    Execute the configured scenario and write its artifacts. Numerical failures
    are recorded in the returned RunRecord (status "failed") with whatever
    partial trajectory the integrator produced.
    """
    scenario = config.run.scenario
    directory = Path(out_dir if out_dir is not None else config.run.outputs)
    record = RunRecord(config_digest=config.digest(), scenario=scenario.value, started_at=utc_now())
    logger.info(f"Running scenario '{scenario.value}' (config {record.config_digest[:12]}) -> {directory}")

    try:
        result = SCENARIOS[scenario](config)
    except NumericalError as e:
        logger.error(f"Scenario '{scenario.value}' failed: {e}")
        partial = getattr(e, "partial", None)
        rows = diagnostics_rows(partial, config.model) if partial is not None and partial.variable_kind == VariableKind.A else []
        record = record.model_copy(update={
            "status": "failed",
            "error": f"{type(e).__name__}: {e}",
            "finished_at": utc_now(),
            "summary": {"failed_at": getattr(e, "t", None), "limiting_shell": getattr(e, "shell", None)},
        })
        return write_outputs(record, partial, rows, directory)

    store = ArtifactStore(directory)
    documents = [store.write_model(doc, name) for name, doc in result.documents.items()]
    record = record.model_copy(update={
        "status": result.status,
        "finished_at": utc_now(),
        "summary": result.summary,
    })
    record = write_outputs(record, result.trajectory, result.rows, directory, result.tables)
    if documents:
        record = record.model_copy(update={"files": record.files + documents})
        store.write_model(record, RECORD_FILE)
    logger.info(f"Scenario '{scenario.value}' finished with status {record.status}")
    return record
