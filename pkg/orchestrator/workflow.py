"""
LangGraph workflow compilation with SQLite checkpointing.
Compiles the experiment pipeline against a per-run checkpoint database.
"""

import logging
import sqlite3
from typing import Any, Dict, Optional, Sequence

from langgraph.checkpoint.sqlite import SqliteSaver

from config.settings import DETERMINISTIC
from orchestrator.experiment import create_experiment_workflow, initial_state
from orchestrator.lge import MODES
from orchestrator.state_manager import RunDirectory, completed_stages, log_state_transition

logger = logging.getLogger(__name__)


#########################################
# Compile Workflow
#########################################

def compile_pipeline(run: RunDirectory):
    """
    Compile the experiment graph with checkpoints in <run>/pipeline.sqlite.

    Returns:
        (compiled app, sqlite connection); close the connection when done
    """
    run.root.mkdir(parents=True, exist_ok=True)
    connection = sqlite3.connect(str(run.pipeline_db), check_same_thread=False)
    checkpointer = SqliteSaver(connection)
    app = create_experiment_workflow().compile(checkpointer=checkpointer)
    return app, connection


def _thread(run: RunDirectory) -> Dict[str, Any]:
    # One thread per config: re-running the same config continues the same pipeline
    return {"configurable": {"thread_id": run.config_hash}}


#########################################
# Helper: Execute Pipeline
#########################################

def execute_pipeline(
    run: RunDirectory,
    modes: Sequence[str] = MODES,
    deterministic: bool = DETERMINISTIC,
) -> Dict[str, Any]:
    """
    Run the experiment pipeline, resuming after the last completed stage if a
    previous invocation for this config was interrupted.

    Args:
        run: Prepared run directory
        modes: Agent modes to train and evaluate
        deterministic: Force single-worker rollouts

    Returns:
        Final pipeline state
    """
    app, connection = compile_pipeline(run)
    config = _thread(run)
    try:
        snapshot = app.get_state(config)
        if snapshot and snapshot.values.get("current_stage") == "REPORTED" and not snapshot.next:
            logger.info(f"pipeline {run.config_hash} already complete")
            return snapshot.values
        payload = initial_state(run, modes, deterministic)
        if snapshot and snapshot.next:
            logger.info(f"resuming pipeline {run.config_hash} at {list(snapshot.next)}; done: {completed_stages(run)}")
            log_state_transition(run, snapshot.values.get("current_stage"), "RESUMED", reason=f"next: {list(snapshot.next)}")
            payload = None
        try:
            return app.invoke(payload, config)
        except Exception as e:
            current = app.get_state(config).values.get("current_stage")
            log_state_transition(run, current, "FAILED", reason=str(e))
            raise
    finally:
        connection.close()


def get_pipeline_state(run: RunDirectory) -> Optional[Dict[str, Any]]:
    """
    Get the checkpointed state of a run's pipeline.

    Returns:
        Current state dict, or None if the pipeline never started
    """
    app, connection = compile_pipeline(run)
    try:
        state = app.get_state(_thread(run))
        return state.values if state and state.values else None
    finally:
        connection.close()
