"""
State type definitions for the experiment pipeline.
These define the shape of data flowing through LangGraph.
"""

from typing import Any, Dict, List, Literal, Optional, TypedDict


#########################################
# Experiment Pipeline State
#########################################

Stage = Literal[
    "START",
    "SUITE_READY",
    "GUIDE_TRAINED",
    "GUIDE_EVALUATED",
    "AGENTS_TRAINED",
    "AGENTS_EVALUATED",
    "REPORTED",
    "FAILED",
]


class PipelineState(TypedDict):
    """State for one end-to-end experiment run"""

    # Core identifiers
    run_dir: str
    config_hash: str
    suite_hash: str
    current_stage: Stage

    # Requested work
    modes: List[str]                       # e.g. ["drrn", "lge-fix", "lge-inc"]
    deterministic: bool

    # Stage outputs
    suite_summary: Optional[Dict[str, Any]]     # {task_types, worlds, mean_actions}
    guide_history: Optional[Dict[str, Any]]     # GuideHistory.to_dict()
    guide_report: Optional[Dict[str, Any]]      # metric rows per scorer
    agent_scores: Dict[str, Dict[str, float]]   # mode -> task type -> final score
    report_paths: List[str]

    error: Optional[str]
