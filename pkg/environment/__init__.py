"""
MiniWorld environment package.
"""

from environment.catalog import Catalog, load_catalog
from environment.miniworld import (
    SPLITS,
    Action,
    EnvInstance,
    Observation,
    TaskSpec,
    generate_world,
)
from environment.planner import GoldTrajectory, PlanningError, plan_gold, replay
from environment.suite import Splits, Suite, split_variations
from environment.tasks import get_task_builder, make_task_spec

__all__ = [
    "Action",
    "Catalog",
    "EnvInstance",
    "GoldTrajectory",
    "Observation",
    "PlanningError",
    "SPLITS",
    "Splits",
    "Suite",
    "TaskSpec",
    "generate_world",
    "get_task_builder",
    "load_catalog",
    "make_task_spec",
    "plan_gold",
    "replay",
    "split_variations",
]
