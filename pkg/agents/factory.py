"""
Factory for creating relevance scorer instances.
Selects the scorer based on its kind.
"""

from typing import TYPE_CHECKING, Optional, Sequence

import torch

from agents.base import BaseRelevanceScorer
from config.settings import get_dtype

if TYPE_CHECKING:
    from evals.baselines import BaselinePredictor

BASELINE_KINDS = ("gold_per_task", "gold_global")
SCORER_KINDS = ("guide",) + BASELINE_KINDS


def get_scorer(
    kind: str,
    guide_path: Optional[str] = None,
    trajectories: Optional[Sequence] = None,
    task_type: Optional[int] = None,
    dtype: Optional[torch.dtype] = None,
) -> BaseRelevanceScorer:
    """
    Get a relevance scorer.

    Args:
        kind: guide, gold_per_task or gold_global
        guide_path: Guide checkpoint (guide only)
        trajectories: Training gold trajectories (baselines only)
        task_type: Task type whose per-task set is used (gold_per_task only)
        dtype: Parameter precision for the Guide; LGE_PRECISION by default

    Returns:
        Initialized scorer instance

    Raises:
        ValueError: If the kind is unknown or its inputs are missing
        FileNotFoundError: If the Guide checkpoint does not exist

    Example:
        >>> guide = get_scorer("guide", guide_path="runs/desk/guide.ckpt")
        >>> shortlist = guide.top_k(task, actions, k=20)
    """
    if kind == "guide":
        if guide_path is None:
            raise ValueError("the guide scorer needs guide_path")
        from agents.guide import Guide

        return Guide.load(guide_path, dtype=dtype or get_dtype())

    if kind in BASELINE_KINDS:
        if kind == "gold_per_task" and task_type is None:
            raise ValueError("the gold_per_task scorer needs a task_type")
        predictor = get_baseline(kind, trajectories)
        return predictor.scorer(task_type if task_type is not None else -1)

    raise ValueError(f"Unsupported scorer: {kind}. Currently supported: {', '.join(SCORER_KINDS)}")


def get_baseline(kind: str, trajectories: Optional[Sequence]) -> "BaselinePredictor":
    """
    Gold-frequency predictor for every task type; `scorer(task_type)` gives
    the per-task scorer.

    Raises:
        ValueError: If the kind is not a baseline or trajectories are missing
    """
    if kind not in BASELINE_KINDS:
        raise ValueError(f"Unsupported baseline: {kind}. Currently supported: {', '.join(BASELINE_KINDS)}")
    if trajectories is None:
        raise ValueError(f"the {kind} scorer needs training trajectories")
    from evals.baselines import build_baseline

    return build_baseline("per_task" if kind == "gold_per_task" else "global", trajectories)
