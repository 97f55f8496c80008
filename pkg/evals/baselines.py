"""
Gold-frequency baselines: the most used gold actions per task type or globally.
"""

import logging
from collections import Counter
from typing import Dict, FrozenSet, Literal, Optional, Sequence

import numpy as np

from agents.base import ActionLike, BaseRelevanceScorer, action_texts
from environment.planner import GoldTrajectory

logger = logging.getLogger(__name__)

BaselineMode = Literal["per_task", "global"]
BASELINE_SIZE = 50
GLOBAL_SCOPE = -1


class GoldFrequencyScorer(BaseRelevanceScorer):
    """Binary scorer: 1 for members of a fixed action set, 0 otherwise"""

    ranks_actions = False

    def __init__(self, name: str, members: FrozenSet[str]):
        self.name = name
        self.members = frozenset(members)

    def get_scorer_name(self) -> str:
        return self.name

    def score_actions(self, task: str, actions: Sequence[ActionLike]) -> np.ndarray:
        return np.array([1.0 if t in self.members else 0.0 for t in action_texts(actions)], dtype=np.float64)

    def shortlist(self, actions: Sequence[ActionLike]) -> FrozenSet[str]:
        return frozenset(t for t in action_texts(actions) if t in self.members)


class BaselinePredictor:
    """
    Top-50 gold actions by count (ties broken by text) for each scope.

    Usage:
        >>> predictor = build_baseline("per_task", suite.golds("train"))
        >>> scorer = predictor.scorer(task_type=3)
    """

    def __init__(self, mode: BaselineMode, sets: Dict[int, FrozenSet[str]]):
        if mode not in ("per_task", "global"):
            raise ValueError(f"unknown baseline mode: {mode}")
        self.mode = mode
        self.sets = sets

    @property
    def name(self) -> str:
        return "gold_per_task" if self.mode == "per_task" else "gold_global"

    def members(self, task_type: int) -> FrozenSet[str]:
        scope = task_type if self.mode == "per_task" else GLOBAL_SCOPE
        return self.sets.get(scope, frozenset())

    def scorer(self, task_type: int) -> GoldFrequencyScorer:
        return GoldFrequencyScorer(self.name, self.members(task_type))


def most_used(trajectories: Sequence[GoldTrajectory], size: int = BASELINE_SIZE) -> FrozenSet[str]:
    counts = Counter(text for trajectory in trajectories for text in trajectory.actions)
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return frozenset(text for text, _ in ranked[:size])


def build_baseline(
    mode: BaselineMode,
    trajectories: Sequence[GoldTrajectory],
    size: int = BASELINE_SIZE,
) -> BaselinePredictor:
    """
    Count gold action texts over training trajectories and keep the top `size`.

    Args:
        mode: "per_task" keeps one set per task type, "global" one set overall
        trajectories: Gold trajectories of the training split
        size: Set size cap

    Raises:
        ValueError: If size < 1
    """
    if size < 1:
        raise ValueError(f"baseline size must be positive, got {size}")
    if mode == "global":
        sets = {GLOBAL_SCOPE: most_used(trajectories, size)}
    else:
        by_task: Dict[int, list] = {}
        for trajectory in trajectories:
            by_task.setdefault(trajectory.task_type, []).append(trajectory)
        sets = {task_type: most_used(group, size) for task_type, group in by_task.items()}
    predictor = BaselinePredictor(mode, sets)
    logger.info(f"{predictor.name}: " + ", ".join(f"{scope}:{len(s)}" for scope, s in sorted(sets.items())))
    return predictor
