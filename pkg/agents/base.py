"""
Abstract base class for action-relevance scorers.
Defines the interface shared by the Guide and the gold-frequency baselines.
"""

from abc import ABC, abstractmethod
from typing import Any, List, Sequence, Union

import numpy as np

ActionLike = Union[str, Any]


def action_texts(actions: Sequence[ActionLike]) -> List[str]:
    """Rendered texts of Action objects or plain strings"""
    return [a if isinstance(a, str) else a.text for a in actions]


class BaseRelevanceScorer(ABC):
    """
    Abstract interface for relevance scorers.

    All scorers must implement:
    - score_actions() - one relevance score per candidate action
    - get_scorer_name() - scorer identifier used in reports

    Scorers see only the task description, never the state.
    """

    # False for scorers whose scores are set memberships; GAR is undefined for them
    ranks_actions: bool = True

    @abstractmethod
    def score_actions(self, task: str, actions: Sequence[ActionLike]) -> np.ndarray:
        """
        Score every action against the task description.

        Args:
            task: Natural-language task description
            actions: Actions or action texts, in any order

        Returns:
            float64 array aligned with `actions`
        """
        pass

    @abstractmethod
    def get_scorer_name(self) -> str:
        """Return the scorer name (e.g., 'guide', 'gold_per_task')"""
        pass

    def normalized_scores(self, task: str, actions: Sequence[ActionLike]) -> np.ndarray:
        """Scores mapped to [0, 1] for threshold classification"""
        return self.score_actions(task, actions)

    def top_k_indices(self, task: str, actions: Sequence[ActionLike], k: int) -> List[int]:
        """
        Indices of the k highest-scoring actions, best first.
        Ties keep input order.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if len(actions) == 0:
            return []
        scores = self.score_actions(task, actions)
        order = np.argsort(-scores, kind="stable")
        return [int(i) for i in order[:k]]

    def top_k(self, task: str, actions: Sequence[ActionLike], k: int) -> List[ActionLike]:
        """The k most relevant actions, ordered by descending score"""
        return [actions[i] for i in self.top_k_indices(task, actions, k)]

    def classify_relevant(self, task: str, actions: Sequence[ActionLike], threshold: float) -> List[bool]:
        """Label each action relevant when its normalized score reaches `threshold`"""
        if not np.isfinite(threshold):
            raise ValueError(f"threshold must be finite, got {threshold}")
        if len(actions) == 0:
            return []
        return [bool(s >= threshold) for s in self.normalized_scores(task, actions)]

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.get_scorer_name()})"
