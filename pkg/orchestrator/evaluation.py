"""
Greedy evaluation of agents on held-out variations.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from agents.base import BaseRelevanceScorer
from agents.explorer import Explorer, StateText
from environment.miniworld import EnvInstance

logger = logging.getLogger(__name__)


class Policy(ABC):
    """Picks one candidate per step; `begin` is called after every reset"""

    def begin(self, env: EnvInstance) -> None:
        pass

    @abstractmethod
    def act(self, state: StateText, candidates: Sequence[str]) -> int:
        pass


class GreedyPolicy(Policy):
    """Explorer argmax over the candidates"""

    def __init__(self, explorer: Explorer):
        self.explorer = explorer

    def act(self, state: StateText, candidates: Sequence[str]) -> int:
        return self.explorer.act_greedy(state, candidates)


class GoldReplayPolicy(Policy):
    """Oracle that plays the environment's gold trajectory"""

    def __init__(self):
        self._actions: Sequence[str] = ()
        self._next = 0

    def begin(self, env: EnvInstance) -> None:
        if env.gold is None:
            raise ValueError(f"{env} has no gold trajectory")
        self._actions = env.gold.actions
        self._next = 0

    def act(self, state: StateText, candidates: Sequence[str]) -> int:
        if self._next >= len(self._actions):
            raise ValueError("gold trajectory exhausted before the episode ended")
        text = self._actions[self._next]
        self._next += 1
        try:
            return list(candidates).index(text)
        except ValueError:
            raise ValueError(f"gold action '{text}' is not among the candidates")


class RandomPolicy(Policy):
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def act(self, state: StateText, candidates: Sequence[str]) -> int:
        return int(self.rng.integers(len(candidates)))


@dataclass(frozen=True)
class EvalResult:
    variations: List[int]
    returns: List[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.returns)) if self.returns else 0.0


def eval_candidates(
    guide: Optional[BaseRelevanceScorer],
    task: str,
    valid: Sequence[str],
    k: int,
    full_action_set: bool,
) -> List[str]:
    """Guide top-k in valid order (epsilon is 0 at evaluation), or the whole set"""
    if full_action_set or guide is None:
        return list(valid)
    keep = set(guide.top_k_indices(task, valid, k))
    return [text for i, text in enumerate(valid) if i in keep]


def run_episode(
    policy: Policy,
    env: EnvInstance,
    guide: Optional[BaseRelevanceScorer] = None,
    k: int = 50,
    full_action_set: bool = True,
) -> float:
    """Play one episode on a fresh copy of `env`; returns its cumulative reward"""
    env = env.fresh()
    observation = env.reset()
    policy.begin(env)
    total = 0.0
    while not env.done:
        valid = [a.text for a in env.valid_actions()]
        candidates = eval_candidates(guide, env.spec.description, valid, k, full_action_set)
        text = candidates[policy.act(StateText.from_observation(observation), candidates)]
        observation, reward, _ = env.step(env.action(text))
        total += reward
    return total


def evaluate(
    policy: Policy,
    guide: Optional[BaseRelevanceScorer],
    envs: Sequence[EnvInstance],
    k: int,
    full_action_set: bool = False,
) -> EvalResult:
    """
    One episode per variation.

    Args:
        policy: Action chooser (greedy Explorer, gold oracle, random)
        guide: Scorer for pruning; None evaluates on the full action set
        envs: Evaluation variations
        k: Shortlist size
        full_action_set: Disable pruning even when a Guide is given

    Returns:
        EvalResult with one return per variation, in input order
    """
    returns = [run_episode(policy, env, guide, k, full_action_set) for env in envs]
    return EvalResult([env.spec.variation for env in envs], returns)


def pick_eval_envs(envs: Sequence[EnvInstance], n: int, rng: np.random.Generator) -> List[EnvInstance]:
    """Choose min(n, len(envs)) variations once, without replacement, kept in input order"""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if len(envs) <= n:
        return list(envs)
    chosen = sorted(int(i) for i in rng.choice(len(envs), size=n, replace=False))
    return [envs[i] for i in chosen]


@dataclass(frozen=True)
class EvalPair:
    """
    Returns on the pruned and the full action set from one evaluation point.
    `pruned` is None without a Guide; `full_is_primary` selects the reported score.
    """
    pruned: Optional[EvalResult]
    full: EvalResult
    full_is_primary: bool

    @property
    def primary(self) -> EvalResult:
        return self.full if self.full_is_primary or self.pruned is None else self.pruned

    def to_record(self) -> Dict:
        return {
            "score": self.primary.mean,
            "returns": self.primary.returns,
            "score_pruned": self.pruned.mean if self.pruned is not None else None,
            "score_full": self.full.mean,
        }


def evaluate_both(
    policy: Policy,
    guide: Optional[BaseRelevanceScorer],
    envs: Sequence[EnvInstance],
    k: int,
    full_action_set: bool = False,
) -> EvalPair:
    """Evaluate with and without Guide pruning; `full_action_set` picks which one is primary"""
    pruned = evaluate(policy, guide, envs, k, full_action_set=False) if guide is not None else None
    full = evaluate(policy, guide, envs, k, full_action_set=True)
    return EvalPair(pruned, full, full_action_set or guide is None)
