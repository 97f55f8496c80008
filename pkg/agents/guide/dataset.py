"""
Guide training data: per-task-type hard-negative pools from gold replays and
(task, positive, negative) tuples resampled every epoch.
"""

import json
import logging
from bisect import bisect_left
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from environment.planner import replay
from environment.suite import Suite

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingTuple:
    task_type: int
    variation: int
    tau: str
    pos: str
    neg: str

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class NegativePool:
    """Union of the valid actions seen along gold replays of one task type"""
    task_type: int
    actions: Tuple[str, ...]  # sorted

    def __len__(self) -> int:
        return len(self.actions)

    def __contains__(self, text: str) -> bool:
        index = bisect_left(self.actions, text)
        return index < len(self.actions) and self.actions[index] == text


@dataclass(frozen=True)
class GoldExample:
    """A training variation's description and its gold action texts in trajectory order"""
    task_type: int
    variation: int
    tau: str
    gold: Tuple[str, ...]


def build_negative_pool(suite: Suite, task_type: int, n_variations: int = 10) -> NegativePool:
    """
    Replay the gold trajectories of the first `n_variations` training
    variations (clamped to what exists) and union their valid action sets.

    Raises:
        ValueError: If the task type is not in the suite
    """
    variations = suite.variations(task_type, "train")[:n_variations]
    pool = set()
    for variation in variations:
        result = replay(suite.env(task_type, variation), suite.gold(task_type, variation))
        for step in result.steps:
            pool.update(step.valid)
    logger.info(f"negative pool t{task_type}: {len(pool)} actions from {len(variations)} variations")
    return NegativePool(task_type, tuple(sorted(pool)))


def gold_examples(suite: Suite, split: str = "train") -> List[GoldExample]:
    examples = []
    for task_type in suite.task_types:
        for variation in suite.variations(task_type, split):
            examples.append(GoldExample(
                task_type=task_type,
                variation=variation,
                tau=suite.spec(task_type, variation).description,
                gold=suite.gold(task_type, variation).actions,
            ))
    return examples


def build_training_tuples(
    examples: Sequence[GoldExample],
    pools: Dict[int, NegativePool],
    rng: np.random.Generator,
    negatives_per_positive: int = 1,
) -> List[TrainingTuple]:
    """
    Pair every gold action with negatives drawn from its task type's pool,
    excluding that variation's gold set. Identical tuples are emitted once.

    Raises:
        ValueError: If a pool is missing or has no non-gold action left
    """
    tuples: List[TrainingTuple] = []
    seen = set()
    for example in examples:
        if example.task_type not in pools:
            raise ValueError(f"no negative pool for task type {example.task_type}")
        gold = set(example.gold)
        candidates = [a for a in pools[example.task_type].actions if a not in gold]
        if not candidates:
            raise ValueError(
                f"negative pool of task type {example.task_type} has no non-gold action "
                f"for variation {example.variation}"
            )
        for positive in example.gold:
            picks = rng.choice(len(candidates), size=negatives_per_positive, replace=len(candidates) < negatives_per_positive)
            for pick in picks:
                item = TrainingTuple(example.task_type, example.variation, example.tau, positive, candidates[int(pick)])
                key = (item.tau, item.pos, item.neg)
                if key not in seen:
                    seen.add(key)
                    tuples.append(item)
    return tuples


class GuideDataset:
    """Gold examples plus pools; every epoch draws fresh negatives"""

    def __init__(
        self,
        examples: Sequence[GoldExample],
        pools: Dict[int, NegativePool],
        negatives_per_positive: int = 1,
    ):
        if not examples:
            raise ValueError("GuideDataset needs at least one gold example")
        self.examples = list(examples)
        self.pools = pools
        self.negatives_per_positive = negatives_per_positive

    @classmethod
    def from_suite(cls, suite: Suite, pool_variations: int = 10, negatives_per_positive: int = 1) -> "GuideDataset":
        pools = {t: build_negative_pool(suite, t, pool_variations) for t in suite.task_types}
        return cls(gold_examples(suite, "train"), pools, negatives_per_positive)

    def epoch(self, rng: np.random.Generator) -> List[TrainingTuple]:
        return build_training_tuples(self.examples, self.pools, rng, self.negatives_per_positive)

    def corpus(self) -> Iterable[str]:
        """Every text the Guide is trained on"""
        for example in self.examples:
            yield example.tau
        for pool in self.pools.values():
            yield from pool.actions


def write_tuples(path: str, tuples: Iterable[TrainingTuple]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for item in tuples:
            handle.write(json.dumps(item.to_dict(), sort_keys=True) + "\n")
            count += 1
    return count


def read_tuples(path: str) -> List[TrainingTuple]:
    source = Path(path)
    if not source.exists():
        raise FileNotFoundError(f"tuple file not found: {source}")
    tuples = []
    for number, line in enumerate(source.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            tuples.append(TrainingTuple(**json.loads(line)))
        except (json.JSONDecodeError, TypeError) as e:
            raise ValueError(f"{source}:{number}: malformed tuple record: {e}")
    return tuples
