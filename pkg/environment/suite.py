"""
Suites: task types x variations, their train/dev/test splits, generated
worlds and gold trajectories.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config.experiment import ExperimentConfig, SuiteConfig, suite_hash
from environment.catalog import Catalog, load_catalog
from environment.miniworld import SPLITS, EnvInstance, TaskSpec, generate_world
from environment.planner import GoldTrajectory
from environment.tasks import make_task_spec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Splits:
    """Disjoint train/dev/test variation ids of one task type"""
    task_type: int
    train: Tuple[int, ...]
    dev: Tuple[int, ...]
    test: Tuple[int, ...]

    def of(self, split: str) -> Tuple[int, ...]:
        if split not in SPLITS:
            raise ValueError(f"unknown split '{split}'; expected one of {SPLITS}")
        return getattr(self, split)

    def split_of(self, variation: int) -> str:
        for split in SPLITS:
            if variation in getattr(self, split):
                return split
        raise ValueError(f"variation {variation} of task type {self.task_type} is in no split")

    def to_dict(self) -> Dict[str, List[int]]:
        return {split: list(getattr(self, split)) for split in SPLITS}


def split_variations(
    task_type: int,
    counts: Sequence[int],
    seed: int,
    variations: int,
) -> Splits:
    """
    Deterministic disjoint partition of `range(variations)`.

    Raises:
        ValueError: If the counts are malformed or exceed the variations
    """
    if len(counts) != 3 or any(c < 0 for c in counts):
        raise ValueError(f"counts must be three non-negative integers, got {tuple(counts)}")
    if sum(counts) > variations:
        raise ValueError(f"counts {tuple(counts)} need {sum(counts)} variations, task type has {variations}")
    order = [int(v) for v in np.random.default_rng([seed, task_type]).permutation(variations)]
    n_train, n_dev, n_test = counts
    return Splits(
        task_type=task_type,
        train=tuple(sorted(order[:n_train])),
        dev=tuple(sorted(order[n_train:n_train + n_dev])),
        test=tuple(sorted(order[n_train + n_dev:n_train + n_dev + n_test])),
    )


class Suite:
    """
    Lazily generated worlds for every (task type, variation) in the splits.

    Worlds are generated once and cached; `env()` hands out independent
    instances so workers never share mutable state.
    """

    def __init__(self, config: SuiteConfig, world_seed: int, catalog: Optional[Catalog] = None):
        self.config = config
        self.world_seed = world_seed
        self.catalog = catalog or load_catalog(config.catalog)
        for task_type in config.task_types:
            self.catalog.task(task_type)
        self.splits: Dict[int, Splits] = {
            task_type: split_variations(task_type, config.split, world_seed, config.variations)
            for task_type in config.task_types
        }
        self._worlds: Dict[Tuple[int, int], EnvInstance] = {}
        self.hash = ""

    @classmethod
    def from_config(cls, config: ExperimentConfig, catalog: Optional[Catalog] = None) -> "Suite":
        suite = cls(config.suite, config.seeds.world, catalog)
        suite.hash = suite_hash(config)
        return suite

    @property
    def task_types(self) -> List[int]:
        return list(self.config.task_types)

    def variations(self, task_type: int, split: str) -> Tuple[int, ...]:
        if task_type not in self.splits:
            raise ValueError(f"task type {task_type} is not part of this suite")
        return self.splits[task_type].of(split)

    def spec(self, task_type: int, variation: int) -> TaskSpec:
        split = self.splits[task_type].split_of(variation)
        return make_task_spec(task_type, variation, split, self.catalog)

    def _world(self, task_type: int, variation: int) -> EnvInstance:
        key = (task_type, variation)
        if key not in self._worlds:
            self._worlds[key] = generate_world(
                self.spec(task_type, variation),
                self.world_seed,
                catalog=self.catalog,
                min_actions=self.config.min_actions,
                episode_cap=self.config.episode_cap,
                plan_depth=self.config.plan_depth,
            )
        return self._worlds[key]

    def env(self, task_type: int, variation: int) -> EnvInstance:
        """A fresh, independently mutable instance of the world"""
        return self._world(task_type, variation).fresh()

    def gold(self, task_type: int, variation: int) -> GoldTrajectory:
        return self._world(task_type, variation).gold

    def envs(self, split: str, task_types: Optional[Iterable[int]] = None) -> List[EnvInstance]:
        return [
            self.env(task_type, variation)
            for task_type in (task_types if task_types is not None else self.task_types)
            for variation in self.variations(task_type, split)
        ]

    def golds(self, split: str, task_types: Optional[Iterable[int]] = None) -> List[GoldTrajectory]:
        return [
            self.gold(task_type, variation)
            for task_type in (task_types if task_types is not None else self.task_types)
            for variation in self.variations(task_type, split)
        ]

    #########################################
    # Serialization
    #########################################

    def write(self, directory: str) -> List[Path]:
        """
        Write splits, gold trajectories and one canonical JSON file per world.

        Equal seeds give byte-equal files.
        """
        root = Path(directory)
        (root / "worlds").mkdir(parents=True, exist_ok=True)
        written = []

        splits_path = root / "splits.json"
        splits_path.write_text(_canonical({str(t): s.to_dict() for t, s in self.splits.items()}), encoding="utf-8")
        written.append(splits_path)

        gold_path = root / "gold.jsonl"
        with open(gold_path, "w", encoding="utf-8") as handle:
            for task_type in self.task_types:
                for split in SPLITS:
                    for variation in self.variations(task_type, split):
                        env = self._world(task_type, variation)
                        world_path = root / "worlds" / f"t{task_type}_v{variation}.json"
                        world_path.write_text(_canonical({
                            "spec": env.spec.to_dict(),
                            "world_seed": self.world_seed,
                            "world": env.world.to_dict(),
                            "gold": list(env.gold.actions),
                        }), encoding="utf-8")
                        written.append(world_path)
                        record = dict(env.gold.to_dict(), split=split)
                        handle.write(json.dumps(record, sort_keys=True) + "\n")
        written.append(gold_path)
        logger.info(f"wrote suite to {root} ({len(written) - 2} worlds)")
        return written


def _canonical(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"
