"""
Language-guided exploration training loop.

Each step the Guide shortlists the k most task-relevant valid actions; with
probability epsilon the Explorer samples from the full valid set instead.
One Explorer is trained per task type.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Sequence

import numpy as np

from agents.base import BaseRelevanceScorer
from agents.explorer import Explorer, StateText, Transition
from config.experiment import ExperimentConfig, SeedsConfig
from config.settings import DETERMINISTIC
from environment.miniworld import EnvInstance, Observation
from orchestrator.evaluation import GreedyPolicy, evaluate_both
from orchestrator.state_manager import JsonlLog

logger = logging.getLogger(__name__)

Mode = Literal["drrn", "lge-fix", "lge-inc"]
MODES = ("drrn", "lge-fix", "lge-inc")
EVAL_TAIL_FRACTION = 0.1


#########################################
# Epsilon schedules
#########################################

@dataclass(frozen=True)
class EpsilonSchedule:
    kind: Literal["fixed", "increasing"] = "fixed"
    value: float = 0.1
    total_steps: int = 1

    def __post_init__(self):
        if self.kind not in ("fixed", "increasing"):
            raise ValueError(f"unknown epsilon schedule: {self.kind}")
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.value}")
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be positive, got {self.total_steps}")


def epsilon_at(schedule: EpsilonSchedule, step: int) -> float:
    """Fixed schedules are constant; increasing ones ramp linearly from 0 to 1 over total_steps"""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if schedule.kind == "fixed":
        return schedule.value
    return min(step / schedule.total_steps, 1.0)


#########################################
# Run configuration
#########################################

@dataclass(frozen=True)
class LGEConfig:
    mode: str
    k: int
    epsilon: EpsilonSchedule
    steps_per_worker: int
    workers: int = 1
    max_episodes: Optional[int] = None
    eval_every: int = 1000
    eval_variations: int = 10
    eval_full_action_set: bool = False
    checkpoint_every: int = 1000

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.steps_per_worker < 1 or self.workers < 1:
            raise ValueError("steps_per_worker and workers must be positive")

    @property
    def total_steps(self) -> int:
        return self.steps_per_worker * self.workers

    @property
    def uses_guide(self) -> bool:
        return self.mode != "drrn"

    @classmethod
    def from_experiment(cls, config: ExperimentConfig, mode: str, deterministic: bool = DETERMINISTIC) -> "LGEConfig":
        """
        Derive the loop settings for one agent mode.

        drrn is the Explorer alone (epsilon fixed at 1, no Guide); lge-fix uses
        the configured fixed epsilon; lge-inc ramps epsilon from 0 to 1.
        """
        lge = config.lge
        workers = 1 if deterministic else lge.workers
        total = lge.steps_per_worker * workers
        if mode == "drrn":
            schedule = EpsilonSchedule("fixed", 1.0, total)
        elif mode == "lge-fix":
            schedule = EpsilonSchedule("fixed", lge.epsilon.value, total)
        elif mode == "lge-inc":
            schedule = EpsilonSchedule("increasing", lge.epsilon.value, lge.epsilon.total_steps or total)
        else:
            raise ValueError(f"mode must be one of {MODES}, got {mode}")
        return cls(
            mode=mode,
            k=config.guide.k,
            epsilon=schedule,
            steps_per_worker=lge.steps_per_worker,
            workers=workers,
            max_episodes=lge.max_episodes,
            eval_every=lge.eval_every,
            eval_variations=lge.eval_variations,
            eval_full_action_set=lge.eval_full_action_set,
            checkpoint_every=lge.checkpoint_every,
        )


def default_mode(config: ExperimentConfig) -> str:
    return "lge-inc" if config.lge.epsilon.kind == "increasing" else "lge-fix"


#########################################
# Random streams
#########################################

_STREAMS = {"rollout": 0, "mixing": 1, "replay": 2, "eval": 3, "init": 4}


class SeedStreams:
    """
    Independent generators for one task type's run, derived from the seeds
    section so each source of randomness can be varied on its own.
    """

    def __init__(self, seeds: SeedsConfig, task_type: int):
        self.seeds = seeds
        self.task_type = task_type
        self.rollout = self._generator("rollout")
        self.mixing = self._generator("mixing")
        self.replay = self._generator("replay")
        self.eval = self._generator("eval")
        self.init_seed = int(self._sequence("init").generate_state(1)[0])

    def _sequence(self, name: str) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.seeds.rollout, self.task_type, _STREAMS[name]])

    def _generator(self, name: str) -> np.random.Generator:
        return np.random.default_rng(self._sequence(name))


#########################################
# Candidate selection
#########################################

def choose_candidates(
    guide: Optional[BaseRelevanceScorer],
    epsilon: float,
    task: str,
    valid: Sequence[str],
    k: int,
    rng: np.random.Generator,
) -> List[str]:
    """
    With probability 1 - epsilon the Guide's top-k of `valid`, otherwise all
    of `valid`. Candidates keep the valid-action order. Without a Guide the
    full set is returned and no coin is drawn.

    Raises:
        ValueError: If `valid` is empty
    """
    if len(valid) == 0:
        raise ValueError("choose_candidates needs a non-empty valid action set")
    if guide is None:
        return list(valid)
    if rng.random() < epsilon:
        return list(valid)
    keep = set(guide.top_k_indices(task, valid, k))
    return [text for i, text in enumerate(valid) if i in keep]


def final_score(scores: Sequence[float]) -> float:
    """Mean of the last 10% (at least one) of the periodic eval scores"""
    if len(scores) == 0:
        raise ValueError("no eval scores to aggregate")
    tail = max(1, math.ceil(EVAL_TAIL_FRACTION * len(scores)))
    return float(np.mean(scores[-tail:]))


#########################################
# Training
#########################################

@dataclass
class _Slot:
    """One rollout worker: an environment and its running episode"""
    env: EnvInstance
    observation: Observation
    episode: int
    episode_return: float = 0.0
    losses: List[float] = field(default_factory=list)


@dataclass
class LGEResult:
    task_type: int
    mode: str
    steps: int
    episodes: int
    eval_scores: List[float]
    final_score: float
    explorer: Explorer
    resumed_from: Optional[int] = None


def _valid_texts(env: EnvInstance) -> List[str]:
    return [a.text for a in env.valid_actions()]


def _new_episode(envs: Sequence[EnvInstance], rng: np.random.Generator, episode: int) -> _Slot:
    env = envs[int(rng.integers(len(envs)))].fresh()
    return _Slot(env=env, observation=env.reset(), episode=episode)


def train_lge(
    lge: LGEConfig,
    train_envs: Sequence[EnvInstance],
    guide: Optional[BaseRelevanceScorer],
    explorer_factory: Callable[[], Explorer],
    streams: SeedStreams,
    eval_envs: Sequence[EnvInstance] = (),
    train_log: Optional[JsonlLog] = None,
    eval_log: Optional[JsonlLog] = None,
    checkpoint: Optional[str] = None,
    hashes: Optional[Dict[str, str]] = None,
) -> LGEResult:
    """
    Train one task type's Explorer with Guide-pruned candidate sets.

    Worker slots are stepped round-robin; each episode starts on a uniformly
    sampled training variation. A TD update runs once the replay buffer holds
    a full batch, every `update_every` steps. Episodes are logged to
    `train_log` as {step, episode, epsilon, loss, return}; periodic greedy
    evaluations go to `eval_log`.

    Args:
        lge: Loop settings
        train_envs: Training variations of a single task type
        guide: Relevance scorer; ignored in drrn mode
        explorer_factory: Builds a freshly initialized Explorer
        streams: Random streams of this task type
        eval_envs: Variations for periodic evaluation (chosen once)
        train_log, eval_log: JSON-lines sinks
        checkpoint: Explorer checkpoint path; reloaded when present
        hashes: {config_hash, suite_hash} embedded in checkpoints

    Returns:
        LGEResult with eval scores and the trained Explorer

    Raises:
        ValueError: If there are no training variations or they mix task types
        RuntimeError: If an executed action was not valid (loop invariant)
    """
    if not train_envs:
        raise ValueError("train_lge needs at least one training variation")
    task_types = {env.spec.task_type for env in train_envs}
    if len(task_types) != 1:
        raise ValueError(f"train_lge trains one task type at a time, got {sorted(task_types)}")
    task_type = task_types.pop()
    guide = guide if lge.uses_guide else None
    hashes = hashes or {"config_hash": "", "suite_hash": ""}

    explorer = explorer_factory()
    start, episodes, resumed_from = 0, 0, None
    if checkpoint and Path(checkpoint).exists():
        meta = explorer.restore(checkpoint)
        if meta.get("config_hash") == hashes["config_hash"] and meta.get("suite_hash") == hashes["suite_hash"]:
            start = int(meta["step"])
            episodes = int(meta["progress"].get("episodes", 0))
            resumed_from = start
            for log in (train_log, eval_log):
                if log is not None:
                    log.truncate_after(start)
            logger.info(f"t{task_type} {lge.mode}: resuming at step {start} (replay buffer starts empty)")
        else:
            logger.warning(f"{checkpoint} belongs to another config; starting over")
            explorer = explorer_factory()

    eval_scores = [r["score"] for r in eval_log.records()] if (eval_log is not None and resumed_from is not None) else []
    greedy = GreedyPolicy(explorer)
    slots = []
    for _ in range(lge.workers):
        slots.append(_new_episode(train_envs, streams.rollout, episodes))
        episodes += 1

    def save(step: int) -> None:
        if checkpoint:
            explorer.save(checkpoint, step, hashes["config_hash"], hashes["suite_hash"], extra={"episodes": episodes})

    step = start
    for step in range(start, lge.total_steps):
        slot = slots[step % lge.workers]
        epsilon = epsilon_at(lge.epsilon, step)
        task = slot.env.spec.description
        valid = _valid_texts(slot.env)
        candidates = choose_candidates(guide, epsilon, task, valid, lge.k, streams.mixing)

        state = StateText.from_observation(slot.observation)
        text = candidates[explorer.act_train(state, candidates, streams.rollout)]
        if text not in valid:
            raise RuntimeError(f"step {step}: selected '{text}' outside the valid action set")
        observation, reward, done = slot.env.step(slot.env.action(text))
        explorer.remember(Transition(
            state=state,
            action=text,
            reward=reward,
            next_state=StateText.from_observation(observation),
            next_actions=() if done else tuple(_valid_texts(slot.env)),
            done=done,
        ))
        slot.observation = observation
        slot.episode_return += reward

        if explorer.ready() and (step + 1) % explorer.config.update_every == 0:
            slot.losses.append(explorer.learn(streams.replay))

        if done:
            if train_log is not None:
                train_log.append({
                    "step": step + 1,
                    "episode": slot.episode,
                    "epsilon": epsilon,
                    "loss": float(np.mean(slot.losses)) if slot.losses else None,
                    "return": slot.episode_return,
                })
            if lge.max_episodes is not None and episodes >= lge.max_episodes:
                step += 1
                break
            slots[step % lge.workers] = _new_episode(train_envs, streams.rollout, episodes)
            episodes += 1

        if eval_envs and (step + 1) % lge.eval_every == 0:
            pair = evaluate_both(greedy, guide, eval_envs, lge.k, full_action_set=lge.eval_full_action_set)
            record = {"step": step + 1, **pair.to_record()}
            eval_scores.append(record["score"])
            if eval_log is not None:
                eval_log.append(record)
            logger.info(
                f"t{task_type} {lge.mode} step {step + 1}/{lge.total_steps}: eval {record['score']:.3f} "
                f"(pruned {record['score_pruned']}, full {record['score_full']:.3f})"
            )

        if (step + 1) % lge.checkpoint_every == 0:
            save(step + 1)
    else:
        step = lge.total_steps

    save(step)
    score = final_score(eval_scores) if eval_scores else float("nan")
    logger.info(f"t{task_type} {lge.mode}: {step} steps, {episodes} episodes, final score {score:.3f}")
    return LGEResult(task_type, lge.mode, step, episodes, eval_scores, score, explorer, resumed_from)
