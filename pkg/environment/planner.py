"""
Gold trajectories: breadth-first search over the deterministic state graph,
plus replay helpers used by the Guide datasets and the metrics.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, FrozenSet, List, Optional, Tuple

from environment.miniworld import (
    Action,
    EnvInstance,
    Observation,
    WorldGraph,
    WorldState,
    enumerate_actions,
    is_solved,
    transition,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_DEPTH = 50
DEFAULT_MAX_STATES = 500_000

BASE_TEMPLATES = frozenset({"go_to", "open", "pick_up", "move"})
MILESTONE_TEMPLATES = {
    "active": "activate",
    "measured": "use",
    "circuit": "connect",
    "watered": "pour",
}


class PlanningError(RuntimeError):
    """No solution within the search bounds"""


@dataclass(frozen=True)
class GoldTrajectory:
    task_type: int
    variation: int
    actions: Tuple[str, ...]

    def __len__(self) -> int:
        return len(self.actions)

    def to_dict(self) -> Dict[str, Any]:
        return {"task_type": self.task_type, "variation": self.variation, "actions": list(self.actions)}

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "GoldTrajectory":
        return cls(int(raw["task_type"]), int(raw["variation"]), tuple(raw["actions"]))


#########################################
# Search
#########################################

def _templates_for(world: WorldGraph) -> FrozenSet[str]:
    templates = set(BASE_TEMPLATES)
    if world.goal.focus_targets:
        templates.add("focus_on")
    for milestone in world.goal.milestones:
        if milestone.kind in MILESTONE_TEMPLATES:
            templates.add(MILESTONE_TEMPLATES[milestone.kind])
    return frozenset(templates)


def _useful(world: WorldGraph, state: WorldState, action: Action) -> bool:
    """Drop actions whose preconditions already rule out any effect"""
    objects = world.objects
    template = action.template
    if template == "focus_on":
        return action.slots[0] in world.goal.focus_targets
    if template == "pick_up":
        return objects[action.slots[0]].has("portable")
    if template == "open":
        return objects[action.slots[0]].has("openable") and action.slots[0] not in state.opened
    if template == "activate":
        return objects[action.slots[0]].has("device") and action.slots[0] not in state.active
    if template == "move":
        x, y = action.slots
        return objects[x].has("portable") and objects[y].has("container")
    if template == "pour":
        x, y = action.slots
        return objects[x].has("container") and objects[y].has("container")
    if template == "connect":
        x, y = action.slots
        return objects[x].has("connectable") and objects[y].has("connectable")
    if template == "use":
        return objects[action.slots[0]].has("thermometer")
    return True


def progress_actions(env: EnvInstance, state: WorldState) -> List[Action]:
    """Order-preserving subsequence of the valid actions the search expands"""
    world = env.world
    actions = enumerate_actions(
        world,
        env.catalog,
        state,
        restrict=world.goal.relevant,
        templates=_templates_for(world),
        fixed=("wait",),
    )
    return [a for a in actions if _useful(world, state, a)]


def plan_gold(
    env: EnvInstance,
    max_depth: int = DEFAULT_MAX_DEPTH,
    max_states: int = DEFAULT_MAX_STATES,
) -> GoldTrajectory:
    """
    Shortest action sequence that solves the world, from its initial state.

    Breadth-first over state keys; within a level, successors are expanded in
    canonical action order, so ties resolve to the earliest valid actions.
    Failed states are never expanded.

    Raises:
        PlanningError: If no solution exists within `max_depth` or the search
            visits more than `max_states` states
    """
    world = env.world
    start = world.initial
    parents: Dict[tuple, Optional[Tuple[tuple, str]]] = {start.key(): None}
    frontier: List[WorldState] = [start]

    for depth in range(1, max_depth + 1):
        next_frontier: List[WorldState] = []
        for state in frontier:
            for action in progress_actions(env, state):
                successor, _, _ = transition(world, state, action)
                if successor.failed:
                    continue
                key = successor.key()
                if key in parents:
                    continue
                parents[key] = (state.key(), action.text)
                if is_solved(successor):
                    actions = _unwind(parents, key)
                    logger.debug(
                        f"planned t{env.spec.task_type} v{env.spec.variation}: "
                        f"{len(actions)} actions, {len(parents)} states"
                    )
                    return GoldTrajectory(env.spec.task_type, env.spec.variation, tuple(actions))
                next_frontier.append(successor)
                if len(parents) > max_states:
                    raise PlanningError(f"search exceeded {max_states} states at depth {depth}")
        if not next_frontier:
            break
        frontier = next_frontier

    raise PlanningError(f"no solution within depth {max_depth}")


def _unwind(parents: Dict[tuple, Optional[Tuple[tuple, str]]], key: tuple) -> List[str]:
    actions = []
    link = parents[key]
    while link is not None:
        key, text = link
        actions.append(text)
        link = parents[key]
    return actions[::-1]


#########################################
# Replay
#########################################

@dataclass(frozen=True)
class ReplayStep:
    """One gold step: the observation and valid actions it was chosen from"""
    step: int
    observation: Observation
    valid: Tuple[str, ...]
    action: str
    reward: float


@dataclass(frozen=True)
class ReplayResult:
    steps: Tuple[ReplayStep, ...]
    total_return: float
    solved: bool


def replay(env: EnvInstance, trajectory: GoldTrajectory) -> ReplayResult:
    """
    Replay a gold trajectory from reset on a fresh copy of the world.

    Raises:
        ValueError: If a gold action is not valid at its step
    """
    env = env.fresh()
    observation = env.reset()
    steps = []
    total = 0.0
    for index, text in enumerate(trajectory.actions):
        valid = tuple(a.text for a in env.valid_actions())
        if text not in valid:
            raise ValueError(f"gold action '{text}' is not valid at step {index}")
        next_observation, reward, done = env.step(env.action(text))
        steps.append(ReplayStep(index, observation, valid, text, reward))
        total += reward
        observation = next_observation
        if done and index < len(trajectory.actions) - 1:
            raise ValueError(f"episode ended at step {index} before the trajectory finished")
    return ReplayResult(tuple(steps), total, env.solved)
