"""
Replay memory with a priority partition for rewarded transitions.
"""

import math
from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Tuple

import numpy as np


@dataclass(frozen=True)
class StateText:
    """The three state texts the Explorer encodes: last observation, inventory, look"""
    obs: str
    inventory: str
    look: str

    def __post_init__(self):
        if not (self.obs and self.inventory and self.look):
            raise ValueError("state texts must be non-empty")

    @classmethod
    def from_observation(cls, observation) -> "StateText":
        return cls(observation.obs, observation.inventory, observation.look)


@dataclass(frozen=True)
class Transition:
    state: StateText
    action: str
    reward: float
    next_state: StateText
    next_actions: Tuple[str, ...]
    done: bool
    id: int = -1

    def __post_init__(self):
        if not self.done and not self.next_actions:
            raise ValueError("a non-terminal transition needs its next valid actions")


class ReplayBuffer:
    """
    Two FIFO partitions sharing one capacity: transitions with positive
    reward and the rest. A full buffer evicts the oldest stored transition,
    whichever partition holds it.
    """

    def __init__(self, capacity: int, priority_fraction: float = 0.5):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        if not 0.0 <= priority_fraction <= 1.0:
            raise ValueError(f"priority_fraction must be in [0, 1], got {priority_fraction}")
        self.capacity = capacity
        self.priority_fraction = priority_fraction
        self.priority: Deque[Transition] = deque()
        self.regular: Deque[Transition] = deque()
        self._next_id = 0
        self._live = set()

    def __len__(self) -> int:
        return len(self.priority) + len(self.regular)

    def __contains__(self, transition_id: int) -> bool:
        return transition_id in self._live

    def store(self, transition: Transition) -> Transition:
        """Append a transition, assigning it a buffer id; returns the stored record"""
        stored = Transition(
            transition.state, transition.action, transition.reward,
            transition.next_state, tuple(transition.next_actions), transition.done, self._next_id,
        )
        self._next_id += 1
        target = self.priority if stored.reward > 0 else self.regular
        if len(self) >= self.capacity:
            self._live.discard(self._oldest_partition().popleft().id)
        target.append(stored)
        self._live.add(stored.id)
        return stored

    def _oldest_partition(self) -> Deque[Transition]:
        # ids grow with insertion order, so the partition heads compare by age
        if not self.priority:
            return self.regular
        if not self.regular:
            return self.priority
        return self.priority if self.priority[0].id < self.regular[0].id else self.regular

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Transition]:
        """
        ceil(rho * batch) draws from the priority partition and the rest from
        the regular one, with replacement; an empty partition hands its share
        to the other.

        Raises:
            ValueError: If the buffer is empty or batch_size < 1
        """
        if batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {batch_size}")
        if not len(self):
            raise ValueError("cannot sample from an empty replay buffer")
        n_priority = math.ceil(self.priority_fraction * batch_size)
        if not self.priority:
            n_priority = 0
        elif not self.regular:
            n_priority = batch_size
        batch = [self.priority[int(i)] for i in rng.integers(len(self.priority), size=n_priority)] if n_priority else []
        n_regular = batch_size - n_priority
        if n_regular:
            batch.extend(self.regular[int(i)] for i in rng.integers(len(self.regular), size=n_regular))
        return batch
