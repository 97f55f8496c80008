"""
The Explorer: a DRRN Q-network over (state, action) text pairs with a
softmax training policy and a greedy evaluation policy.
"""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

from agents.explorer.replay import ReplayBuffer, StateText, Transition
from agents.nn_core import (
    AdamState,
    ParamStore,
    SequenceEncoder,
    init_parameters,
    linear,
    load_checkpoint,
    nonempty,
    save_checkpoint,
    softmax,
)
from agents.textcodec import Vocabulary, encode
from config.experiment import ExplorerConfig

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "explorer"


class QNetwork(nn.Module):
    """
    Q(s, a) = W^T (h_s : h_a) + b with h_s = (f_o(obs) : f_i(inventory) : f_l(look)).

    Four GRUs share one embedding table.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        hidden: int = 128,
        state_max_len: int = 96,
        action_max_len: int = 12,
        dtype: torch.dtype = torch.float32,
    ):
        super().__init__()
        self.vocab = vocab
        self.hidden = hidden
        self.state_max_len = state_max_len
        self.action_max_len = action_max_len
        self.embedding = nn.Embedding(len(vocab), hidden)
        self.obs_encoder = SequenceEncoder(self.embedding, hidden)
        self.inventory_encoder = SequenceEncoder(self.embedding, hidden)
        self.look_encoder = SequenceEncoder(self.embedding, hidden)
        self.action_encoder = SequenceEncoder(self.embedding, hidden)
        self.head = nn.Linear(4 * hidden, 1)
        init_parameters(self)
        self.to(dtype)

    def _ids(self, text: str, max_len: int) -> List[int]:
        return nonempty(encode(text, self.vocab, max_len))

    def encode_states(self, states: Sequence[StateText]) -> torch.Tensor:
        """(B, 3H) state representations"""
        parts = []
        for field, encoder in (
            ("obs", self.obs_encoder),
            ("inventory", self.inventory_encoder),
            ("look", self.look_encoder),
        ):
            parts.append(encoder([self._ids(getattr(s, field), self.state_max_len) for s in states]))
        return torch.cat(parts, dim=-1)

    def encode_state(self, obs: str, inventory: str, look: str) -> torch.Tensor:
        """(3H,) representation of one state"""
        return self.encode_states([StateText(obs, inventory, look)])[0]

    def encode_actions(self, actions: Sequence[str]) -> torch.Tensor:
        return self.action_encoder([self._ids(a, self.action_max_len) for a in actions])

    def q_from_encodings(self, h_s: torch.Tensor, h_a: torch.Tensor) -> torch.Tensor:
        """Q for paired rows of (B, 3H) states and (B, H) actions, shape (B,)"""
        return linear(self.head.weight, self.head.bias, torch.cat([h_s, h_a], dim=-1)).squeeze(-1)

    def q_values(self, h_s: torch.Tensor, actions: Sequence[str]) -> torch.Tensor:
        """Q of one encoded state against every action; equal texts are encoded once"""
        if h_s.shape[-1] != 3 * self.hidden:
            raise ValueError(f"state encoding has size {h_s.shape[-1]}, expected {3 * self.hidden}")
        unique = sorted(set(actions))
        position = {text: i for i, text in enumerate(unique)}
        h_a = self.encode_actions(unique)[[position[a] for a in actions]]
        return self.q_from_encodings(h_s.expand(len(actions), -1), h_a)

    def q_value(self, h_s: torch.Tensor, action: str) -> torch.Tensor:
        return self.q_values(h_s, [action])[0]


#########################################
# Policies
#########################################

def _candidate_q(net: QNetwork, state: StateText, candidates: Sequence[str]) -> torch.Tensor:
    if len(candidates) == 0:
        raise ValueError("action selection needs at least one candidate")
    with torch.no_grad():
        return net.q_values(net.encode_states([state])[0], candidates).double()


def action_probabilities(net: QNetwork, state: StateText, candidates: Sequence[str]) -> np.ndarray:
    return softmax(_candidate_q(net, state, candidates)).numpy()


def select_action_train(net: QNetwork, state: StateText, candidates: Sequence[str], rng: np.random.Generator) -> int:
    """Index of a candidate sampled from softmax(Q)"""
    probabilities = action_probabilities(net, state, candidates)
    if len(candidates) == 1:
        return 0
    return int(rng.choice(len(candidates), p=probabilities))


def select_action_greedy(net: QNetwork, state: StateText, candidates: Sequence[str]) -> int:
    """Index of the highest-Q candidate; ties go to the lowest index"""
    return int(np.argmax(_candidate_q(net, state, candidates).numpy()))


#########################################
# Explorer
#########################################

class Explorer:
    """
    One task type's Q-network with its optimizer and replay memory.

    Usage:
        >>> explorer = Explorer(vocab, config, task_type=2)
        >>> index = explorer.act_train(state, candidate_texts, rng)
    """

    def __init__(
        self,
        vocab: Vocabulary,
        config: ExplorerConfig,
        task_type: int,
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
    ):
        self.config = config
        self.task_type = task_type
        torch.manual_seed(seed)
        self.net = QNetwork(
            vocab,
            hidden=config.hidden,
            state_max_len=config.state_max_len,
            action_max_len=config.action_max_len,
            dtype=dtype,
        )
        self.params = ParamStore(self.net)
        self.adam = AdamState(self.params, lr=config.lr)
        self.buffer = ReplayBuffer(config.memory_size, config.priority_fraction)
        self.updates = 0

    def act_train(self, state: StateText, candidates: Sequence[str], rng: np.random.Generator) -> int:
        return select_action_train(self.net, state, candidates, rng)

    def act_greedy(self, state: StateText, candidates: Sequence[str]) -> int:
        return select_action_greedy(self.net, state, candidates)

    def remember(self, transition: Transition) -> Transition:
        return self.buffer.store(transition)

    def ready(self) -> bool:
        return len(self.buffer) >= self.config.batch_size

    def learn(self, rng: np.random.Generator) -> float:
        from agents.explorer.learner import td_update

        batch = self.buffer.sample(self.config.batch_size, rng)
        loss = td_update(self.net, self.adam, batch, self.config.discount)
        self.updates += 1
        return loss

    #########################################
    # Persistence
    #########################################

    def save(self, path: str, step: int, config_hash: str, suite_hash: str, extra: Optional[Dict] = None) -> None:
        tensors = {f"model.{name}": value for name, value in self.net.state_dict().items()}
        tensors["optimizer"] = self.adam.state_dict()
        tensors["vocab"] = self.net.vocab.tokens
        tensors["progress"] = dict(extra or {}, updates=self.updates, task_type=self.task_type)
        save_checkpoint(path, tensors, CHECKPOINT_KIND, step, config_hash, suite_hash)

    def restore(self, path: str) -> Dict:
        """
        Load weights, optimizer state and progress counters; returns the sidecar.

        Raises:
            FileNotFoundError: If the checkpoint is missing
            ValueError: If it belongs to another task type or vocabulary
        """
        tensors, meta = load_checkpoint(path, kind=CHECKPOINT_KIND)
        progress = tensors["progress"]
        if int(progress["task_type"]) != self.task_type:
            raise ValueError(f"{path} holds task type {progress['task_type']}, expected {self.task_type}")
        if list(tensors["vocab"]) != self.net.vocab.tokens:
            raise ValueError(f"{path} was trained with a different vocabulary")
        state = {name[len("model."):]: value for name, value in tensors.items() if name.startswith("model.")}
        self.net.load_state_dict(state)
        self.adam.load_state_dict(tensors["optimizer"])
        self.updates = int(progress["updates"])
        meta["progress"] = progress
        return meta

    @classmethod
    def load(cls, path: str, config: ExplorerConfig, dtype: torch.dtype = torch.float32) -> "Explorer":
        tensors, _ = load_checkpoint(path, kind=CHECKPOINT_KIND)
        explorer = cls(Vocabulary(tensors["vocab"]), config, int(tensors["progress"]["task_type"]), dtype=dtype)
        explorer.restore(path)
        return explorer
