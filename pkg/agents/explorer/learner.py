"""
Temporal-difference update for the Explorer.

The bootstrap term max_a' Q(s', a') uses the current network with gradients
stopped; terminal transitions bootstrap from 0.
"""

import logging
from typing import Sequence

import torch

from agents.explorer.agent import QNetwork
from agents.explorer.replay import Transition
from agents.nn_core import AdamState, ParamStore, adam_step, huber

logger = logging.getLogger(__name__)


def td_targets(net: QNetwork, batch: Sequence[Transition], discount: float) -> torch.Tensor:
    """r + discount * max over the stored next valid actions, as a constant (B,) tensor"""
    if not 0.0 < discount <= 1.0:
        raise ValueError(f"discount must be in (0, 1], got {discount}")
    dtype = net.head.weight.dtype
    rewards = torch.tensor([t.reward for t in batch], dtype=dtype)
    bootstrap = torch.zeros(len(batch), dtype=dtype)
    live = [i for i, t in enumerate(batch) if not t.done]
    if live:
        with torch.no_grad():
            h_next = net.encode_states([batch[i].next_state for i in live])
            unique = sorted({a for i in live for a in batch[i].next_actions})
            position = {text: j for j, text in enumerate(unique)}
            h_actions = net.encode_actions(unique)
            for row, i in enumerate(live):
                rows = h_actions[[position[a] for a in batch[i].next_actions]]
                q = net.q_from_encodings(h_next[row].expand(len(rows), -1), rows)
                bootstrap[i] = q.max()
    return rewards + discount * bootstrap


def td_loss(net: QNetwork, batch: Sequence[Transition], targets: torch.Tensor) -> torch.Tensor:
    """Sum of Huber(target - Q(s, a)) over the batch; differentiable in the network"""
    h_s = net.encode_states([t.state for t in batch])
    actions = [t.action for t in batch]
    unique = sorted(set(actions))
    position = {text: j for j, text in enumerate(unique)}
    h_a = net.encode_actions(unique)[[position[a] for a in actions]]
    q = net.q_from_encodings(h_s, h_a)
    return huber(targets - q).sum()


def td_update(net: QNetwork, adam: AdamState, batch: Sequence[Transition], discount: float) -> float:
    """
    One Adam step on the summed Huber TD loss.

    Raises:
        ValueError: If the batch is empty
        RuntimeError: If the loss is NaN or infinite
    """
    if len(batch) == 0:
        raise ValueError("td_update needs a non-empty batch")
    targets = td_targets(net, batch, discount)
    params = adam.params
    params.zero_grad()
    loss = td_loss(net, batch, targets)
    if not torch.isfinite(loss):
        raise RuntimeError(f"TD loss diverged: {loss.item()}")
    loss.backward()
    adam_step(adam, params)
    return loss.item()
