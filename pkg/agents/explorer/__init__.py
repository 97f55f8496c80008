"""
Explorer: DRRN Q-learning over text states and actions.
"""

from agents.explorer.agent import (
    Explorer,
    QNetwork,
    action_probabilities,
    select_action_greedy,
    select_action_train,
)
from agents.explorer.learner import td_loss, td_targets, td_update
from agents.explorer.replay import ReplayBuffer, StateText, Transition

__all__ = [
    "Explorer",
    "QNetwork",
    "ReplayBuffer",
    "StateText",
    "Transition",
    "action_probabilities",
    "select_action_greedy",
    "select_action_train",
    "td_loss",
    "td_targets",
    "td_update",
]
