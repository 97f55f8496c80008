"""
Guide: contrastive action-relevance model.
"""

from agents.guide.agent import Guide, GuideModel, batch_loss, contrastive_loss, in_batch_duplicates
from agents.guide.dataset import (
    GuideDataset,
    NegativePool,
    TrainingTuple,
    build_negative_pool,
    build_training_tuples,
    gold_examples,
    read_tuples,
    write_tuples,
)
from agents.guide.trainer import GuideHistory, train_guide

__all__ = [
    "Guide",
    "GuideDataset",
    "GuideHistory",
    "GuideModel",
    "NegativePool",
    "TrainingTuple",
    "batch_loss",
    "build_negative_pool",
    "build_training_tuples",
    "contrastive_loss",
    "gold_examples",
    "in_batch_duplicates",
    "read_tuples",
    "train_guide",
    "write_tuples",
]
