"""
Contrastive training of one Guide across all task types.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from agents.guide.agent import Guide, GuideModel, batch_loss
from agents.guide.dataset import GuideDataset, TrainingTuple
from agents.nn_core import AdamState, ParamStore, adam_step
from agents.textcodec import Vocabulary, build_vocab
from config.experiment import GuideConfig

logger = logging.getLogger(__name__)

TupleSource = Union[GuideDataset, Sequence[TrainingTuple]]


@dataclass
class GuideHistory:
    initial_loss: float = math.nan
    epoch_losses: List[float] = field(default_factory=list)  # mean loss per tuple
    tuples_per_epoch: List[int] = field(default_factory=list)

    def to_dict(self):
        return {
            "initial_loss": self.initial_loss,
            "epoch_losses": list(self.epoch_losses),
            "tuples_per_epoch": list(self.tuples_per_epoch),
        }


def _epoch_tuples(source: TupleSource, rng: np.random.Generator) -> List[TrainingTuple]:
    if isinstance(source, GuideDataset):
        return source.epoch(rng)
    return list(source)


def mean_loss(model: GuideModel, tuples: Sequence[TrainingTuple], batch_size: int) -> float:
    """Mean per-tuple loss over fixed batches, without gradients"""
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(tuples), batch_size):
            total += batch_loss(model, tuples[start:start + batch_size]).item()
    return total / len(tuples)


def train_guide(
    source: TupleSource,
    config: GuideConfig,
    vocab: Optional[Vocabulary] = None,
    seed: int = 0,
    dtype: torch.dtype = torch.float32,
) -> Tuple[Guide, GuideHistory]:
    """
    Train a Guide with Adam on the in-batch contrastive loss.

    Args:
        source: A GuideDataset (negatives resampled every epoch) or a fixed tuple list
        config: Guide hyperparameters
        vocab: Vocabulary; built from the training texts when omitted
        seed: Shuffle-stream seed; also seeds parameter initialization
        dtype: Parameter precision

    Returns:
        (frozen Guide, training history)

    Raises:
        ValueError: If there are no tuples
        RuntimeError: If the loss becomes NaN or infinite
    """
    rng = np.random.default_rng(seed)
    first = _epoch_tuples(source, rng)
    if not first:
        raise ValueError("train_guide needs at least one training tuple")
    if vocab is None:
        corpus = source.corpus() if isinstance(source, GuideDataset) else (
            text for t in first for text in (t.tau, t.pos, t.neg)
        )
        vocab = build_vocab(corpus)

    torch.manual_seed(seed)
    model = GuideModel(
        vocab, hidden=config.hidden, temperature=config.temperature,
        max_len=config.max_len, task_max_len=config.task_max_len, dtype=dtype,
    )
    params = ParamStore(model)
    adam = AdamState(params, lr=config.lr)
    history = GuideHistory(initial_loss=mean_loss(model, first, config.batch_size))
    logger.info(f"guide: {params.size} parameters, {len(first)} tuples, initial loss {history.initial_loss:.4f}")

    tuples = first
    for epoch in range(config.epochs):
        if epoch > 0:
            tuples = _epoch_tuples(source, rng)
        order = rng.permutation(len(tuples))
        total = 0.0
        model.train()
        for start in range(0, len(order), config.batch_size):
            batch = [tuples[i] for i in order[start:start + config.batch_size]]
            params.zero_grad()
            loss = batch_loss(model, batch)
            if not torch.isfinite(loss):
                raise RuntimeError(f"guide loss diverged at epoch {epoch + 1}: {loss.item()}")
            loss.backward()
            adam_step(adam, params)
            total += loss.item()
        history.epoch_losses.append(total / len(tuples))
        history.tuples_per_epoch.append(len(tuples))
        logger.info(f"guide epoch {epoch + 1}/{config.epochs}: mean loss {history.epoch_losses[-1]:.4f}")

    return Guide(model).freeze(), history
