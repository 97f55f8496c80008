"""
The Guide: a shared GRU encoder that embeds task descriptions and actions
into one space and scores relevance with temperature-scaled cosine similarity.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from agents.base import ActionLike, BaseRelevanceScorer, action_texts
from agents.nn_core import SequenceEncoder, init_parameters, load_checkpoint, nonempty, save_checkpoint
from agents.textcodec import Vocabulary, encode

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "guide"


class GuideModel(nn.Module):
    """
    One embedding table and one GRU, used for both task descriptions and
    actions. Descriptions and actions are truncated to their own lengths.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        hidden: int = 128,
        temperature: float = 0.05,
        max_len: int = 12,
        task_max_len: int = 64,
        dtype: torch.dtype = torch.float32,
    ):
        super().__init__()
        if temperature <= 0:
            raise ValueError(f"temperature must be positive, got {temperature}")
        self.vocab = vocab
        self.hidden = hidden
        self.temperature = temperature
        self.max_len = max_len
        self.task_max_len = task_max_len
        self.embedding = nn.Embedding(len(vocab), hidden)
        self.encoder = SequenceEncoder(self.embedding, hidden)
        init_parameters(self)
        self.to(dtype)

    def token_ids(self, text: str, max_len: Optional[int] = None) -> List[int]:
        return nonempty(encode(text, self.vocab, max_len or self.max_len))

    def embed(self, texts: Sequence[str], max_len: Optional[int] = None) -> torch.Tensor:
        """(B, H) raw embeddings, differentiable; action length by default"""
        return self.encoder([self.token_ids(text, max_len) for text in texts])

    def embed_tasks(self, texts: Sequence[str]) -> torch.Tensor:
        return self.embed(texts, self.task_max_len)

    def cosine(self, left: torch.Tensor, right: torch.Tensor) -> torch.Tensor:
        """
        Pairwise cosine between rows of `left` (A, H) and `right` (B, H).

        Raises:
            ValueError: If any embedding has zero norm
        """
        left_norm = left.norm(dim=-1, keepdim=True)
        right_norm = right.norm(dim=-1, keepdim=True)
        if (left_norm == 0).any() or (right_norm == 0).any():
            raise ValueError("cosine similarity of a zero-norm embedding")
        return (left / left_norm) @ (right / right_norm).T

    def similarity(self, task: str, action: str) -> float:
        """s(task, action) = cosine(embed(task), embed(action)) / temperature"""
        if not task or not action:
            raise ValueError("similarity needs two non-empty strings")
        with torch.no_grad():
            return float(self.cosine(self.embed_tasks([task]), self.embed([action]))[0, 0]) / self.temperature

    def config(self) -> Dict[str, float]:
        return {
            "hidden": self.hidden,
            "temperature": self.temperature,
            "max_len": self.max_len,
            "task_max_len": self.task_max_len,
        }


#########################################
# Contrastive Objective
#########################################

def contrastive_loss(
    positive_scores: torch.Tensor,
    negative_scores: torch.Tensor,
    exclude: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    Summed in-batch contrastive loss from (N, N) score matrices.

    Row i holds s(task_i, pos_j) and s(task_i, neg_j); the target of row i is
    its own positive, the other 2N - 1 entries are its negatives. `exclude`
    is an optional (N, 2N) boolean mask of entries left out of row i's
    denominator; the targets on the diagonal can not be excluded.
    """
    n = positive_scores.shape[0]
    if n == 0:
        raise ValueError("contrastive loss of an empty batch")
    if positive_scores.shape != (n, n) or negative_scores.shape != (n, n):
        raise ValueError("score matrices must both be (N, N)")
    logits = torch.cat([positive_scores, negative_scores], dim=1)
    if exclude is not None:
        if exclude.shape != (n, 2 * n):
            raise ValueError(f"exclude mask must be ({n}, {2 * n}), got {tuple(exclude.shape)}")
        if exclude[:, :n].diagonal().any():
            raise ValueError("a row's own positive can not be excluded")
        logits = logits.masked_fill(exclude, float("-inf"))
    targets = torch.arange(n)
    return F.cross_entropy(logits, targets, reduction="sum")


def in_batch_duplicates(batch: Sequence["TrainingTuple"]) -> torch.Tensor:
    """
    (N, 2N) mask of in-batch candidates that are not negatives for row i:
    positives of other tuples with the same task description, and any
    candidate whose text equals row i's positive.
    """
    n = len(batch)
    exclude = torch.zeros(n, 2 * n, dtype=torch.bool)
    for i, row in enumerate(batch):
        for j, other in enumerate(batch):
            if j != i and (other.tau == row.tau or other.pos == row.pos):
                exclude[i, j] = True
            if other.neg == row.pos:
                exclude[i, n + j] = True
    return exclude


def batch_loss(model: GuideModel, batch: Sequence["TrainingTuple"]) -> torch.Tensor:
    """
    Contrastive loss of a batch of (task, positive, negative) tuples.
    Each unique text is encoded once; in-batch duplicates of a row's own
    relevant actions are left out of its denominator.
    """
    if len(batch) == 0:
        raise ValueError("batch_loss needs at least one tuple")
    tasks = sorted({t.tau for t in batch})
    actions = sorted({t.pos for t in batch} | {t.neg for t in batch})
    task_index = {text: i for i, text in enumerate(tasks)}
    action_index = {text: i for i, text in enumerate(actions)}
    task_rows = F.normalize(model.embed_tasks(tasks), dim=-1)
    action_rows = F.normalize(model.embed(actions), dim=-1)

    tau = task_rows[[task_index[t.tau] for t in batch]]
    pos = action_rows[[action_index[t.pos] for t in batch]]
    neg = action_rows[[action_index[t.neg] for t in batch]]
    return contrastive_loss(
        tau @ pos.T / model.temperature,
        tau @ neg.T / model.temperature,
        exclude=in_batch_duplicates(batch),
    )


#########################################
# Scorer
#########################################

class Guide(BaseRelevanceScorer):
    """
    Relevance scorer backed by a GuideModel.

    Usage:
        >>> guide = Guide(model).freeze()
        >>> shortlist = guide.top_k(spec.description, env.valid_actions(), k=20)
    """

    def __init__(self, model: GuideModel):
        self.model = model
        self._frozen = False
        self._cache: Dict[Tuple[str, str], torch.Tensor] = {}
        self.meta: Optional[Dict] = None

    def get_scorer_name(self) -> str:
        return "guide"

    def freeze(self) -> "Guide":
        """Switch to inference; unit embeddings are cached across calls from now on"""
        self.model.eval()
        for param in self.model.parameters():
            param.requires_grad_(False)
        self._frozen = True
        self._cache.clear()
        return self

    def _unit_embeddings(self, texts: Sequence[str], kind: str = "action") -> torch.Tensor:
        cache = self._cache if self._frozen else {}
        missing = sorted({t for t in texts if (kind, t) not in cache})
        if missing:
            with torch.no_grad():
                embedded = self.model.embed_tasks(missing) if kind == "task" else self.model.embed(missing)
            norms = embedded.norm(dim=-1, keepdim=True)
            if (norms == 0).any():
                raise ValueError("cosine similarity of a zero-norm embedding")
            for text, row in zip(missing, embedded / norms):
                cache[(kind, text)] = row
        return torch.stack([cache[(kind, t)] for t in texts])

    def cosines(self, task: str, actions: Sequence[ActionLike]) -> np.ndarray:
        texts = action_texts(actions)
        if not task:
            raise ValueError("task description must be non-empty")
        if not texts:
            return np.zeros(0, dtype=np.float64)
        task_row = self._unit_embeddings([task], kind="task")
        unique = sorted(set(texts))
        action_rows = self._unit_embeddings(unique)
        by_text = dict(zip(unique, (action_rows @ task_row[0]).double().tolist()))
        return np.array([by_text[t] for t in texts], dtype=np.float64)

    def score_actions(self, task: str, actions: Sequence[ActionLike]) -> np.ndarray:
        return self.cosines(task, actions) / self.model.temperature

    def normalized_scores(self, task: str, actions: Sequence[ActionLike]) -> np.ndarray:
        return (self.cosines(task, actions) + 1.0) / 2.0

    #########################################
    # Persistence
    #########################################

    def save(self, path: str, step: int, config_hash: str, suite_hash: str) -> None:
        tensors = {f"model.{name}": value for name, value in self.model.state_dict().items()}
        tensors["vocab"] = self.model.vocab.tokens
        tensors["hyper"] = self.model.config()
        save_checkpoint(path, tensors, CHECKPOINT_KIND, step, config_hash, suite_hash)
        logger.info(f"saved guide checkpoint to {path}")

    @classmethod
    def load(cls, path: str, dtype: torch.dtype = torch.float32) -> "Guide":
        tensors, meta = load_checkpoint(path, kind=CHECKPOINT_KIND)
        hyper = tensors["hyper"]
        model = GuideModel(
            Vocabulary(tensors["vocab"]),
            hidden=int(hyper["hidden"]),
            temperature=float(hyper["temperature"]),
            max_len=int(hyper["max_len"]),
            task_max_len=int(hyper["task_max_len"]),
            dtype=dtype,
        )
        state = {name[len("model."):]: value for name, value in tensors.items() if name.startswith("model.")}
        model.load_state_dict(state)
        model.to(dtype)
        guide = cls(model).freeze()
        guide.meta = meta
        return guide
