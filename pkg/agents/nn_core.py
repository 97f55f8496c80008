"""
Neural building blocks shared by the Guide and the Explorer.

Token embeddings, single-layer GRU sequence encoders, linear heads, softmax,
Huber loss, Adam, a finite-difference gradient checker and the checkpoint
format. Everything runs on CPU with torch.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils import parameters_to_vector, vector_to_parameters
from torch.nn.utils.rnn import pack_padded_sequence, pad_sequence

from agents.textcodec import PAD_ID, UNK_ID

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
EMBEDDING_INIT = 0.05


#########################################
# Initialization
#########################################

def init_parameters(module: nn.Module) -> nn.Module:
    """
    Uniform(+-1/sqrt(H)) recurrent and linear weights, zero biases,
    Uniform(+-0.05) embeddings. Draws from torch's global generator.
    """
    for child in module.modules():
        if isinstance(child, nn.Embedding):
            nn.init.uniform_(child.weight, -EMBEDDING_INIT, EMBEDDING_INIT)
        elif isinstance(child, nn.GRU):
            bound = 1.0 / math.sqrt(child.hidden_size)
            for name, param in child.named_parameters():
                if name.startswith("bias"):
                    nn.init.zeros_(param)
                else:
                    nn.init.uniform_(param, -bound, bound)
        elif isinstance(child, nn.Linear):
            bound = 1.0 / math.sqrt(child.in_features)
            nn.init.uniform_(child.weight, -bound, bound)
            if child.bias is not None:
                nn.init.zeros_(child.bias)
    return module


#########################################
# Encoders
#########################################

class SequenceEncoder(nn.Module):
    """
    Single-layer GRU over token embeddings; the final hidden state (h_0 = 0)
    represents the sequence. The embedding table may be shared.
    """

    def __init__(self, embedding: nn.Embedding, hidden: int):
        super().__init__()
        self.embedding = embedding
        self.gru = nn.GRU(embedding.embedding_dim, hidden, num_layers=1, batch_first=True)
        self.hidden = hidden

    def forward(self, batch: Sequence[Sequence[int]]) -> torch.Tensor:
        """Encode a batch of id sequences to a (B, H) tensor"""
        if len(batch) == 0:
            raise ValueError("cannot encode an empty batch")
        lengths = [len(ids) for ids in batch]
        if min(lengths) == 0:
            raise ValueError("cannot encode an empty token sequence")
        padded = pad_sequence(
            [torch.tensor(ids, dtype=torch.long) for ids in batch],
            batch_first=True,
            padding_value=PAD_ID,
        )
        embedded = self.embedding(padded)
        packed = pack_padded_sequence(embedded, torch.tensor(lengths), batch_first=True, enforce_sorted=False)
        _, h_n = self.gru(packed)
        return h_n[-1]


def gru_encode(encoder: SequenceEncoder, ids: Sequence[int]) -> torch.Tensor:
    """
    Final hidden state of one id sequence, shape (H,).

    Raises:
        ValueError: If the sequence is empty
    """
    if len(ids) == 0:
        raise ValueError("cannot encode an empty token sequence")
    return encoder([list(ids)])[0]


def nonempty(ids: List[int]) -> List[int]:
    """Texts that tokenize to nothing are encoded as a single UNK"""
    return ids if ids else [UNK_ID]


def linear(weight: torch.Tensor, bias: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """
    W^T x + b with W stored (out, in) as in nn.Linear.

    Raises:
        ValueError: On dimension mismatch
    """
    if x.shape[-1] != weight.shape[-1]:
        raise ValueError(f"input dimension {x.shape[-1]} does not match weight {tuple(weight.shape)}")
    if bias.shape[-1] != weight.shape[0]:
        raise ValueError(f"bias dimension {bias.shape[-1]} does not match weight {tuple(weight.shape)}")
    return F.linear(x, weight, bias)


#########################################
# Scalar Functions
#########################################

def softmax(scores: Union[Sequence[float], torch.Tensor]) -> torch.Tensor:
    """
    Max-subtracted softmax over a 1-D score vector.

    Raises:
        ValueError: If scores are empty or contain NaN/inf
    """
    values = scores if isinstance(scores, torch.Tensor) else torch.tensor(list(scores), dtype=torch.float64)
    if values.numel() == 0:
        raise ValueError("softmax of an empty sequence")
    if not torch.isfinite(values).all():
        raise ValueError("softmax input contains non-finite values")
    shifted = values - values.max()
    return torch.softmax(shifted, dim=-1)


def huber(delta: Union[float, torch.Tensor]) -> Union[float, torch.Tensor]:
    """1/2 d^2 for |d| < 1, |d| - 1/2 otherwise"""
    if isinstance(delta, torch.Tensor):
        return F.huber_loss(delta, torch.zeros_like(delta), reduction="none", delta=1.0)
    magnitude = abs(delta)
    return 0.5 * delta * delta if magnitude < 1.0 else magnitude - 0.5


#########################################
# Parameters and Adam
#########################################

class ParamStore:
    """Named view of a module's parameters with a flat accessor and gradient slots"""

    def __init__(self, module: nn.Module):
        self.module = module

    def named(self) -> Dict[str, torch.Tensor]:
        return dict(self.module.named_parameters())

    def census(self) -> Dict[str, int]:
        return {name: param.numel() for name, param in self.module.named_parameters()}

    @property
    def size(self) -> int:
        return sum(self.census().values())

    def flat(self) -> torch.Tensor:
        return parameters_to_vector(self.module.parameters()).detach().clone()

    def load_flat(self, vector: torch.Tensor) -> None:
        if vector.numel() != self.size:
            raise ValueError(f"flat vector has {vector.numel()} entries, parameters have {self.size}")
        with torch.no_grad():
            vector_to_parameters(vector, self.module.parameters())

    def grads(self) -> Dict[str, torch.Tensor]:
        """Gradient of every parameter; zeros where backward never reached"""
        return {
            name: param.grad.detach().clone() if param.grad is not None else torch.zeros_like(param)
            for name, param in self.module.named_parameters()
        }

    def zero_grad(self) -> None:
        self.module.zero_grad(set_to_none=False)


class AdamState:
    """Adam moments and step counter for one ParamStore"""

    def __init__(self, params: ParamStore, lr: float, betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.optimizer = torch.optim.Adam(params.module.parameters(), lr=lr, betas=betas, eps=eps)
        self.steps = 0

    def state_dict(self) -> Dict[str, Any]:
        return {"optimizer": self.optimizer.state_dict(), "steps": self.steps}

    def load_state_dict(self, state: Dict[str, Any]) -> None:
        self.optimizer.load_state_dict(state["optimizer"])
        self.steps = int(state["steps"])


def adam_step(state: AdamState, params: ParamStore, grads: Optional[Dict[str, torch.Tensor]] = None) -> None:
    """
    One bias-corrected Adam update in place.

    With `grads=None` the gradients already accumulated on the parameters are used.

    Raises:
        ValueError: If a gradient is missing or shaped differently from its parameter
    """
    if state.params.module is not params.module:
        raise ValueError("AdamState belongs to a different parameter store")
    if grads is not None:
        named = params.named()
        if set(grads) != set(named):
            raise ValueError(f"gradient names {sorted(grads)} do not match parameters {sorted(named)}")
        for name, param in named.items():
            if grads[name].shape != param.shape:
                raise ValueError(f"gradient for {name} has shape {tuple(grads[name].shape)}, expected {tuple(param.shape)}")
            param.grad = grads[name].to(param.dtype).clone()
    state.optimizer.step()
    state.steps += 1


#########################################
# Gradient Checking
#########################################

def grad_check(
    loss_fn: Callable[[], torch.Tensor],
    params: ParamStore,
    epsilon: float = 1e-5,
    samples: int = 200,
    seed: int = 0,
) -> float:
    """
    Compare autograd gradients with central finite differences.

    Samples up to `samples` coordinates per parameter tensor and returns the
    maximum of |a - n| / max(|a|, |n|, 1e-8).

    Raises:
        ValueError: If any parameter is not float64
        RuntimeError: If the loss is not finite
    """
    named = params.named()
    for name, param in named.items():
        if param.dtype != torch.float64:
            raise ValueError(f"grad_check needs float64 parameters; {name} is {param.dtype}")

    params.zero_grad()
    loss = loss_fn()
    if not torch.isfinite(loss):
        raise RuntimeError(f"non-finite loss {loss.item()}")
    loss.backward()
    analytic = params.grads()

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, param in named.items():
        flat = param.data.view(-1)
        chosen = rng.choice(flat.numel(), size=min(samples, flat.numel()), replace=False)
        tensor_worst = 0.0
        for index in chosen:
            index = int(index)
            original = flat[index].item()
            with torch.no_grad():
                flat[index] = original + epsilon
                plus = loss_fn().item()
                flat[index] = original - epsilon
                minus = loss_fn().item()
                flat[index] = original
            if not (math.isfinite(plus) and math.isfinite(minus)):
                raise RuntimeError(f"non-finite loss while perturbing {name}[{index}]")
            numeric = (plus - minus) / (2 * epsilon)
            exact = analytic[name].view(-1)[index].item()
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8)
            tensor_worst = max(tensor_worst, error)
        logger.debug(f"grad_check {name}: max rel err {tensor_worst:.2e} over {len(chosen)} coordinates")
        worst = max(worst, tensor_worst)
    return worst


#########################################
# Checkpoints
#########################################

def save_checkpoint(
    path: str,
    tensors: Dict[str, Any],
    kind: str,
    step: int,
    config_hash: str,
    suite_hash: str,
) -> Path:
    """
    Write `path` (torch blob of named tensors with shape headers) and
    `path.json` (metadata sidecar).
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    shapes = {name: list(value.shape) for name, value in tensors.items() if isinstance(value, torch.Tensor)}
    torch.save({"format_version": CHECKPOINT_FORMAT_VERSION, "tensors": tensors, "shapes": shapes}, target)
    sidecar = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": kind,
        "step": step,
        "config_hash": config_hash,
        "suite_hash": suite_hash,
    }
    Path(f"{target}.json").write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return target


def read_sidecar(path: str) -> Dict[str, Any]:
    sidecar = Path(f"{path}.json")
    if not sidecar.exists():
        raise FileNotFoundError(f"checkpoint metadata not found: {sidecar}")
    return json.loads(sidecar.read_text(encoding="utf-8"))


def load_checkpoint(path: str, kind: Optional[str] = None) -> Tuple[Dict[str, Any], Dict[str, Any]]:
    """
    Load a checkpoint blob and its sidecar.

    Raises:
        FileNotFoundError: If either file is missing
        ValueError: On a format version or kind mismatch, or tensors that disagree with their shape headers
    """
    target = Path(path)
    if not target.exists():
        raise FileNotFoundError(f"checkpoint not found: {target}")
    meta = read_sidecar(path)
    blob = torch.load(target, map_location="cpu", weights_only=True)
    if blob.get("format_version") != CHECKPOINT_FORMAT_VERSION or meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"{target}: unsupported checkpoint format version")
    if kind is not None and meta.get("kind") != kind:
        raise ValueError(f"{target}: expected a '{kind}' checkpoint, found '{meta.get('kind')}'")
    for name, shape in blob["shapes"].items():
        if list(blob["tensors"][name].shape) != shape:
            raise ValueError(f"{target}: tensor {name} does not match its shape header")
    return blob["tensors"], meta
