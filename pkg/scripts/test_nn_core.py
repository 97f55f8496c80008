"""
Tests for the shared neural building blocks.
"""

import math

import pytest
import torch
import torch.nn as nn

from agents.nn_core import (
    AdamState,
    ParamStore,
    SequenceEncoder,
    adam_step,
    grad_check,
    gru_encode,
    huber,
    init_parameters,
    linear,
    load_checkpoint,
    read_sidecar,
    save_checkpoint,
    softmax,
)


def _encoder(vocab_size=10, hidden=4, dtype=torch.float64):
    torch.manual_seed(0)
    embedding = nn.Embedding(vocab_size, hidden)
    encoder = SequenceEncoder(embedding, hidden)
    init_parameters(encoder)
    return encoder.to(dtype)


def test_gru_encode_shape_and_empty_input():
    encoder = _encoder()
    assert gru_encode(encoder, [2, 3, 4]).shape == (4,)
    with pytest.raises(ValueError):
        gru_encode(encoder, [])


def test_batched_encoding_matches_one_at_a_time():
    encoder = _encoder()
    batch = [[2, 3], [4, 5, 6, 7], [8]]
    together = encoder(batch)
    for row, ids in zip(together, batch):
        assert torch.allclose(row, gru_encode(encoder, ids), atol=1e-12)


def test_zero_weights_give_zero_encoding():
    encoder = _encoder()
    with torch.no_grad():
        for param in encoder.parameters():
            param.zero_()
    assert torch.count_nonzero(gru_encode(encoder, [2, 3])) == 0


def test_linear_checks_dimensions():
    weight, bias = torch.ones(1, 3), torch.zeros(1)
    assert linear(weight, bias, torch.tensor([1.0, 2.0, 3.0])).item() == 6.0
    with pytest.raises(ValueError):
        linear(weight, bias, torch.ones(4))


def test_softmax_values_and_errors():
    probabilities = softmax([math.log(3), 0.0])
    assert probabilities.tolist() == pytest.approx([0.75, 0.25], abs=1e-12)
    shifted = softmax([1000.0 + math.log(3), 1000.0])
    assert torch.allclose(probabilities, shifted, atol=1e-12)
    with pytest.raises(ValueError):
        softmax([])
    with pytest.raises(ValueError):
        softmax([float("nan"), 0.0])


def test_huber_branches():
    assert huber(0.5) == pytest.approx(0.125)
    assert huber(-2.0) == pytest.approx(1.5)
    assert huber(1.0) == pytest.approx(0.5)
    tensor = huber(torch.tensor([0.5, -2.0], dtype=torch.float64))
    assert tensor.tolist() == pytest.approx([0.125, 1.5])


def test_param_store_flat_round_trip():
    encoder = _encoder()
    store = ParamStore(encoder)
    flat = store.flat()
    assert flat.numel() == store.size == sum(store.census().values())
    store.load_flat(torch.zeros_like(flat))
    assert torch.count_nonzero(store.flat()) == 0
    with pytest.raises(ValueError):
        store.load_flat(torch.zeros(3))


def test_adam_step_with_zero_gradient_leaves_parameters():
    encoder = _encoder()
    store = ParamStore(encoder)
    adam = AdamState(store, lr=0.1)
    before = store.flat()
    adam_step(adam, store, {name: torch.zeros_like(p) for name, p in store.named().items()})
    assert torch.equal(before, store.flat())
    assert adam.steps == 1


def test_adam_step_moves_against_gradient():
    layer = nn.Linear(2, 1).double()
    store = ParamStore(layer)
    adam = AdamState(store, lr=0.01)
    before = store.named()["weight"].detach().clone()
    grads = {"weight": torch.ones(1, 2, dtype=torch.float64), "bias": torch.zeros(1, dtype=torch.float64)}
    adam_step(adam, store, grads)
    # First bias-corrected Adam step moves each coordinate by lr
    assert torch.allclose(store.named()["weight"], before - 0.01, atol=1e-9)


def test_adam_step_rejects_mismatched_gradients():
    layer = nn.Linear(2, 1).double()
    store = ParamStore(layer)
    adam = AdamState(store, lr=0.01)
    with pytest.raises(ValueError):
        adam_step(adam, store, {"weight": torch.zeros(2, 2, dtype=torch.float64), "bias": torch.zeros(1, dtype=torch.float64)})
    with pytest.raises(ValueError):
        adam_step(adam, store, {"weight": torch.zeros(1, 2, dtype=torch.float64)})


def test_grad_check_on_gru_and_head():
    encoder = _encoder(hidden=5)
    head = nn.Linear(5, 1).double()
    model = nn.ModuleDict({"encoder": encoder, "head": head})

    def loss():
        h = encoder([[2, 3, 4], [5, 6]])
        return (head(h) ** 2).sum()

    assert grad_check(loss, ParamStore(model), samples=50) < 1e-4


def test_grad_check_requires_float64():
    encoder = _encoder(dtype=torch.float32)
    with pytest.raises(ValueError):
        grad_check(lambda: encoder([[2]]).sum(), ParamStore(encoder))


def test_checkpoint_round_trip(tmp_path):
    encoder = _encoder()
    path = tmp_path / "model.ckpt"
    save_checkpoint(str(path), dict(encoder.state_dict()), "encoder", step=7, config_hash="abc", suite_hash="def")
    tensors, meta = load_checkpoint(str(path), kind="encoder")
    assert meta["step"] == 7 and meta["config_hash"] == "abc"
    assert read_sidecar(str(path))["kind"] == "encoder"
    for name, value in encoder.state_dict().items():
        assert torch.equal(tensors[name], value)


def test_checkpoint_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(str(tmp_path / "missing.ckpt"))
    path = tmp_path / "model.ckpt"
    save_checkpoint(str(path), {"w": torch.zeros(2)}, "guide", 0, "", "")
    with pytest.raises(ValueError):
        load_checkpoint(str(path), kind="explorer")
