"""
Tests for the Guide: contrastive loss, training data, training and scoring.
"""

import math

import numpy as np
import pytest
import torch

from agents.factory import get_baseline, get_scorer
from agents.guide import (
    Guide,
    GuideDataset,
    GuideModel,
    TrainingTuple,
    batch_loss,
    build_negative_pool,
    build_training_tuples,
    contrastive_loss,
    gold_examples,
    in_batch_duplicates,
    read_tuples,
    train_guide,
    write_tuples,
)
from agents.textcodec import build_vocab
from config.experiment import GuideConfig


TOY_TUPLES = [
    TrainingTuple(0, 0, "your task is to boil water", "pick up metal pot", "focus on red apple"),
    TrainingTuple(0, 0, "your task is to boil water", "open door to kitchen", "eat red apple"),
    TrainingTuple(1, 0, "your task is to find an animal", "focus on brown dog", "pick up metal pot"),
]


def _toy_model(hidden=6, dtype=torch.float64) -> GuideModel:
    texts = [text for t in TOY_TUPLES for text in (t.tau, t.pos, t.neg)]
    torch.manual_seed(0)
    return GuideModel(build_vocab(texts), hidden=hidden, temperature=0.5, dtype=dtype)


#########################################
# Contrastive Objective
#########################################

def test_equal_scores_give_the_closed_form_loss():
    zeros = torch.zeros(2, 2, dtype=torch.float64)
    assert contrastive_loss(zeros, zeros).item() == pytest.approx(2 * math.log(4), abs=1e-12)


def test_confident_positives_drive_the_loss_to_zero():
    positives = torch.eye(3, dtype=torch.float64) * 100.0
    negatives = torch.zeros(3, 3, dtype=torch.float64)
    assert contrastive_loss(positives, negatives).item() < 1e-30


def test_contrastive_loss_shape_errors():
    with pytest.raises(ValueError):
        contrastive_loss(torch.zeros(0, 0), torch.zeros(0, 0))
    with pytest.raises(ValueError):
        contrastive_loss(torch.zeros(2, 2), torch.zeros(2, 3))


def test_excluded_entries_leave_the_denominator():
    zeros = torch.zeros(2, 2, dtype=torch.float64)
    exclude = torch.tensor([[False, True, False, False], [True, False, False, False]])
    assert contrastive_loss(zeros, zeros, exclude).item() == pytest.approx(2 * math.log(3), abs=1e-12)
    with pytest.raises(ValueError):
        contrastive_loss(zeros, zeros, torch.zeros(2, 2, dtype=torch.bool))
    with pytest.raises(ValueError):
        contrastive_loss(zeros, zeros, torch.tensor([[True, False, False, False], [False] * 4]))


def test_in_batch_duplicates_masks_same_task_positives_and_repeated_texts():
    exclude = in_batch_duplicates(TOY_TUPLES)
    expected = torch.zeros(3, 6, dtype=torch.bool)
    expected[0, 1] = expected[1, 0] = True  # same task description
    expected[0, 5] = True  # tuple 2's negative is tuple 0's positive
    assert torch.equal(exclude, expected)


def test_repeated_tuples_do_not_compete_with_each_other():
    first = TrainingTuple(1, 0, "your task is to find an animal", "focus on brown dog", "pick up metal pot")
    second = TrainingTuple(1, 0, "your task is to find an animal", "focus on brown dog", "eat red apple")
    exclude = in_batch_duplicates([first, second])
    assert exclude[0, 1] and exclude[1, 0]
    assert not exclude[0, 0] and not exclude[1, 1]


def test_batch_loss_is_finite_and_differentiable():
    model = _toy_model()
    loss = batch_loss(model, TOY_TUPLES)
    assert torch.isfinite(loss)
    loss.backward()
    assert model.embedding.weight.grad is not None
    with pytest.raises(ValueError):
        batch_loss(model, [])


def test_similarity_is_scaled_cosine():
    model = _toy_model()
    value = model.similarity("your task is to boil water", "pick up metal pot")
    assert abs(value) <= 1.0 / model.temperature + 1e-9
    with pytest.raises(ValueError):
        model.similarity("", "pick up metal pot")


def test_task_descriptions_keep_more_tokens_than_actions():
    words = [f"w{i}" for i in range(20)]
    short = " ".join(words[:16])
    longer = " ".join(words[:16] + ["w19"])
    torch.manual_seed(0)
    model = GuideModel(build_vocab([short, longer]), hidden=6, max_len=12, task_max_len=32, dtype=torch.float64)
    with torch.no_grad():
        assert torch.equal(model.embed([short]), model.embed([longer]))
        assert not torch.equal(model.embed_tasks([short]), model.embed_tasks([longer]))
    assert model.config()["task_max_len"] == 32


#########################################
# Training Data
#########################################

def test_negative_pool_contains_every_gold_action(small_suite):
    pool = build_negative_pool(small_suite, 0, n_variations=2)
    assert list(pool.actions) == sorted(pool.actions)
    for variation in small_suite.variations(0, "train"):
        for action in small_suite.gold(0, variation).actions:
            assert action in pool


def test_training_tuples_never_use_a_gold_action_as_negative(small_suite):
    examples = gold_examples(small_suite, "train")
    pools = {t: build_negative_pool(small_suite, t, 2) for t in small_suite.task_types}
    tuples = build_training_tuples(examples, pools, np.random.default_rng(0))
    gold = {(e.task_type, e.variation): set(e.gold) for e in examples}
    assert 0 < len(tuples) <= sum(len(e.gold) for e in examples)
    assert len({(t.tau, t.pos, t.neg) for t in tuples}) == len(tuples)
    for item in tuples:
        assert item.pos in gold[(item.task_type, item.variation)]
        assert item.neg not in gold[(item.task_type, item.variation)]


def test_training_tuples_need_a_pool(small_suite):
    examples = gold_examples(small_suite, "train")
    with pytest.raises(ValueError):
        build_training_tuples(examples, {}, np.random.default_rng(0))


def test_dataset_resamples_negatives_each_epoch(small_suite):
    dataset = GuideDataset.from_suite(small_suite, pool_variations=2)
    rng = np.random.default_rng(3)
    first, second = dataset.epoch(rng), dataset.epoch(rng)
    assert [t.pos for t in first] == [t.pos for t in second]
    assert [t.neg for t in first] != [t.neg for t in second]


def test_tuple_file_round_trip(tmp_path):
    path = tmp_path / "tuples.jsonl"
    assert write_tuples(str(path), TOY_TUPLES) == 3
    assert read_tuples(str(path)) == TOY_TUPLES
    with pytest.raises(FileNotFoundError):
        read_tuples(str(tmp_path / "missing.jsonl"))


#########################################
# Training and Scoring
#########################################

def test_training_reduces_the_loss():
    config = GuideConfig(hidden=8, lr=0.01, batch_size=4, epochs=60, temperature=0.5)
    guide, history = train_guide(TOY_TUPLES, config, seed=0, dtype=torch.float64)
    assert len(history.epoch_losses) == 60
    assert history.epoch_losses[-1] < history.initial_loss
    assert not any(p.requires_grad for p in guide.model.parameters())


def test_training_rejects_an_empty_source():
    with pytest.raises(ValueError):
        train_guide([], GuideConfig(epochs=1))


def test_top_k_and_classification():
    guide = Guide(_toy_model()).freeze()
    task = "your task is to boil water"
    actions = ["pick up metal pot", "focus on red apple", "eat red apple", "open door to kitchen"]
    scores = guide.score_actions(task, actions)
    top = guide.top_k(task, actions, k=2)
    assert len(top) == 2
    assert [actions.index(a) for a in top] == list(np.argsort(-scores, kind="stable")[:2])
    assert guide.top_k(task, actions, k=10) == [actions[i] for i in np.argsort(-scores, kind="stable")]

    normalized = guide.normalized_scores(task, actions)
    assert np.all((normalized >= 0) & (normalized <= 1))
    assert guide.classify_relevant(task, actions, threshold=0.0) == [True] * 4
    assert guide.classify_relevant(task, actions, threshold=1.1) == [False] * 4
    assert guide.top_k(task, [], k=3) == []
    with pytest.raises(ValueError):
        guide.top_k(task, actions, k=0)


def test_scores_are_invariant_to_duplicates_and_order():
    guide = Guide(_toy_model()).freeze()
    task = "your task is to find an animal"
    forward = guide.score_actions(task, ["focus on brown dog", "pick up metal pot", "focus on brown dog"])
    backward = guide.score_actions(task, ["pick up metal pot", "focus on brown dog"])
    assert forward[0] == forward[2] == backward[1]
    assert forward[1] == backward[0]


def test_save_and_load(tmp_path):
    guide = Guide(_toy_model()).freeze()
    path = tmp_path / "guide.ckpt"
    guide.save(str(path), step=3, config_hash="c", suite_hash="s")
    loaded = get_scorer("guide", guide_path=str(path), dtype=torch.float64)
    actions = ["pick up metal pot", "eat red apple"]
    assert np.array_equal(
        guide.score_actions("your task is to boil water", actions),
        loaded.score_actions("your task is to boil water", actions),
    )
    assert loaded.meta["suite_hash"] == "s"


def test_factory_rejects_unknown_kinds():
    with pytest.raises(ValueError):
        get_scorer("oracle")
    with pytest.raises(ValueError):
        get_scorer("guide")


def test_factory_builds_baselines_from_training_trajectories(small_suite):
    golds = small_suite.golds("train")
    task_type = small_suite.task_types[0]
    predictor = get_baseline("gold_per_task", golds)
    scorer = get_scorer("gold_per_task", trajectories=golds, task_type=task_type)
    assert not scorer.ranks_actions
    assert scorer.members == predictor.members(task_type)
    assert get_scorer("gold_global", trajectories=golds).members == get_baseline("gold_global", golds).members(0)
    with pytest.raises(ValueError):
        get_baseline("guide", golds)
    with pytest.raises(ValueError):
        get_baseline("gold_global", None)
    with pytest.raises(ValueError):
        get_scorer("gold_per_task", trajectories=golds)
