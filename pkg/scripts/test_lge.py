"""
Tests for the language-guided exploration loop.
"""

import math

import numpy as np
import pytest
import torch

from agents.base import BaseRelevanceScorer, action_texts
from agents.explorer import Explorer
from agents.textcodec import build_vocab
from config.experiment import SeedsConfig
from orchestrator.evaluation import GoldReplayPolicy, RandomPolicy, evaluate, evaluate_both, pick_eval_envs
from orchestrator.lge import (
    EpsilonSchedule,
    LGEConfig,
    SeedStreams,
    choose_candidates,
    default_mode,
    epsilon_at,
    final_score,
    train_lge,
)
from orchestrator.state_manager import JsonlLog


class WordOverlapScorer(BaseRelevanceScorer):
    """Scores an action by how many of its words appear in the task"""

    def score_actions(self, task, actions):
        words = set(task.lower().split())
        return np.array([float(len(words & set(t.split()))) for t in action_texts(actions)])

    def get_scorer_name(self):
        return "overlap"


HASHES = {"config_hash": "c0", "suite_hash": "s0"}


def _lge(mode="lge-fix", epsilon=EpsilonSchedule("fixed", 0.5, 40), steps=40, **overrides) -> LGEConfig:
    settings = dict(mode=mode, k=10, epsilon=epsilon, steps_per_worker=steps, workers=1,
                    eval_every=20, eval_variations=1, checkpoint_every=20)
    settings.update(overrides)
    return LGEConfig(**settings)


def _factory(small_config, small_suite, task_type, streams):
    texts = []
    for env in small_suite.envs("train", [task_type]):
        observation = env.reset()
        texts.extend([observation.obs, observation.inventory, observation.look, observation.task])
        texts.extend(a.text for a in env.valid_actions())
    vocab = build_vocab(texts)
    return lambda: Explorer(vocab, small_config.explorer, task_type, seed=streams.init_seed)


#########################################
# Schedules and candidates
#########################################

def test_fixed_and_increasing_epsilon():
    assert epsilon_at(EpsilonSchedule("fixed", 0.3, 10), 7) == 0.3
    ramp = EpsilonSchedule("increasing", 0.0, 100)
    assert epsilon_at(ramp, 0) == 0.0
    assert epsilon_at(ramp, 25) == 0.25
    assert epsilon_at(ramp, 250) == 1.0
    with pytest.raises(ValueError):
        epsilon_at(ramp, -1)
    with pytest.raises(ValueError):
        EpsilonSchedule("fixed", 1.5, 10)


def test_modes_derive_their_schedules(small_config):
    drrn = LGEConfig.from_experiment(small_config, "drrn", deterministic=True)
    assert drrn.epsilon.value == 1.0 and not drrn.uses_guide
    inc = LGEConfig.from_experiment(small_config, "lge-inc", deterministic=True)
    assert inc.epsilon.kind == "increasing" and inc.epsilon.total_steps == inc.total_steps
    assert default_mode(small_config) == "lge-fix"
    with pytest.raises(ValueError):
        LGEConfig.from_experiment(small_config, "greedy")


def test_deterministic_mode_forces_one_worker(small_config):
    config = small_config.model_copy(update={"lge": small_config.lge.model_copy(update={"workers": 4})})
    assert LGEConfig.from_experiment(config, "lge-fix", deterministic=True).workers == 1
    assert LGEConfig.from_experiment(config, "lge-fix", deterministic=False).total_steps == 160


def test_candidates_keep_valid_order():
    valid = ["look around", "pick up metal pot", "wait", "open metal pot", "eat red apple"]
    scorer = WordOverlapScorer()
    rng = np.random.default_rng(0)
    picked = choose_candidates(scorer, 0.0, "your task is to boil water in the metal pot", valid, 2, rng)
    assert picked == ["pick up metal pot", "open metal pot"]
    assert choose_candidates(scorer, 1.0, "boil water", valid, 2, rng) == valid
    assert choose_candidates(scorer, 0.0, "boil water", valid, 50, rng) == valid
    with pytest.raises(ValueError):
        choose_candidates(scorer, 0.0, "boil water", [], 2, rng)


def test_no_guide_draws_no_coin():
    rng = np.random.default_rng(5)
    valid = ["wait", "look around"]
    assert choose_candidates(None, 0.0, "boil water", valid, 1, rng) == valid
    assert rng.random() == np.random.default_rng(5).random()


def test_mixing_frequency_tracks_epsilon():
    rng = np.random.default_rng(1)
    valid = [f"action {i}" for i in range(20)]
    full = sum(
        len(choose_candidates(WordOverlapScorer(), 0.3, "action", valid, 5, rng)) == 20
        for _ in range(5000)
    )
    assert abs(full / 5000 - 0.3) < 0.03


def test_final_score_averages_the_tail():
    assert final_score([0.0] * 9 + [1.0]) == 1.0
    assert final_score([0.1] * 18 + [0.5, 0.7]) == pytest.approx(0.6)
    assert final_score([0.4]) == 0.4
    with pytest.raises(ValueError):
        final_score([])


def test_seed_streams_are_independent_and_reproducible():
    seeds = SeedsConfig(rollout=3)
    a, b = SeedStreams(seeds, 2), SeedStreams(seeds, 2)
    assert a.init_seed == b.init_seed
    assert a.rollout.random() == b.rollout.random()
    assert SeedStreams(seeds, 1).mixing.random() != SeedStreams(seeds, 2).mixing.random()


#########################################
# Evaluation
#########################################

def test_gold_policy_scores_one_and_random_scores_less(small_suite):
    envs = small_suite.envs("test", [1])
    assert evaluate(GoldReplayPolicy(), None, envs, k=10, full_action_set=True).mean == 1.0
    result = evaluate(RandomPolicy(np.random.default_rng(0)), None, envs, k=10, full_action_set=True)
    assert 0.0 <= result.mean < 1.0
    assert result.variations == [env.spec.variation for env in envs]


def test_evaluate_both_reports_pruned_and_full_scores(small_suite):
    envs = small_suite.envs("test", [1])
    unguided = evaluate_both(GoldReplayPolicy(), None, envs, k=10)
    assert unguided.pruned is None and unguided.primary is unguided.full
    assert unguided.to_record()["score_pruned"] is None
    assert unguided.to_record()["score_full"] == 1.0

    guided = evaluate_both(GoldReplayPolicy(), WordOverlapScorer(), envs, k=10_000)
    assert guided.primary is guided.pruned
    assert guided.to_record() == {"score": 1.0, "returns": guided.pruned.returns, "score_pruned": 1.0, "score_full": 1.0}
    full_first = evaluate_both(GoldReplayPolicy(), WordOverlapScorer(), envs, k=10_000, full_action_set=True)
    assert full_first.primary is full_first.full


def test_pick_eval_envs_is_a_stable_subset(small_suite):
    envs = small_suite.envs("train", [0])
    picked = pick_eval_envs(envs, 1, np.random.default_rng(0))
    assert len(picked) == 1 and picked[0] in envs
    assert pick_eval_envs(envs, 10, np.random.default_rng(0)) == envs


#########################################
# Training
#########################################

def test_train_lge_smoke(small_config, small_suite, tmp_path):
    streams = SeedStreams(small_config.seeds, 1)
    train_log = JsonlLog(str(tmp_path / "train.jsonl"), {"kind": "train"})
    eval_log = JsonlLog(str(tmp_path / "eval.jsonl"), {"kind": "eval"})
    result = train_lge(
        _lge(), small_suite.envs("train", [1]), WordOverlapScorer(),
        _factory(small_config, small_suite, 1, streams), streams,
        eval_envs=small_suite.envs("test", [1]),
        train_log=train_log, eval_log=eval_log,
        checkpoint=str(tmp_path / "explorer.ckpt"), hashes=HASHES,
    )
    assert result.steps == 40
    assert [r["step"] for r in eval_log.records()] == [20, 40]
    assert len(result.eval_scores) == 2
    assert result.final_score == result.eval_scores[-1]
    for record in eval_log.records():
        assert set(record) == {"step", "score", "returns", "score_pruned", "score_full"}
        assert record["score"] == record["score_pruned"]
        assert 0.0 <= record["score_full"] <= 1.0
    assert (tmp_path / "explorer.ckpt").exists()
    for record in train_log.records():
        assert set(record) == {"step", "episode", "epsilon", "loss", "return"}
        assert 0.0 <= record["return"] <= 1.0


def test_train_lge_rejects_mixed_task_types(small_config, small_suite):
    streams = SeedStreams(small_config.seeds, 0)
    envs = small_suite.envs("train", [0, 1])
    with pytest.raises(ValueError):
        train_lge(_lge(), envs, None, _factory(small_config, small_suite, 0, streams), streams)
    with pytest.raises(ValueError):
        train_lge(_lge(), [], None, _factory(small_config, small_suite, 0, streams), streams)


def test_epsilon_one_matches_the_plain_explorer(small_config, small_suite, tmp_path):
    records, nets = {}, {}
    for name, mode, guide in (("drrn", "drrn", None), ("eps1", "lge-fix", WordOverlapScorer())):
        streams = SeedStreams(small_config.seeds, 2)
        log = JsonlLog(str(tmp_path / f"{name}.jsonl"), {"kind": "train"})
        result = train_lge(
            _lge(mode=mode, epsilon=EpsilonSchedule("fixed", 1.0, 40)),
            small_suite.envs("train", [2]), guide,
            _factory(small_config, small_suite, 2, streams), streams,
            train_log=log,
        )
        records[name] = log.path.read_bytes()
        nets[name] = list(result.explorer.net.parameters())
    assert records["drrn"] == records["eps1"]
    assert all(torch.equal(a, b) for a, b in zip(nets["drrn"], nets["eps1"]))


def test_epsilon_zero_with_a_wide_shortlist_matches_the_plain_explorer(small_config, small_suite, tmp_path):
    records, nets = {}, {}
    for name, mode, guide, epsilon in (
        ("drrn", "drrn", None, EpsilonSchedule("fixed", 1.0, 40)),
        ("eps0", "lge-fix", WordOverlapScorer(), EpsilonSchedule("fixed", 0.0, 40)),
    ):
        streams = SeedStreams(small_config.seeds, 2)
        log = JsonlLog(str(tmp_path / f"{name}.jsonl"), {"kind": "train"})
        result = train_lge(
            _lge(mode=mode, epsilon=epsilon, k=10_000),
            small_suite.envs("train", [2]), guide,
            _factory(small_config, small_suite, 2, streams), streams,
            train_log=log,
        )
        # the logged epsilon is the only field allowed to differ
        records[name] = [{k: v for k, v in r.items() if k != "epsilon"} for r in log.records()]
        nets[name] = list(result.explorer.net.parameters())
    assert records["drrn"] and records["drrn"] == records["eps0"]
    assert all(torch.equal(a, b) for a, b in zip(nets["drrn"], nets["eps0"]))


def test_reruns_write_byte_identical_logs(small_config, small_suite, tmp_path):
    logs = {}
    for name in ("first", "second"):
        streams = SeedStreams(small_config.seeds, 1)
        train_log = JsonlLog(str(tmp_path / name / "train.jsonl"), {"kind": "train", **HASHES})
        eval_log = JsonlLog(str(tmp_path / name / "eval.jsonl"), {"kind": "eval", **HASHES})
        train_lge(
            _lge(), small_suite.envs("train", [1]), WordOverlapScorer(),
            _factory(small_config, small_suite, 1, streams), streams,
            eval_envs=small_suite.envs("test", [1]),
            train_log=train_log, eval_log=eval_log,
            checkpoint=str(tmp_path / name / "explorer.ckpt"), hashes=HASHES,
        )
        logs[name] = (train_log.path.read_bytes(), eval_log.path.read_bytes())
    assert logs["first"] == logs["second"]
    assert logs["first"][1].count(b"\n") == 3


def test_max_episodes_stops_early(small_config, small_suite):
    streams = SeedStreams(small_config.seeds, 0)
    result = train_lge(
        _lge(steps=2000, max_episodes=1, eval_every=10_000, checkpoint_every=10_000),
        small_suite.envs("train", [0]), WordOverlapScorer(),
        _factory(small_config, small_suite, 0, streams), streams,
    )
    assert result.episodes == 1
    assert result.steps <= small_suite.config.episode_cap
    assert math.isnan(result.final_score)


def test_resume_continues_from_the_checkpoint(small_config, small_suite, tmp_path):
    checkpoint = str(tmp_path / "explorer.ckpt")
    train_log = JsonlLog(str(tmp_path / "train.jsonl"), {"kind": "train"})
    eval_log = JsonlLog(str(tmp_path / "eval.jsonl"), {"kind": "eval"})
    eval_envs = small_suite.envs("test", [3])

    def run(steps, hashes):
        streams = SeedStreams(small_config.seeds, 3)
        return train_lge(
            _lge(steps=steps), small_suite.envs("train", [3]), WordOverlapScorer(),
            _factory(small_config, small_suite, 3, streams), streams,
            eval_envs=eval_envs, train_log=train_log, eval_log=eval_log,
            checkpoint=checkpoint, hashes=hashes,
        )

    first = run(20, HASHES)
    assert first.resumed_from is None
    second = run(40, HASHES)
    assert second.resumed_from == 20 and second.steps == 40
    assert [r["step"] for r in eval_log.records()] == [20, 40]
    assert len(second.eval_scores) == 2

    fresh = run(40, {"config_hash": "other", "suite_hash": "s0"})
    assert fresh.resumed_from is None
