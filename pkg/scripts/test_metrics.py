"""
Tests for relevance metrics, gold-frequency baselines and the self checks.
"""

import numpy as np
import pytest

from agents.base import BaseRelevanceScorer
from environment.planner import GoldTrajectory
from evals.acceptance import (
    brute_force_average_precision,
    check_contrastive_closed_form,
    check_metric_oracles,
    check_mixing_frequency,
    guide_claims,
    guide_generalization,
    lge_claim,
    run_selftest,
    sort_rank,
)
from evals.baselines import BaselinePredictor, build_baseline, most_used
from evals.metrics import (
    MetricRow,
    StepEval,
    aggregate_report,
    average_precision,
    collect_steps,
    distractor_win_rate,
    gold_action_rank,
    matched_distractors,
    mean_action_count,
    relevant_set,
    rsr,
    score_step,
)


def _step(valid, gold, relevant, task_type=0, variation=0, task="your task is to boil water"):
    return StepEval(task_type, variation, 1, task, tuple(valid), gold, frozenset(relevant))


#########################################
# Per-step metrics
#########################################

def test_gold_action_rank_counts_strictly_better_scores():
    rank = gold_action_rank([0.9, 0.5, 0.5, 0.1], ["a", "b", "c", "d"], "c")
    assert rank.rank == 2
    assert rank.garr == 0.5
    assert rank.percent == 50.0
    assert gold_action_rank([1.0, 1.0], ["a", "b"], "b").rank == 1


def test_gold_action_rank_errors():
    with pytest.raises(ValueError):
        gold_action_rank([1.0], ["a"], "z")
    with pytest.raises(ValueError):
        gold_action_rank([1.0, 2.0], ["a"], "a")


def test_relevant_set_and_rsr():
    relevant = relevant_set(["go to kitchen", "pick up pot", "go to kitchen"], ["pick up pot", "wait", "go to kitchen"])
    assert relevant == {"go to kitchen", "pick up pot"}
    assert rsr(["pick up pot", "wait"], relevant) == 0.5
    assert rsr(["wait"], frozenset()) is None


def test_average_precision_worked_example():
    assert average_precision([True, False, True], [3.0, 2.0, 1.0]) == pytest.approx(0.8333333333333334)
    assert average_precision([False, False], [1.0, 2.0]) is None
    assert average_precision([True, True], [1.0, 2.0]) == 1.0


def test_average_precision_ties_share_a_threshold():
    labels, scores = [True, False, False, True], [1.0, 1.0, 0.0, 0.0]
    assert average_precision(labels, scores) == pytest.approx(brute_force_average_precision(labels, scores))
    assert average_precision(labels, scores) == pytest.approx(0.5)


def test_sort_rank_matches_competition_rank():
    scores = [2.0, 5.0, 5.0, 1.0]
    for index in range(4):
        assert sort_rank(scores, index) == gold_action_rank(scores, list("abcd"), "abcd"[index]).rank


class FixedScorer(BaseRelevanceScorer):
    """Ranking scorer with fixed per-action scores in [0, 1]"""

    def __init__(self, scores):
        self.scores = scores

    def get_scorer_name(self):
        return "fixed"

    def score_actions(self, task, actions):
        return np.array([self.scores.get(a, 0.0) for a in actions], dtype=np.float64)


THRESHOLD_STEP = _step(["a", "b", "c", "d"], "a", {"a", "c"})
THRESHOLD_SCORES = {"a": 0.9, "b": 0.6, "c": 0.2, "d": 0.1}


def test_threshold_shortlist_size_and_recall():
    scored = score_step(FixedScorer(THRESHOLD_SCORES), THRESHOLD_STEP, ks=(1,), threshold=0.5)
    assert scored.threshold_size == 2
    assert scored.threshold_rsr == 0.5
    unthresholded = score_step(FixedScorer(THRESHOLD_SCORES), THRESHOLD_STEP, ks=(1,))
    assert unthresholded.threshold_size is None and unthresholded.threshold_rsr is None


def test_threshold_columns_are_reported_for_ranking_scorers_only():
    rows = aggregate_report(
        [THRESHOLD_STEP, _step(["a", "b"], "a", {"a"}, variation=1)],
        {"fixed": FixedScorer(THRESHOLD_SCORES), "per_task": build_baseline("per_task", _trajectories())},
        ks=(1,),
        threshold=0.5,
    )
    fixed, baseline = rows
    assert fixed.threshold_size == pytest.approx(2.0)
    assert fixed.threshold_rsr == pytest.approx(0.75)
    assert fixed.to_dict()["threshold_size"] == pytest.approx(2.0)
    assert baseline.threshold_size is None and baseline.threshold_rsr is None


#########################################
# Baselines
#########################################

def _trajectories():
    return [
        GoldTrajectory(0, 0, ("open door to kitchen", "go to kitchen", "pick up pot")),
        GoldTrajectory(0, 1, ("go to kitchen", "pick up pot")),
        GoldTrajectory(1, 0, ("go to workshop", "focus on wire")),
    ]


def test_most_used_breaks_ties_by_text():
    assert most_used(_trajectories(), size=2) == {"go to kitchen", "pick up pot"}
    assert most_used(_trajectories(), size=3) == {"go to kitchen", "pick up pot", "focus on wire"}


def test_per_task_and_global_baselines():
    per_task = build_baseline("per_task", _trajectories())
    assert per_task.name == "gold_per_task"
    assert per_task.members(1) == {"go to workshop", "focus on wire"}
    assert per_task.members(5) == frozenset()
    global_ = build_baseline("global", _trajectories(), size=50)
    assert global_.members(0) == global_.members(1)
    assert len(global_.members(0)) == 5
    with pytest.raises(ValueError):
        build_baseline("global", _trajectories(), size=0)
    with pytest.raises(ValueError):
        BaselinePredictor("oracle", {})


def test_baseline_scores_are_binary_and_unranked():
    scorer = build_baseline("per_task", _trajectories()).scorer(0)
    assert not scorer.ranks_actions
    assert scorer.score_actions("task", ["pick up pot", "wait"]).tolist() == [1.0, 0.0]
    assert scorer.shortlist(["pick up pot", "wait"]) == {"pick up pot"}


def test_baseline_step_score_uses_members_for_every_k():
    scorer = build_baseline("per_task", _trajectories()).scorer(0)
    step = _step(["wait", "go to kitchen", "pick up pot", "go to workshop"], "go to kitchen", {"go to kitchen"})
    scored = score_step(scorer, step, ks=(1, 50))
    assert scored.rank is None
    assert scored.rsr == {1: 1.0, 50: 1.0}
    assert scored.ap == pytest.approx(0.5)


#########################################
# Aggregation
#########################################

def test_aggregate_report_averages_within_variations_first():
    steps = [
        _step(["go to kitchen", "wait"], "go to kitchen", {"go to kitchen"}, variation=0),
        _step(["wait", "go to kitchen"], "go to kitchen", {"go to kitchen"}, variation=0),
        _step(["wait", "pick up pot", "eat pot"], "pick up pot", {"pick up pot"}, variation=1),
    ]
    rows = aggregate_report(steps, {"per_task": build_baseline("per_task", _trajectories())}, ks=(10,))
    row = rows[0]
    assert isinstance(row, MetricRow)
    assert row.model == "per_task"
    assert row.map == 1.0
    assert row.gar_mean is None and row.garr is None
    assert row.steps == 3
    assert set(row.per_task) == {0}
    with pytest.raises(ValueError):
        aggregate_report([], {"per_task": build_baseline("per_task", _trajectories())})


def test_collect_steps_covers_every_gold_action(small_suite):
    steps = collect_steps(small_suite, "dev", variations_per_task=1)
    expected = sum(len(small_suite.gold(t, small_suite.variations(t, "dev")[0])) for t in small_suite.task_types)
    assert len(steps) == expected
    for step in steps:
        assert step.gold in step.valid
        assert step.gold in step.relevant
    assert mean_action_count(steps) > 0
    assert mean_action_count([]) == 0.0


def test_gold_baselines_on_the_suite(small_suite):
    steps = collect_steps(small_suite, "dev", variations_per_task=1)
    golds = small_suite.golds("train")
    rows = aggregate_report(steps, {
        "gold_per_task": build_baseline("per_task", golds),
        "gold_global": build_baseline("global", golds),
    })
    assert [row.model for row in rows] == ["gold_per_task", "gold_global"]
    for row in rows:
        assert row.pct_gar is None
        assert all(0.0 <= v <= 1.0 for v in row.rsr.values() if v is not None)
        assert row.to_dict()["rsr"].keys() == {"10", "20", "50"}


#########################################
# Self checks and claims
#########################################

def test_fast_self_checks_pass():
    assert check_contrastive_closed_form().passed
    assert check_metric_oracles(instances=200).passed
    assert check_mixing_frequency(draws=2000).passed


def _row(model, rsr_value, map_value, pct):
    return MetricRow(model, {20: rsr_value}, map_value, None, None, pct, None, 10)


def test_guide_claims():
    rows = [_row("guide", 0.95, 0.6, 5.0), _row("gold_per_task", 0.5, 0.4, None), _row("gold_global", 0.3, 0.2, None)]
    assert all(result.passed for result in guide_claims(rows, recall_k=20))
    rows[0] = _row("guide", 0.5, 0.41, 30.0)
    assert not any(result.passed for result in guide_claims(rows, recall_k=20))


def test_lge_claim():
    drrn = [0.2, 0.25, 0.3, 0.2, 0.22, 0.28]
    lge = [0.5, 0.45, 0.6, 0.4, 0.5, 0.55]
    assert lge_claim(drrn, lge).passed
    assert not lge_claim(drrn, drrn).passed
    with pytest.raises(ValueError):
        lge_claim(drrn, lge[:2])


@pytest.mark.slow
def test_full_selftest(small_config, small_suite):
    results = run_selftest(small_config, small_suite)
    failed = [str(r) for r in results if not r.passed]
    assert not failed, failed


#########################################
# Generalization
#########################################

def test_matched_distractors_share_the_gold_verb():
    valid = ["focus on dog", "focus on cat", "focus on rock", "go to kitchen"]
    step = _step(valid, "focus on dog", {"focus on dog", "focus on cat"})
    assert matched_distractors(step) == ["focus on rock"]


def test_distractor_win_rate_against_chance():
    scorer = FixedScorer({"focus on dog": 0.9, "focus on cat": 0.5, "focus on rock": 0.95, "go to kitchen": 0.1})
    steps = [
        _step(["focus on dog", "focus on cat"], "focus on dog", {"focus on dog"}),
        _step(["focus on dog", "focus on rock", "focus on cat"], "focus on dog", {"focus on dog"}),
        _step(["go to kitchen", "wait"], "go to kitchen", {"go to kitchen"}),
    ]
    win_rate, chance = distractor_win_rate(scorer, steps)
    assert win_rate == pytest.approx(0.5)
    assert chance == pytest.approx((1 / 2 + 1 / 3) / 2)
    assert distractor_win_rate(scorer, steps[2:]) == (None, None)
    assert guide_generalization(1.0, chance).passed
    assert not guide_generalization(win_rate, chance).passed
    assert not guide_generalization(None, None).passed
