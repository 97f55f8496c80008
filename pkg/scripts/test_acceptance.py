"""
End-to-end claim checks. The desk-scale ones retrain the Guide and the
Explorers from scratch and are marked slow.
"""

import pytest

from config.experiment import load_config
from orchestrator.experiment import measure_guide_claims, measure_lge_claim

CLAIMS_PER_SEED = 4


def test_guide_claims_are_measured_per_seed(small_config):
    results = measure_guide_claims(small_config, seeds=(0, 1))
    assert len(results) == 2 * CLAIMS_PER_SEED
    assert [r.name.split(":")[0] for r in results] == ["seed 0"] * CLAIMS_PER_SEED + ["seed 1"] * CLAIMS_PER_SEED
    assert any("generalization" in r.name for r in results)


@pytest.mark.slow
def test_desk_guide_claims_hold_over_three_seeds():
    results = measure_guide_claims(load_config(), seeds=(0, 1, 2))
    failed = [str(r) for r in results if not r.passed]
    assert not failed, "\n".join(failed)


@pytest.mark.slow
def test_desk_lge_beats_drrn_over_five_seeds():
    result = measure_lge_claim(load_config(), seeds=(0, 1, 2, 3, 4), task_types=(0, 1, 2))
    assert result.passed, str(result)
