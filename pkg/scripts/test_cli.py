"""
Tests for the command-line harness and the resumable pipeline.
"""

import json

import pytest

from config.experiment import load_config
from orchestrator.experiment import initial_state
from orchestrator.state_manager import RunDirectory, completed_stages, load_snapshot, log_state_transition
from orchestrator.workflow import execute_pipeline, get_pipeline_state
from scripts.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, build_parser, main


def test_parser_knows_every_subcommand():
    parser = build_parser()
    for argv in (["gen-suite"], ["train-guide"], ["eval-guide", "--split", "test"], ["selftest"],
                 ["train-agent", "--mode", "drrn", "--task-types", "0", "3"], ["report", "a", "b"],
                 ["pipeline", "--modes", "drrn"], ["acceptance", "--skip-agents", "--guide-seeds", "0"]):
        assert parser.parse_args(argv).command == argv[0]


def test_usage_errors_exit_one(capsys):
    assert main(["juggle"]) == EXIT_USAGE
    assert main(["train-agent", "--mode", "greedy"]) == EXIT_USAGE
    assert "lge" in capsys.readouterr().err


def test_config_errors_exit_one_with_diagnostics(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("guide:\n  lr: -1\n", encoding="utf-8")
    assert main(["--config", str(path), "gen-suite"]) == EXIT_USAGE
    assert f"{path}:2: guide.lr" in capsys.readouterr().err
    assert main(["--config", str(tmp_path / "missing.yaml"), "gen-suite"]) == EXIT_USAGE
    assert main(["--set", "guide.k=0", "gen-suite"]) == EXIT_USAGE


def test_missing_checkpoint_is_a_runtime_failure(small_config_path):
    assert main(["--config", small_config_path, "eval-agent", "--mode", "drrn", "--task-types", "0"]) == EXIT_RUNTIME


def test_lge_mode_without_a_guide_is_a_runtime_failure(small_config_path):
    assert main(["--config", small_config_path, "train-agent", "--mode", "lge-fix", "--task-types", "0"]) == EXIT_RUNTIME


def test_gen_suite_writes_summary_and_snapshot(small_config_path, capsys):
    assert main(["--config", small_config_path, "gen-suite"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["task_types"] == [0, 1, 2, 3, 4, 5]
    assert summary["worlds"] == 24
    config = load_config(small_config_path)
    run = RunDirectory.for_config(config)
    assert (run.suite_dir / "splits.json").exists()
    assert load_snapshot(str(run.root)) == config


def test_run_directory_refuses_another_config(tiny_run_config):
    run = RunDirectory.for_config(tiny_run_config).prepare()
    other = tiny_run_config.model_copy(update={"name": "other"})
    with pytest.raises(ValueError):
        RunDirectory(str(run.root), other).prepare()


def test_stage_transitions_are_recorded(tiny_run_config):
    run = RunDirectory.for_config(tiny_run_config).prepare()
    log_state_transition(run, "START", "SUITE_READY")
    log_state_transition(run, "SUITE_READY", "FAILED", reason="boom")
    log_state_transition(run, "SUITE_READY", "RESUMED")
    assert completed_stages(run) == ["SUITE_READY"]
    assert get_pipeline_state(run) is None


def test_initial_state_validates_modes(tiny_run_config):
    run = RunDirectory.for_config(tiny_run_config)
    state = initial_state(run, ["drrn"], deterministic=True)
    assert state["current_stage"] == "START" and state["config_hash"] == run.config_hash
    with pytest.raises(ValueError):
        initial_state(run, ["greedy"])


@pytest.mark.slow
def test_full_pipeline_runs_and_is_idempotent(tiny_run_config):
    run = RunDirectory.for_config(tiny_run_config).prepare()
    state = execute_pipeline(run, ["drrn", "lge-fix"], deterministic=True)
    assert state["current_stage"] == "REPORTED"
    assert set(state["agent_scores"]) == {"drrn", "lge-fix"}
    assert (run.reports_dir / "report.txt").exists()
    assert (run.guide_dir / "guide_metrics.txt").exists()
    assert completed_stages(run) == [
        "SUITE_READY", "GUIDE_TRAINED", "GUIDE_EVALUATED", "AGENTS_TRAINED", "AGENTS_EVALUATED", "REPORTED",
    ]
    again = execute_pipeline(run, ["drrn", "lge-fix"], deterministic=True)
    assert again["report_paths"] == state["report_paths"]
    assert get_pipeline_state(run)["current_stage"] == "REPORTED"


@pytest.mark.slow
def test_rerunning_the_pipeline_reproduces_every_log_byte_for_byte(tiny_run_config, tmp_path):
    roots = [tmp_path / "first", tmp_path / "second"]
    for root in roots:
        execute_pipeline(RunDirectory.for_config(tiny_run_config, str(root)).prepare(), ["drrn", "lge-fix"], True)
    logs = sorted(
        p.relative_to(roots[0])
        for mode in ("drrn", "lge-fix")
        for pattern in ("t*/train.jsonl", "t*/eval.jsonl", "t*/final.json")
        for p in (roots[0] / mode).glob(pattern)
    )
    assert len(logs) == 2 * len(tiny_run_config.suite.task_types) * 3
    for relative in logs:
        assert (roots[0] / relative).read_bytes() == (roots[1] / relative).read_bytes(), relative


@pytest.mark.slow
def test_cli_selftest_passes(small_config_path):
    assert main(["--config", small_config_path, "selftest"]) == EXIT_OK
