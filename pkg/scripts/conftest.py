"""
Shared pytest fixtures: a small generated suite, toy vocabularies and run directories.
"""

import os
import sys

import pytest

# Add project root to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from agents.textcodec import build_vocab  # noqa: E402
from config.experiment import ExperimentConfig, parse_config  # noqa: E402
from environment.catalog import load_catalog  # noqa: E402
from environment.suite import Suite  # noqa: E402

SMALL_CONFIG = """
name: tiny
suite:
  task_types: [0, 1, 2, 3, 4, 5]
  variations: 4
  split: [2, 1, 1]
guide:
  hidden: 8
  epochs: 1
  k: 10
  eval_variations: 1
  pool_variations: 2
explorer:
  hidden: 8
  memory_size: 200
  batch_size: 4
lge:
  steps_per_worker: 40
  workers: 1
  eval_every: 20
  eval_variations: 1
  checkpoint_every: 20
"""


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


@pytest.fixture(scope="session")
def small_config() -> ExperimentConfig:
    return parse_config(SMALL_CONFIG, "<tiny>")


@pytest.fixture(scope="session")
def small_suite(small_config, catalog) -> Suite:
    return Suite.from_config(small_config, catalog)


@pytest.fixture
def toy_texts():
    return [
        "you are in the kitchen",
        "in your inventory you see nothing",
        "this room is called the kitchen",
        "open door to hallway",
        "pick up metal pot",
        "focus on red apple",
        "your task is to boil water",
    ]


@pytest.fixture
def toy_vocab(toy_texts):
    return build_vocab(toy_texts)


@pytest.fixture
def tiny_run_config(small_config, tmp_path) -> ExperimentConfig:
    """The small config with its output directory under tmp_path"""
    return small_config.model_copy(update={"output_dir": str(tmp_path / "run")})


@pytest.fixture
def small_config_path(tmp_path) -> str:
    """SMALL_CONFIG on disk with its output directory under tmp_path"""
    path = tmp_path / "tiny.yaml"
    path.write_text(SMALL_CONFIG + f"output_dir: {tmp_path / 'run'}\n", encoding="utf-8")
    return str(path)
