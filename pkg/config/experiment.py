"""
Experiment configuration: every hyperparameter of a run, loaded from YAML.

Defaults on the models are the full-scale values; `config/default.yaml` is the
desk profile that shrinks hidden sizes, memory and step budgets.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

DEFAULT_CONFIG_PATH = Path(__file__).with_name("default.yaml")


class ConfigError(ValueError):
    """Invalid experiment configuration; carries one diagnostic per problem"""

    def __init__(self, diagnostics: List[str]):
        self.diagnostics = diagnostics
        super().__init__("\n".join(diagnostics))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SuiteConfig(_Section):
    """World generation parameters"""
    task_types: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4, 5])
    variations: int = Field(10, ge=1)
    split: Tuple[int, int, int] = (6, 2, 2)   # train, dev, test
    min_actions: int = Field(200, ge=1)        # action-space floor at reset
    episode_cap: int = Field(100, ge=1)
    plan_depth: int = Field(50, ge=1)
    catalog: Optional[str] = None              # None -> environment/catalog.yaml

    @model_validator(mode="after")
    def _split_fits(self) -> "SuiteConfig":
        if sum(self.split) > self.variations:
            raise ValueError(f"split {self.split} needs {sum(self.split)} variations, only {self.variations} configured")
        if self.split[0] < 1:
            raise ValueError("split must keep at least one training variation")
        return self


class GuideConfig(_Section):
    """Guide encoder and contrastive training"""
    hidden: int = Field(128, ge=1)
    temperature: float = Field(0.05, gt=0)
    lr: float = Field(5e-5, gt=0)
    batch_size: int = Field(128, ge=1)
    epochs: int = Field(10, ge=1)
    k: int = Field(50, ge=1)
    threshold: float = Field(0.52, ge=0, le=1)  # normalized-score cut for relevance labels
    pool_variations: int = Field(10, ge=1)
    negatives_per_positive: int = Field(1, ge=1)
    max_len: int = Field(12, ge=1)  # action tokens
    task_max_len: int = Field(64, ge=1)
    eval_variations: int = Field(5, ge=1)


class ExplorerConfig(_Section):
    """DRRN Q-network and replay"""
    hidden: int = Field(128, ge=1)
    lr: float = Field(1e-4, gt=0)
    memory_size: int = Field(100_000, ge=1)
    priority_fraction: float = Field(0.5, ge=0, le=1)
    discount: float = Field(0.9, gt=0, le=1)
    batch_size: int = Field(64, ge=1)
    update_every: int = Field(1, ge=1)
    state_max_len: int = Field(96, ge=1)
    action_max_len: int = Field(12, ge=1)


class EpsilonConfig(_Section):
    kind: Literal["fixed", "increasing"] = "fixed"
    value: float = Field(0.1, ge=0, le=1)
    total_steps: Optional[int] = Field(None, ge=1)  # None -> the whole step budget


class LGESection(_Section):
    """Training-loop and evaluation protocol"""
    epsilon: EpsilonConfig = Field(default_factory=EpsilonConfig)
    steps_per_worker: int = Field(100_000, ge=1)
    workers: int = Field(8, ge=1)
    max_episodes: Optional[int] = Field(None, ge=1)
    eval_every: int = Field(1000, ge=1)
    eval_variations: int = Field(10, ge=1)
    eval_full_action_set: bool = False
    checkpoint_every: int = Field(1000, ge=1)


class SeedsConfig(_Section):
    """Named seed streams"""
    world: int = 7
    shuffle: int = 0
    rollout: int = 0


class ExperimentConfig(_Section):
    name: str = "desk"
    suite: SuiteConfig = Field(default_factory=SuiteConfig)
    guide: GuideConfig = Field(default_factory=GuideConfig)
    explorer: ExplorerConfig = Field(default_factory=ExplorerConfig)
    lge: LGESection = Field(default_factory=LGESection)
    seeds: SeedsConfig = Field(default_factory=SeedsConfig)
    output_dir: Optional[str] = None

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


#########################################
# Hashes
#########################################

def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON dump (first 16 hex chars)"""
    return hashlib.sha256(config.canonical_json().encode("utf-8")).hexdigest()[:16]


def suite_hash(config: ExperimentConfig) -> str:
    """Hash of everything that determines the generated worlds"""
    payload = {
        "suite": config.suite.model_dump(mode="json"),
        "world_seed": config.seeds.world,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


#########################################
# Loading
#########################################

def _node_lines(node: yaml.Node, prefix: Tuple[Any, ...] = ()) -> Dict[Tuple[Any, ...], int]:
    """Map every key path of a composed YAML document to its 1-based line"""
    lines: Dict[Tuple[Any, ...], int] = {}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = prefix + (key_node.value,)
            lines[path] = key_node.start_mark.line + 1
            lines.update(_node_lines(value_node, path))
    elif isinstance(node, yaml.SequenceNode):
        for index, item in enumerate(node.value):
            path = prefix + (index,)
            lines[path] = item.start_mark.line + 1
            lines.update(_node_lines(item, path))
    return lines


def _diagnostics(error: ValidationError, source: str, lines: Dict[Tuple[Any, ...], int]) -> List[str]:
    messages = []
    for item in error.errors():
        loc = tuple(part for part in item["loc"] if not str(part).startswith("function-after"))
        line = None
        # Fall back to the closest enclosing key that exists in the file
        for cut in range(len(loc), 0, -1):
            if loc[:cut] in lines:
                line = lines[loc[:cut]]
                break
        field = ".".join(str(part) for part in loc) or "<root>"
        where = f"{source}:{line}" if line else source
        messages.append(f"{where}: {field}: {item['msg']}")
    return messages


def parse_config(text: str, source: str = "<config>", overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Parse YAML text into a validated config, applying `section.key=value` overrides"""
    try:
        raw = yaml.safe_load(text) or {}
        composed = yaml.compose(text)
    except yaml.YAMLError as e:
        raise ConfigError([f"{source}: invalid YAML: {e}"])
    if not isinstance(raw, dict):
        raise ConfigError([f"{source}: top level must be a mapping"])

    lines = _node_lines(composed) if composed is not None else {}
    raw = apply_overrides(raw, overrides)

    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(_diagnostics(e, source, lines))


def load_config(path: Optional[str] = None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Load a config file (default: the desk profile); flags win over file values"""
    config_path = Path(path) if path else DEFAULT_CONFIG_PATH
    if not config_path.exists():
        raise ConfigError([f"{config_path}: config file not found"])
    return parse_config(config_path.read_text(encoding="utf-8"), str(config_path), overrides)


def apply_overrides(raw: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """
    Apply dotted overrides such as `guide.lr=0.001` to a raw config dict.

    Values are parsed as YAML scalars so numbers, booleans and lists work.
    """
    result = json.loads(json.dumps(raw))
    for override in overrides:
        if "=" not in override:
            raise ConfigError([f"--set {override}: expected section.key=value"])
        dotted, value_text = override.split("=", 1)
        keys = [key for key in dotted.strip().split(".") if key]
        if not keys:
            raise ConfigError([f"--set {override}: empty key"])
        target = result
        for key in keys[:-1]:
            node = target.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError([f"--set {override}: '{key}' is not a section"])
            target = node
        target[keys[-1]] = yaml.safe_load(value_text)
    return result
