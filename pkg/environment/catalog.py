"""
Typed loader for the MiniWorld catalog (rooms, fixtures, templates, tasks).
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

DEFAULT_CATALOG_PATH = Path(__file__).with_name("catalog.yaml")
SUPPORTED_SCHEMA_VERSIONS = (1,)


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class Template(_Frozen):
    """A verb template with typed object slots"""
    id: str
    text: str
    slots: Tuple[str, ...]

    @property
    def arity(self) -> int:
        return len(self.slots)

    def render(self, names: List[str]) -> str:
        if len(names) != self.arity:
            raise ValueError(f"template '{self.id}' takes {self.arity} objects, got {len(names)}")
        return self.text.format(*names)


class ObjectDef(_Frozen):
    name: str
    tags: Tuple[str, ...] = ()
    props: Dict[str, Any] = Field(default_factory=dict)


class TaskDef(BaseModel):
    """One task type; kind-specific parameters stay loose and are read by the task builders"""
    model_config = ConfigDict(frozen=True, extra="allow")

    kind: str
    opening: str
    description: str

    def param(self, key: str) -> Any:
        extra = self.model_extra or {}
        if key not in extra:
            raise ValueError(f"task kind '{self.kind}' is missing parameter '{key}'")
        return extra[key]


class Catalog(_Frozen):
    schema_version: int
    start_room: str
    rooms: Tuple[str, ...]
    connections: Tuple[Tuple[str, str], ...]
    door_closed_probability: float = Field(0.5, ge=0, le=1)
    fixed_actions: Tuple[str, ...]
    templates: Tuple[Template, ...]
    fixtures: Dict[str, Tuple[ObjectDef, ...]]
    distractors: Tuple[ObjectDef, ...]
    tasks: Tuple[TaskDef, ...]

    @model_validator(mode="after")
    def _check(self) -> "Catalog":
        if self.schema_version not in SUPPORTED_SCHEMA_VERSIONS:
            raise ValueError(f"unsupported catalog schema_version {self.schema_version}")
        if self.start_room not in self.rooms:
            raise ValueError(f"start_room '{self.start_room}' is not a room")
        for a, b in self.connections:
            if a not in self.rooms or b not in self.rooms:
                raise ValueError(f"connection {a}-{b} names an unknown room")
        for room in self.fixtures:
            if room not in self.rooms:
                raise ValueError(f"fixtures listed for unknown room '{room}'")
        if "wait" not in self.fixed_actions or "look around" not in self.fixed_actions:
            raise ValueError("fixed_actions must include 'wait' and 'look around'")
        ids = [t.id for t in self.templates]
        if len(set(ids)) != len(ids):
            raise ValueError("template ids must be unique")
        return self

    @property
    def num_task_types(self) -> int:
        return len(self.tasks)

    def task(self, task_type: int) -> TaskDef:
        if not 0 <= task_type < len(self.tasks):
            raise ValueError(f"unknown task type {task_type}; catalog defines {len(self.tasks)}")
        return self.tasks[task_type]

    def neighbours(self, room: str) -> List[str]:
        """Adjacent rooms in catalog room order"""
        linked = {b for a, b in self.connections if a == room} | {a for a, b in self.connections if b == room}
        return [r for r in self.rooms if r in linked]


_CACHE: Dict[str, Catalog] = {}


def load_catalog(path: Optional[str] = None) -> Catalog:
    """Load and validate a catalog file; results are cached per path"""
    catalog_path = str(Path(path) if path else DEFAULT_CATALOG_PATH)
    if catalog_path not in _CACHE:
        try:
            raw = yaml.safe_load(Path(catalog_path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise FileNotFoundError(f"catalog file not found: {catalog_path}")
        try:
            _CACHE[catalog_path] = Catalog.model_validate(raw)
        except ValidationError as e:
            raise ValueError(f"invalid catalog {catalog_path}:\n{e}")
    return _CACHE[catalog_path]


def catalog_from_dict(raw: Dict[str, Any]) -> Catalog:
    """Build a catalog from an in-memory mapping (used for small custom worlds)"""
    return Catalog.model_validate(raw)
