"""
Task-type builders.

Each builder turns a catalog task entry into (1) per-variation parameters,
which fix the task description, and (2) a populated world with milestones.
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from environment.catalog import Catalog, TaskDef, load_catalog
from environment.miniworld import (
    NOWHERE,
    Goal,
    Milestone,
    Placement,
    TaskSpec,
    WorldGraph,
    WorldObject,
    WorldState,
    enumerate_actions,
    inside_location,
    room_location,
)

logger = logging.getLogger(__name__)

SPLIT_POOLS = {"train": "train", "dev": "heldout", "test": "heldout"}
TARGET_PHASE = {"boil": "gas", "melt": "liquid", "freeze": "solid"}


def _choice(rng: np.random.Generator, items: Sequence[Any]) -> Any:
    if not items:
        raise ValueError("cannot choose from an empty catalog list")
    return items[int(rng.integers(len(items)))]


#########################################
# World Builder
#########################################

class WorldBuilder:
    """Accumulates objects and their initial state, then freezes them into a WorldGraph"""

    def __init__(self, catalog: Catalog, rng: np.random.Generator):
        self.catalog = catalog
        self.rng = rng
        self._names: List[str] = []
        self._tags: List[frozenset] = []
        self._props: List[Dict[str, Any]] = []
        self._location: List[str] = []
        self._phase: List[Optional[str]] = []
        self._opened: set = set()
        self._fixtures: Dict[str, List[int]] = {room: [] for room in catalog.rooms}
        self.doors: Dict[tuple, int] = {}

        self.room_ids = {room: self.add(room, ["room"], NOWHERE) for room in catalog.rooms}
        for room in catalog.rooms:
            for fixture in catalog.fixtures.get(room, ()):
                fid = self.add(fixture.name, fixture.tags, room_location(room), props=fixture.props)
                self._fixtures[room].append(fid)
        for a, b in catalog.connections:
            ab = self.add(f"door to {b}", ["door", "openable"], room_location(a), props={"leads_to": b})
            ba = self.add(f"door to {a}", ["door", "openable"], room_location(b), props={"leads_to": a})
            self._props[ab]["partner"] = ba
            self._props[ba]["partner"] = ab
            self.doors[(a, b)] = ab
            self.doors[(b, a)] = ba
            if self.rng.random() >= catalog.door_closed_probability:
                self._opened.update((ab, ba))

    @property
    def rooms(self) -> List[str]:
        return list(self.catalog.rooms)

    def rooms_except(self, *excluded: str) -> List[str]:
        return [room for room in self.catalog.rooms if room not in excluded]

    def add(
        self,
        name: str,
        tags: Iterable[str],
        location: str,
        props: Optional[Dict[str, Any]] = None,
        phase: Optional[str] = None,
    ) -> int:
        tags = frozenset(tags)
        # Doors share names across rooms; they are never visible together
        if "door" not in tags and name in self._names:
            raise ValueError(f"duplicate object name '{name}'")
        self._names.append(name)
        self._tags.append(tags)
        self._props.append(dict(props or {}))
        self._location.append(location)
        self._phase.append(phase)
        return len(self._names) - 1

    def has_name(self, name: str) -> bool:
        return name in self._names

    def fixture(self, name: str) -> int:
        for ids in self._fixtures.values():
            for fid in ids:
                if self._names[fid] == name:
                    return fid
        raise ValueError(f"catalog has no fixture named '{name}'")

    def random_spot(self, rooms: Sequence[str], enclosed: bool = False) -> str:
        """A room floor or a fixture surface; closed fixtures only when `enclosed`"""
        spots = []
        for room in rooms:
            spots.append(room_location(room))
            for fid in self._fixtures[room]:
                tags = self._tags[fid]
                if "container" not in tags or "device" in tags or "planter" in tags:
                    continue
                if "openable" in tags and not enclosed:
                    continue
                spots.append(inside_location(fid))
        return _choice(self.rng, spots)

    def goal(
        self,
        milestones: Sequence[Milestone],
        relevant: Iterable[int],
        focus_targets: Optional[Iterable[int]] = None,
        placement: Optional[Placement] = None,
    ) -> Goal:
        """Task-relevant objects plus their enclosing containers and every door"""
        closure = set(relevant)
        for obj in list(closure):
            loc = self._location[obj]
            while loc.startswith("in:"):
                parent = int(loc[3:])
                closure.add(parent)
                loc = self._location[parent]
        closure.update(self.doors.values())
        return Goal(
            milestones=tuple(milestones),
            focus_targets=frozenset(focus_targets) if focus_targets is not None else None,
            placement=placement,
            relevant=frozenset(closure),
        )

    def freeze(self, goal: Goal) -> WorldGraph:
        objects = tuple(
            WorldObject(id=i, name=self._names[i], tags=self._tags[i], props=dict(self._props[i]))
            for i in range(len(self._names))
        )
        initial = WorldState(
            agent_room=self.catalog.start_room,
            location=tuple(self._location),
            opened=frozenset(self._opened),
            active=frozenset(),
            phase=tuple(self._phase),
            stage=tuple(0 for _ in self._names),
            connections=frozenset(),
            measured=frozenset(),
            focused=None,
            achieved=tuple(False for _ in goal.milestones),
        )
        return WorldGraph(
            rooms=tuple(self.catalog.rooms),
            room_ids=dict(self.room_ids),
            adjacency={room: tuple(self.catalog.neighbours(room)) for room in self.catalog.rooms},
            doors=dict(self.doors),
            objects=objects,
            start_room=self.catalog.start_room,
            initial=initial,
            goal=goal,
        )

    def finish(self, goal: Goal, min_actions: int) -> WorldGraph:
        """
        Scatter distractors, then pad the start room until the reset action
        set reaches `min_actions`.
        """
        order = self.rng.permutation(len(self.catalog.distractors))
        pool = [self.catalog.distractors[i] for i in order if not self.has_name(self.catalog.distractors[i].name)]

        for room in self.rooms_except(self.catalog.start_room):
            for _ in range(int(self.rng.integers(1, 3))):
                if pool:
                    item = pool.pop(0)
                    self.add(item.name, item.tags, self.random_spot([room]), props=item.props)

        world = self.freeze(goal)
        while len(enumerate_actions(world, self.catalog, world.initial)) < min_actions:
            if not pool:
                raise ValueError(
                    f"catalog has too few distractors to reach {min_actions} actions at reset"
                )
            item = pool.pop(0)
            self.add(item.name, item.tags, room_location(self.catalog.start_room), props=item.props)
            world = self.freeze(goal)
        return world


#########################################
# Task Builders
#########################################

class BaseTaskBuilder(ABC):
    """Abstract base class for task-type builders"""

    kind: str = ""

    @abstractmethod
    def parameters(self, task_def: TaskDef, rng: np.random.Generator, split: str) -> Dict[str, Any]:
        """
        Per-variation parameters; the description template is formatted with them.

        Args:
            task_def: Catalog entry for the task type
            rng: Generator seeded from (task type, variation) only
            split: Split of the variation; dev/test draw from held-out nouns

        Returns:
            JSON-serializable parameter mapping
        """

    @abstractmethod
    def populate(self, world: WorldBuilder, task_def: TaskDef, params: Dict[str, Any]) -> Goal:
        """Place task objects into the world and return the goal"""


class FindCategoryBuilder(BaseTaskBuilder):
    kind = "find_category"

    def parameters(self, task_def, rng, split):
        categories = task_def.param("categories")
        index = int(rng.integers(len(categories)))
        category = categories[index]
        noun = _choice(rng, category[SPLIT_POOLS[split]])
        return {
            "category": index,
            "label": category["label"],
            "item": f"{category['marker']} {noun}",
            "box": _choice(rng, task_def.param("box_names")),
            "box_room": _choice(rng, task_def.param("box_rooms")),
            "pool": SPLIT_POOLS[split],
        }

    def populate(self, world, task_def, params):
        categories = task_def.param("categories")
        category = categories[params["category"]]
        box_room = params["box_room"]

        item = world.add(params["item"], category["tags"], world.random_spot(world.rooms_except(box_room)))
        box = world.add(params["box"], ["container"], room_location(box_room))

        # One look-alike from every other category; focusing on it fails the task
        for index, other in enumerate(categories):
            if index == params["category"]:
                continue
            name = f"{other['marker']} {_choice(world.rng, other[params['pool']])}"
            world.add(name, other["tags"], world.random_spot(world.rooms))

        members = frozenset({item})
        return world.goal(
            milestones=[
                Milestone("focused", (members,)),
                Milestone("any_holding", (members,)),
                Milestone("in_room", (box_room,)),
                Milestone("any_inside", (members, box)),
            ],
            relevant=[item, box],
            focus_targets=members,
        )


class BringToContainerBuilder(BaseTaskBuilder):
    kind = "bring_to_container"

    def parameters(self, task_def, rng, split):
        container = _choice(rng, task_def.param("containers"))
        return {
            "item": _choice(rng, task_def.param(SPLIT_POOLS[split])),
            "container": container["name"],
            "container_room": container["room"],
        }

    def populate(self, world, task_def, params):
        room = params["container_room"]
        item = world.add(params["item"], ["portable"], world.random_spot(world.rooms_except(room)))
        container = world.fixture(params["container"])
        return world.goal(
            milestones=[
                Milestone("holding", (item,)),
                Milestone("in_room", (room,)),
                Milestone("opened", (container,)),
                Milestone("inside", (item, container)),
            ],
            relevant=[item, container],
        )


class ChangeStateBuilder(BaseTaskBuilder):
    kind = "change_state"

    def parameters(self, task_def, rng, split):
        entry = _choice(rng, task_def.param(SPLIT_POOLS[split]))
        verb = entry["verb"]
        return {
            "substance": entry["noun"],
            "phase": entry["phase"],
            "verb": verb,
            "target_phase": TARGET_PHASE[verb],
            "device": task_def.param("devices")[verb],
            "vessel": task_def.param("vessel"),
        }

    def populate(self, world, task_def, params):
        pot = world.add(params["vessel"], ["portable", "container"], world.random_spot(world.rooms, enclosed=True))
        substance = world.add(params["substance"], ["substance"], inside_location(pot), phase=params["phase"])
        device = world.fixture(params["device"])
        return world.goal(
            milestones=[
                Milestone("focused", (frozenset({substance}),)),
                Milestone("inside", (pot, device)),
                Milestone("active", (device,)),
                Milestone("phase", (substance, params["target_phase"])),
            ],
            relevant=[pot, substance, device],
            focus_targets=[substance],
        )


class MeasureAndFocusBuilder(BaseTaskBuilder):
    kind = "measure_and_focus"

    def parameters(self, task_def, rng, split):
        boxes = list(task_def.param("box_names"))
        above_box, below_box = [boxes[i] for i in rng.permutation(len(boxes))[:2]]
        threshold = int(_choice(rng, task_def.param("thresholds")))
        above = bool(rng.random() < 0.5)
        offset = int(rng.integers(10, 31))
        return {
            "substance": _choice(rng, task_def.param(SPLIT_POOLS[split])),
            "threshold": threshold,
            "temperature": threshold + offset if above else threshold - offset,
            "above_box": above_box,
            "below_box": below_box,
            "correct_box": above_box if above else below_box,
            "box_room": _choice(rng, task_def.param("box_rooms")),
        }

    def populate(self, world, task_def, params):
        thermometer = world.add(
            task_def.param("tool"), ["portable", "thermometer"], world.random_spot(world.rooms, enclosed=True)
        )
        cup = world.add(task_def.param("vessel"), ["portable", "container"], world.random_spot(world.rooms))
        substance = world.add(
            params["substance"], ["substance"], inside_location(cup),
            props={"temperature": params["temperature"]}, phase="liquid",
        )
        room = room_location(params["box_room"])
        above = world.add(params["above_box"], ["container"], room)
        below = world.add(params["below_box"], ["container"], room)
        correct = above if params["correct_box"] == params["above_box"] else below
        return world.goal(
            milestones=[
                Milestone("holding", (thermometer,)),
                Milestone("measured", (substance,)),
                Milestone("in_room", (params["box_room"],)),
                Milestone("focused", (frozenset({correct}),)),
            ],
            relevant=[thermometer, cup, substance, above, below],
            focus_targets=[correct],
        )


class ConductivityTestBuilder(BaseTaskBuilder):
    kind = "conductivity_test"

    def parameters(self, task_def, rng, split):
        entry = _choice(rng, task_def.param(SPLIT_POOLS[split]))
        boxes = list(task_def.param("box_names"))
        yes_box, no_box = [boxes[i] for i in rng.permutation(len(boxes))[:2]]
        return {
            "item": entry["noun"],
            "conductive": bool(entry["conductive"]),
            "yes_box": yes_box,
            "no_box": no_box,
            "test_room": task_def.param("test_room"),
        }

    def populate(self, world, task_def, params):
        test_room = params["test_room"]
        item = world.add(
            params["item"], ["portable", "connectable"],
            world.random_spot(world.rooms_except(test_room)),
            props={"conductive": params["conductive"]},
        )
        yes_box = world.add(params["yes_box"], ["container"], room_location(test_room))
        no_box = world.add(params["no_box"], ["container"], room_location(test_room))
        correct = yes_box if params["conductive"] else no_box
        battery = world.fixture(task_def.param("battery"))
        bulb = world.fixture(task_def.param("bulb"))
        return world.goal(
            milestones=[
                Milestone("in_room", (test_room,)),
                Milestone("focused", (frozenset({item}),)),
                Milestone("circuit", (item, battery, bulb)),
                Milestone("inside", (item, correct)),
            ],
            relevant=[item, yes_box, no_box, battery, bulb],
            focus_targets=[item],
            placement=Placement(item=item, correct=correct, boxes=frozenset({yes_box, no_box})),
        )


class GrowPlantBuilder(BaseTaskBuilder):
    kind = "grow_plant"

    def parameters(self, task_def, rng, split):
        plant = _choice(rng, task_def.param(SPLIT_POOLS[split]))
        return {
            "plant": plant,
            "seed": f"{plant} seed",
            "planter": task_def.param("planter"),
            "can": task_def.param("can"),
        }

    def populate(self, world, task_def, params):
        seed = world.add(params["seed"], ["portable", "seed"], world.random_spot(world.rooms))
        can = world.add(params["can"], ["portable", "container"], world.random_spot(world.rooms))
        water = world.add("water", ["substance", "water"], inside_location(can), phase="liquid")
        planter = world.fixture(params["planter"])
        return world.goal(
            milestones=[
                Milestone("focused", (frozenset({seed}),)),
                Milestone("inside", (seed, planter)),
                Milestone("watered", (planter,)),
                Milestone("stage", (seed, 2)),
            ],
            relevant=[seed, can, water, planter],
            focus_targets=[seed],
        )


TASK_BUILDERS: Dict[str, BaseTaskBuilder] = {
    builder.kind: builder
    for builder in (
        FindCategoryBuilder(),
        BringToContainerBuilder(),
        ChangeStateBuilder(),
        MeasureAndFocusBuilder(),
        ConductivityTestBuilder(),
        GrowPlantBuilder(),
    )
}


def get_task_builder(kind: str) -> BaseTaskBuilder:
    """
    Factory function for task builders.

    Raises:
        ValueError: If the kind is not registered
    """
    if kind not in TASK_BUILDERS:
        raise ValueError(f"Unsupported task kind: {kind}. Supported kinds: {sorted(TASK_BUILDERS)}")
    return TASK_BUILDERS[kind]


#########################################
# Entry Points
#########################################

def make_task_spec(
    task_type: int,
    variation: int,
    split: str,
    catalog: Optional[Catalog] = None,
) -> TaskSpec:
    """Build the TaskSpec of (task type, variation); identical inputs give an identical description"""
    if split not in SPLIT_POOLS:
        raise ValueError(f"unknown split '{split}'; expected one of {sorted(SPLIT_POOLS)}")
    if variation < 0:
        raise ValueError(f"variation must be non-negative, got {variation}")
    catalog = catalog or load_catalog()
    task_def = catalog.task(task_type)
    builder = get_task_builder(task_def.kind)
    params = builder.parameters(task_def, np.random.default_rng([task_type, variation]), split)
    return TaskSpec(
        task_type=task_type,
        variation=variation,
        description=task_def.description.format(**params),
        split=split,
        kind=task_def.kind,
        params=params,
    )


def build_world(
    catalog: Catalog,
    spec: TaskSpec,
    world_seed: int,
    attempt: int = 0,
    min_actions: int = 200,
) -> WorldGraph:
    """Lay out one world for `spec`; the layout is a pure function of the arguments"""
    if world_seed < 0:
        raise ValueError(f"world_seed must be non-negative, got {world_seed}")
    task_def = catalog.task(spec.task_type)
    builder = get_task_builder(task_def.kind)
    params = dict(spec.params) or builder.parameters(
        task_def, np.random.default_rng([spec.task_type, spec.variation]), spec.split
    )
    world = WorldBuilder(catalog, np.random.default_rng([world_seed, spec.task_type, spec.variation, attempt]))
    goal = builder.populate(world, task_def, params)
    return world.finish(goal, min_actions)
