"""
MiniWorld: a deterministic miniature science-lab text world.

Rooms, fixtures and portable objects; template x object action spaces;
milestone rewards that sum to 1.0 exactly when the task is solved.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, FrozenSet, List, Literal, Mapping, Optional, Sequence, Tuple

from environment.catalog import Catalog, load_catalog

logger = logging.getLogger(__name__)

Split = Literal["train", "dev", "test"]
SPLITS: Tuple[str, ...] = ("train", "dev", "test")

INVENTORY = "inventory"
GONE = "gone"
NOWHERE = ""

FIXED_TEMPLATE = "fixed"
PHASE_UP = {"solid": "liquid", "liquid": "gas"}
PHASE_DOWN = {"gas": "liquid", "liquid": "solid"}
GROWN_STAGE = 2
STAGE_NAMES = ("seed", "sprout", "grown plant")


def room_location(room: str) -> str:
    return f"room:{room}"


def inside_location(container: int) -> str:
    return f"in:{container}"


#########################################
# Domain Types
#########################################

@dataclass(frozen=True)
class TaskSpec:
    """A task type, variation, and its natural-language description"""
    task_type: int
    variation: int
    description: str
    split: Split
    kind: str = ""
    params: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "task_type": self.task_type,
            "variation": self.variation,
            "description": self.description,
            "split": self.split,
            "kind": self.kind,
            "params": dict(self.params),
        }


@dataclass(frozen=True, eq=False)
class Action:
    """A template with filled object slots; equality is on the rendered text"""
    template: str
    slots: Tuple[int, ...]
    text: str

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Action) and self.text == other.text

    def __hash__(self) -> int:
        return hash(self.text)

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class Observation:
    obs: str
    inventory: str
    look: str
    task: str

    def __post_init__(self):
        for name in ("obs", "inventory", "look", "task"):
            if not getattr(self, name):
                raise ValueError(f"observation field '{name}' must be a non-empty string")

    def digest(self) -> str:
        blob = "\n".join((self.obs, self.inventory, self.look))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class WorldObject:
    id: int
    name: str
    tags: FrozenSet[str]
    props: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def has(self, tag: str) -> bool:
        return tag in self.tags


@dataclass(frozen=True)
class WorldState:
    """Mutable part of the world, stored immutably so states can be hashed and shared"""
    agent_room: str
    location: Tuple[str, ...]
    opened: FrozenSet[int]
    active: FrozenSet[int]
    phase: Tuple[Optional[str], ...]
    stage: Tuple[int, ...]
    connections: FrozenSet[Tuple[int, int]]
    measured: FrozenSet[int]
    focused: Optional[int]
    achieved: Tuple[bool, ...]
    failed: bool = False
    steps: int = 0

    def key(self) -> tuple:
        """Identity of the state, ignoring the step counter"""
        return (
            self.agent_room, self.location, self.opened, self.active, self.phase,
            self.stage, self.connections, self.measured, self.focused, self.achieved, self.failed,
        )


@dataclass(frozen=True)
class Milestone:
    kind: str
    args: Tuple[Any, ...]


@dataclass(frozen=True)
class Placement:
    """Answer-box rule: putting `item` in any box other than `correct` fails the task"""
    item: int
    correct: int
    boxes: FrozenSet[int]


@dataclass(frozen=True)
class Goal:
    milestones: Tuple[Milestone, ...]
    focus_targets: Optional[FrozenSet[int]]
    placement: Optional[Placement]
    relevant: FrozenSet[int]


@dataclass(frozen=True)
class WorldGraph:
    """Immutable world: objects, room layout, initial state and goal"""
    rooms: Tuple[str, ...]
    room_ids: Mapping[str, int]
    adjacency: Mapping[str, Tuple[str, ...]]
    doors: Mapping[Tuple[str, str], int]
    objects: Tuple[WorldObject, ...]
    start_room: str
    initial: WorldState
    goal: Goal

    def name(self, obj: int) -> str:
        return self.objects[obj].name

    def to_dict(self) -> Dict[str, Any]:
        state = self.initial
        return {
            "rooms": list(self.rooms),
            "start_room": self.start_room,
            "doors": {f"{a}->{b}": door for (a, b), door in sorted(self.doors.items())},
            "objects": [
                {
                    "id": obj.id,
                    "name": obj.name,
                    "tags": sorted(obj.tags),
                    "props": dict(sorted(obj.props.items())),
                    "location": state.location[obj.id],
                    "phase": state.phase[obj.id],
                    "open": obj.id in state.opened,
                }
                for obj in self.objects
            ],
            "goal": {
                "milestones": [[m.kind, [_plain(arg) for arg in m.args]] for m in self.goal.milestones],
                "focus_targets": sorted(self.goal.focus_targets) if self.goal.focus_targets is not None else None,
                "placement": (
                    {"item": self.goal.placement.item, "correct": self.goal.placement.correct,
                     "boxes": sorted(self.goal.placement.boxes)}
                    if self.goal.placement else None
                ),
                "relevant": sorted(self.goal.relevant),
            },
        }


def _plain(value: Any) -> Any:
    if isinstance(value, (frozenset, set)):
        return sorted(value)
    return value


#########################################
# Visibility and Text
#########################################

def _article(name: str) -> str:
    return f"an {name}" if name[:1] in "aeiou" else f"a {name}"


def is_reachable(world: WorldGraph, state: WorldState, obj: int) -> bool:
    """True when the object is in the agent's room or inventory, through open containers"""
    loc = state.location[obj]
    here = room_location(state.agent_room)
    for _ in range(len(world.objects) + 1):
        if loc == INVENTORY or loc == here:
            return True
        if not loc.startswith("in:"):
            return False
        parent = int(loc[3:])
        if world.objects[parent].has("openable") and parent not in state.opened:
            return False
        loc = state.location[parent]
    return False


def visible_ids(world: WorldGraph, state: WorldState) -> List[int]:
    """Visible non-room objects in id order"""
    return [
        obj.id for obj in world.objects
        if not obj.has("room") and is_reachable(world, state, obj.id)
    ]


def _contents(state: WorldState, container: int) -> List[int]:
    target = inside_location(container)
    return [i for i, loc in enumerate(state.location) if loc == target]


def describe(world: WorldGraph, state: WorldState, obj: int) -> str:
    thing = world.objects[obj]
    text = _article(thing.name)
    notes = []
    if thing.has("openable"):
        notes.append("open" if obj in state.opened else "closed")
    if thing.has("device"):
        notes.append("on" if obj in state.active else "off")
    if state.phase[obj]:
        notes.append(state.phase[obj])
    if thing.has("seed"):
        notes.append(STAGE_NAMES[state.stage[obj]])
    if notes:
        text += f" ({', '.join(notes)})"
    if thing.has("container") and (not thing.has("openable") or obj in state.opened):
        inner = [describe(world, state, i) for i in _contents(state, obj)]
        if inner:
            text += f" containing {', '.join(inner)}"
    return text


def look_text(world: WorldGraph, state: WorldState) -> str:
    here = room_location(state.agent_room)
    lines = [f"This room is called the {state.agent_room}. In it, you see:"]
    doors = []
    for obj in world.objects:
        if state.location[obj.id] != here:
            continue
        if obj.has("door"):
            doors.append(describe(world, state, obj.id))
        else:
            lines.append(f"\t{describe(world, state, obj.id)}")
    if len(lines) == 1:
        lines.append("\tnothing of note")
    if doors:
        lines.append("You also see:")
        lines.extend(f"\t{door}" for door in doors)
    return "\n".join(lines)


def inventory_text(world: WorldGraph, state: WorldState) -> str:
    held = [describe(world, state, i) for i, loc in enumerate(state.location) if loc == INVENTORY]
    if not held:
        return "In your inventory, you see: nothing."
    return "In your inventory, you see:\n" + "\n".join(f"\t{item}" for item in held)


#########################################
# Action Enumeration
#########################################

def enumerate_actions(
    world: WorldGraph,
    catalog: Catalog,
    state: WorldState,
    restrict: Optional[FrozenSet[int]] = None,
    templates: Optional[FrozenSet[str]] = None,
    fixed: Optional[Sequence[str]] = None,
) -> List[Action]:
    """
    Valid actions in canonical order: fixed actions, then template-major, then object ids.

    `restrict`, `templates` and `fixed` select an order-preserving subsequence
    (used by the planner).
    """
    actions = [
        Action(FIXED_TEMPLATE, (), text)
        for text in catalog.fixed_actions
        if fixed is None or text in fixed
    ]
    visible = visible_ids(world, state)
    if restrict is not None:
        visible = [i for i in visible if i in restrict]
    rooms = [world.room_ids[r] for r in world.adjacency[state.agent_room]]

    def candidates(slot: str) -> List[int]:
        if slot == "room":
            return rooms
        if slot == "any":
            return visible
        return [i for i in visible if world.objects[i].has(slot)]

    for template in catalog.templates:
        if templates is not None and template.id not in templates:
            continue
        if template.arity == 1:
            for i in candidates(template.slots[0]):
                actions.append(Action(template.id, (i,), template.render([world.objects[i].name])))
        elif template.arity == 2:
            second = candidates(template.slots[1])
            for i in candidates(template.slots[0]):
                for j in second:
                    if i != j:
                        names = [world.objects[i].name, world.objects[j].name]
                        actions.append(Action(template.id, (i, j), template.render(names)))
        else:
            raise ValueError(f"template '{template.id}' has unsupported arity {template.arity}")
    return actions


#########################################
# Dynamics
#########################################

def _move_to(state: WorldState, obj: int, location: str) -> WorldState:
    locations = list(state.location)
    locations[obj] = location
    return replace(state, location=tuple(locations))


def _is_inside(state: WorldState, obj: int, ancestor: int) -> bool:
    loc = state.location[obj]
    seen = 0
    while loc.startswith("in:") and seen <= len(state.location):
        parent = int(loc[3:])
        if parent == ancestor:
            return True
        loc = state.location[parent]
        seen += 1
    return False


def _toggle_open(world: WorldGraph, state: WorldState, obj: int, value: bool) -> WorldState:
    ids = {obj}
    partner = world.objects[obj].props.get("partner")
    if partner is not None:
        ids.add(partner)
    opened = state.opened | ids if value else state.opened - ids
    return replace(state, opened=frozenset(opened))


def _apply(world: WorldGraph, state: WorldState, action: Action) -> Tuple[WorldState, str]:
    """Effect of one action, before time passes"""
    goal = world.goal
    template = action.template

    if template == FIXED_TEMPLATE:
        if action.text == "look around":
            return state, look_text(world, state)
        if action.text == "inventory":
            return state, inventory_text(world, state)
        return state, "You wait for a moment."

    if template == "go_to":
        destination = world.objects[action.slots[0]].name
        door = world.doors[(state.agent_room, destination)]
        if door not in state.opened:
            return state, f"The door to the {destination} is closed."
        return replace(state, agent_room=destination), f"You move to the {destination}."

    x = action.slots[0]
    thing = world.objects[x]
    name = thing.name

    if template == "look_at":
        return state, f"You see {describe(world, state, x)}."

    if template == "focus_on":
        state = replace(state, focused=x)
        if goal.focus_targets is not None and x not in goal.focus_targets:
            return replace(state, failed=True), f"You focus on the {name}. That was the wrong thing to focus on; the task has failed."
        return state, f"You focus on the {name}."

    if template == "pick_up":
        if not thing.has("portable"):
            return state, f"You can't pick up the {name}."
        if state.location[x] == INVENTORY:
            return state, f"The {name} is already in your inventory."
        return _move_to(state, x, INVENTORY), f"You move the {name} to the inventory."

    if template == "drop":
        if state.location[x] != INVENTORY:
            return state, f"The {name} is not in your inventory."
        return _move_to(state, x, room_location(state.agent_room)), f"You drop the {name}."

    if template in ("open", "close"):
        want = template == "open"
        if not thing.has("openable"):
            return state, f"The {name} can't be {'opened' if want else 'closed'}."
        if (x in state.opened) == want:
            return state, f"The {name} is already {'open' if want else 'closed'}."
        return _toggle_open(world, state, x, want), f"The {name} is now {'open' if want else 'closed'}."

    if template in ("activate", "deactivate"):
        want = template == "activate"
        if not thing.has("device"):
            return state, f"The {name} can't be {template}d."
        if (x in state.active) == want:
            return state, f"The {name} is already {'on' if want else 'off'}."
        active = state.active | {x} if want else state.active - {x}
        return replace(state, active=frozenset(active)), f"The {name} is now {'on' if want else 'off'}."

    if template == "eat":
        if not thing.has("edible"):
            return state, f"You can't eat the {name}."
        return _move_to(state, x, GONE), f"You eat the {name}."

    if template == "touch":
        feel = "cold and hard" if thing.props.get("conductive") else "ordinary"
        return state, f"The {name} feels {feel}."

    y = action.slots[1] if len(action.slots) > 1 else None
    if y is None:
        return state, "Nothing happens."
    other = world.objects[y]

    if template == "move":
        if not thing.has("portable"):
            return state, f"You can't move the {name}."
        if not other.has("container"):
            return state, f"You can't put things in the {other.name}."
        if other.has("openable") and y not in state.opened:
            return state, f"The {other.name} is closed."
        if state.location[x] == inside_location(y) or _is_inside(state, y, x):
            return state, "Nothing happens."
        state = _move_to(state, x, inside_location(y))
        placement = goal.placement
        if placement and x == placement.item and y in placement.boxes and y != placement.correct:
            return replace(state, failed=True), f"You move the {name} to the {other.name}. That is the wrong answer; the task has failed."
        return state, f"You move the {name} to the {other.name}."

    if template == "pour":
        if not (thing.has("container") and other.has("container")):
            return state, "Nothing happens."
        if other.has("openable") and y not in state.opened:
            return state, f"The {other.name} is closed."
        liquids = [i for i in _contents(state, x) if world.objects[i].has("substance")]
        if not liquids:
            return state, f"The {name} has nothing to pour."
        for liquid in liquids:
            state = _move_to(state, liquid, inside_location(y))
        return state, f"You pour the contents of the {name} into the {other.name}."

    if template == "connect":
        if not (thing.has("connectable") and other.has("connectable")):
            return state, f"You can't connect the {name} to the {other.name}."
        pair = (min(x, y), max(x, y))
        if pair in state.connections:
            return state, f"The {name} is already connected to the {other.name}."
        return replace(state, connections=state.connections | {pair}), f"The {name} is now connected to the {other.name}."

    if template == "use":
        if not thing.has("thermometer"):
            return state, "Nothing happens."
        if state.location[x] != INVENTORY:
            return state, f"You need to hold the {name} first."
        temperature = other.props.get("temperature")
        if temperature is None:
            return state, f"The {name} measures a temperature of 20 degrees celsius."
        state = replace(state, measured=state.measured | {y})
        return state, f"The {name} measures a temperature of {temperature} degrees celsius."

    return state, "Nothing happens."


def _heating_device(world: WorldGraph, state: WorldState, obj: int) -> Optional[int]:
    """Nearest enclosing active device within two container levels"""
    loc = state.location[obj]
    for _ in range(2):
        if not loc.startswith("in:"):
            return None
        parent = int(loc[3:])
        if world.objects[parent].has("device") and parent in state.active:
            return parent
        loc = state.location[parent]
    return None


def _tick(world: WorldGraph, state: WorldState) -> WorldState:
    """Time passes: devices change phases and watered planters grow seeds"""
    phases = list(state.phase)
    stages = list(state.stage)
    changed = False
    for obj in world.objects:
        if obj.has("substance") and phases[obj.id]:
            device = _heating_device(world, state, obj.id)
            if device is not None:
                table = PHASE_UP if world.objects[device].props.get("effect") == "heat" else PHASE_DOWN
                new_phase = table.get(phases[obj.id])
                if new_phase:
                    phases[obj.id] = new_phase
                    changed = True
        if obj.has("seed") and stages[obj.id] < GROWN_STAGE:
            loc = state.location[obj.id]
            if loc.startswith("in:"):
                planter = int(loc[3:])
                if world.objects[planter].has("planter") and _holds_water(world, state, planter):
                    stages[obj.id] += 1
                    changed = True
    if not changed:
        return state
    return replace(state, phase=tuple(phases), stage=tuple(stages))


def _holds_water(world: WorldGraph, state: WorldState, container: int) -> bool:
    return any(world.objects[i].has("water") for i in _contents(state, container))


MILESTONE_CHECKS: Dict[str, Callable[..., bool]] = {
    "in_room": lambda w, s, room: s.agent_room == room,
    "holding": lambda w, s, obj: s.location[obj] == INVENTORY,
    "any_holding": lambda w, s, ids: any(s.location[i] == INVENTORY for i in ids),
    "inside": lambda w, s, obj, box: s.location[obj] == inside_location(box),
    "any_inside": lambda w, s, ids, box: any(s.location[i] == inside_location(box) for i in ids),
    "focused": lambda w, s, ids: s.focused in ids,
    "opened": lambda w, s, obj: obj in s.opened,
    "active": lambda w, s, obj: obj in s.active,
    "phase": lambda w, s, obj, phase: s.phase[obj] == phase,
    "measured": lambda w, s, obj: obj in s.measured,
    "circuit": lambda w, s, obj, battery, bulb: {
        (min(battery, obj), max(battery, obj)),
        (min(obj, bulb), max(obj, bulb)),
        (min(battery, bulb), max(battery, bulb)),
    } <= s.connections,
    "stage": lambda w, s, obj, stage: s.stage[obj] >= stage,
    "watered": lambda w, s, planter: _holds_water(w, s, planter),
}


def check_milestone(world: WorldGraph, state: WorldState, milestone: Milestone) -> bool:
    check = MILESTONE_CHECKS.get(milestone.kind)
    if check is None:
        raise ValueError(f"unknown milestone kind: {milestone.kind}")
    return check(world, state, *milestone.args)


def transition(world: WorldGraph, state: WorldState, action: Action) -> Tuple[WorldState, str, int]:
    """
    Pure transition: apply the action, let time pass, score milestones.

    Returns (next state, observation text, number of newly achieved milestones).
    """
    state, message = _apply(world, state, action)
    state = replace(_tick(world, state), steps=state.steps + 1)
    if state.failed:
        return state, message, 0
    achieved = list(state.achieved)
    newly = 0
    for index, milestone in enumerate(world.goal.milestones):
        if not achieved[index] and check_milestone(world, state, milestone):
            achieved[index] = True
            newly += 1
    if newly:
        state = replace(state, achieved=tuple(achieved))
    return state, message, newly


def is_solved(state: WorldState) -> bool:
    return all(state.achieved) and not state.failed


#########################################
# Environment Instance
#########################################

class EnvInstance:
    """
    Single-owner simulatable world.

    Usage:
        >>> env = generate_world(spec, world_seed=7)
        >>> obs = env.reset()
        >>> obs, reward, done = env.step(env.valid_actions()[0])
    """

    _CACHE_LIMIT = 4096

    def __init__(
        self,
        spec: TaskSpec,
        world: WorldGraph,
        catalog: Catalog,
        world_seed: int,
        episode_cap: int = 100,
    ):
        if episode_cap < 1:
            raise ValueError(f"episode_cap must be positive, got {episode_cap}")
        self.spec = spec
        self.world = world
        self.catalog = catalog
        self.world_seed = world_seed
        self.episode_cap = episode_cap
        self.opening = catalog.task(spec.task_type).opening
        self._actions: Dict[tuple, Tuple[List[Action], Dict[str, Action]]] = {}
        self.state = world.initial
        self.episode_log: List[Dict[str, Any]] = []
        self._done = False
        self.gold = None  # GoldTrajectory, filled in by generate_world

    # -- properties ---------------------------------------------------------

    @property
    def done(self) -> bool:
        return self._done

    @property
    def steps(self) -> int:
        return self.state.steps

    @property
    def num_milestones(self) -> int:
        return len(self.world.goal.milestones)

    @property
    def episode_return(self) -> float:
        return sum(self.state.achieved) / self.num_milestones

    @property
    def solved(self) -> bool:
        return is_solved(self.state)

    # -- operations ---------------------------------------------------------

    def observation(self, obs_text: str) -> Observation:
        return Observation(
            obs=obs_text,
            inventory=inventory_text(self.world, self.state),
            look=look_text(self.world, self.state),
            task=self.spec.description,
        )

    def reset(self) -> Observation:
        """Restore the initial state and return the opening observation"""
        self.state = self.world.initial
        self.episode_log = []
        self._done = False
        return self.observation(self.opening)

    def _index(self) -> Tuple[List[Action], Dict[str, Action]]:
        key = self.state.key()
        cached = self._actions.get(key)
        if cached is None:
            actions = enumerate_actions(self.world, self.catalog, self.state)
            cached = (actions, {a.text: a for a in actions})
            if len(self._actions) >= self._CACHE_LIMIT:
                self._actions.clear()
            self._actions[key] = cached
        return cached

    def valid_actions(self) -> List[Action]:
        """Every syntactically applicable action, in canonical order"""
        return list(self._index()[0])

    def action(self, text: str) -> Action:
        """Look up a currently valid action by its rendered text"""
        index = self._index()[1]
        if text not in index:
            raise ValueError(f"'{text}' is not a valid action in the current state")
        return index[text]

    def step(self, action: Action) -> Tuple[Observation, float, bool]:
        if self._done:
            raise ValueError("episode is over; call reset() first")
        # Resolve by text so slots always refer to the objects visible now
        action = self.action(action.text)

        self.state, message, newly = transition(self.world, self.state, action)
        reward = newly / self.num_milestones if newly else 0.0
        self._done = self.solved or self.state.failed or self.state.steps >= self.episode_cap

        observation = self.observation(message)
        self.episode_log.append({
            "step": self.state.steps,
            "action_text": action.text,
            "reward": reward,
            "done": self._done,
            "obs_hash": observation.digest(),
        })
        return observation, reward, self._done

    def write_episode_log(self, path: str) -> None:
        """Write the current episode as JSON-lines records"""
        with open(path, "w", encoding="utf-8") as handle:
            for record in self.episode_log:
                handle.write(json.dumps(record, sort_keys=True) + "\n")

    def fresh(self) -> "EnvInstance":
        """A new independent instance of the same world"""
        clone = EnvInstance(self.spec, self.world, self.catalog, self.world_seed, self.episode_cap)
        clone.gold = self.gold
        return clone

    def __repr__(self) -> str:
        return f"EnvInstance(task_type={self.spec.task_type}, variation={self.spec.variation}, split={self.spec.split})"


#########################################
# World Generation
#########################################

def generate_world(
    spec: TaskSpec,
    world_seed: int,
    catalog: Optional[Catalog] = None,
    min_actions: int = 200,
    episode_cap: int = 100,
    plan_depth: int = 50,
    max_attempts: int = 5,
) -> EnvInstance:
    """
    Generate a solvable world for a task spec.

    Layouts that the planner cannot solve within `plan_depth` are regenerated
    with the next attempt seed, up to `max_attempts` times.

    Raises:
        ValueError: If the spec does not match the catalog
        RuntimeError: If no attempt produced a solvable world
    """
    from environment.planner import PlanningError, plan_gold
    from environment.tasks import build_world

    catalog = catalog or load_catalog()
    catalog.task(spec.task_type)

    for attempt in range(max_attempts):
        world = build_world(catalog, spec, world_seed, attempt, min_actions)
        env = EnvInstance(spec, world, catalog, world_seed, episode_cap)
        try:
            env.gold = plan_gold(env, max_depth=plan_depth)
        except PlanningError as e:
            logger.warning(f"world t{spec.task_type} v{spec.variation} attempt {attempt} unsolvable: {e}")
            continue
        return env

    raise RuntimeError(
        f"could not generate a solvable world for task {spec.task_type} "
        f"variation {spec.variation} after {max_attempts} attempts"
    )
