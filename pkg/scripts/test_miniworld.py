"""
Tests for the MiniWorld environment: generation, actions, dynamics and logs.
"""

import json

import pytest

from environment.miniworld import Action, EnvInstance, Observation, generate_world
from environment.planner import replay
from environment.tasks import TASK_BUILDERS, get_task_builder, make_task_spec


@pytest.fixture(scope="module")
def find_env(catalog) -> EnvInstance:
    return generate_world(make_task_spec(0, 0, "train", catalog), world_seed=7, catalog=catalog)


def test_catalog_lists_six_task_kinds(catalog):
    kinds = [task.kind for task in catalog.tasks]
    assert kinds == [
        "find_category", "bring_to_container", "change_state",
        "measure_and_focus", "conductivity_test", "grow_plant",
    ]
    assert set(kinds) == set(TASK_BUILDERS)
    with pytest.raises(ValueError):
        get_task_builder("juggle")


def test_task_spec_is_deterministic(catalog):
    first = make_task_spec(2, 3, "train", catalog)
    assert first == make_task_spec(2, 3, "train", catalog)
    assert first.description.startswith("Your task is to")


def test_generation_is_deterministic(catalog):
    spec = make_task_spec(1, 2, "train", catalog)
    a = generate_world(spec, world_seed=7, catalog=catalog)
    b = generate_world(spec, world_seed=7, catalog=catalog)
    assert json.dumps(a.world.to_dict(), sort_keys=True) == json.dumps(b.world.to_dict(), sort_keys=True)
    assert a.gold.actions == b.gold.actions


def test_reset_observation(find_env):
    observation = find_env.reset()
    assert isinstance(observation, Observation)
    assert observation.obs == find_env.opening
    assert observation.look.startswith("This room is called the hallway.")
    assert observation.inventory == "In your inventory, you see: nothing."
    assert observation.task == find_env.spec.description


def test_action_floor_and_canonical_order(find_env):
    find_env.reset()
    actions = find_env.valid_actions()
    assert len(actions) >= 200
    assert [a.text for a in actions[:3]] == ["wait", "look around", "inventory"]
    texts = [a.text for a in actions]
    assert len(texts) == len(set(texts))
    assert texts == [a.text for a in find_env.valid_actions()]


def test_two_slot_actions_never_repeat_an_object(find_env):
    find_env.reset()
    for action in find_env.valid_actions():
        if len(action.slots) == 2:
            assert action.slots[0] != action.slots[1]


def test_invalid_action_is_rejected(find_env):
    find_env.reset()
    with pytest.raises(ValueError):
        find_env.step(Action("fixed", (), "dance wildly"))


def test_wait_passes_time_without_reward(find_env):
    find_env.reset()
    observation, reward, done = find_env.step(find_env.action("wait"))
    assert reward == 0.0 and not done
    assert find_env.steps == 1
    assert observation.obs == "You wait for a moment."


def test_gold_replay_earns_full_return(find_env):
    result = replay(find_env, find_env.gold)
    assert result.solved
    assert result.total_return == 1.0
    assert all(step.action in step.valid for step in result.steps)


def test_focusing_on_the_wrong_object_fails(find_env):
    observation = find_env.reset()
    targets = find_env.world.goal.focus_targets
    wrong = next(
        a for a in find_env.valid_actions()
        if a.template == "focus_on" and a.slots[0] not in targets
    )
    observation, reward, done = find_env.step(wrong)
    assert done and reward == 0.0
    assert find_env.state.failed and not find_env.solved
    with pytest.raises(ValueError):
        find_env.step(find_env.action("wait"))


def test_episode_cap_ends_the_episode(catalog):
    env = generate_world(make_task_spec(1, 0, "train", catalog), world_seed=7, catalog=catalog, episode_cap=3)
    env.reset()
    done = False
    for _ in range(3):
        _, _, done = env.step(env.action("wait"))
    assert done and env.steps == 3


def test_episode_log(find_env, tmp_path):
    find_env.reset()
    find_env.step(find_env.action("look around"))
    path = tmp_path / "episode.jsonl"
    find_env.write_episode_log(str(path))
    record = json.loads(path.read_text(encoding="utf-8").splitlines()[0])
    assert set(record) == {"step", "action_text", "reward", "done", "obs_hash"}
    assert record["action_text"] == "look around" and record["step"] == 1


def test_fresh_instances_do_not_share_state(find_env):
    find_env.reset()
    other = find_env.fresh()
    other.reset()
    other.step(other.action("wait"))
    assert find_env.steps == 0
    assert other.gold is find_env.gold


def test_negative_world_seed_is_rejected(catalog):
    with pytest.raises(ValueError):
        generate_world(make_task_spec(0, 0, "train", catalog), world_seed=-1, catalog=catalog)
