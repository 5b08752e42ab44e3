import random

import pytest
from fastapi.testclient import TestClient

from todsim.core import (
    ApiCall,
    ApiResponse,
    Episode,
    Speaker,
    Turn,
    parse_response,
    serialize_call,
)
from todsim.errors import UnknownIntent
from todsim.mock_api import (
    create_app,
    invoke,
    load_table,
    load_table_file,
    save_table,
    synthesize_table,
)
from todsim.sampledata import make_world


def test_invoke_hit_and_miss(small_world):
    fixture, goals, table = small_world
    assert not invoke(table, goals[0]).failure
    mutated = ApiCall(goals[0].intent, {**goals[0].slots, "extra": "x"})
    assert invoke(table, mutated).failure


def test_no_false_hits_fuzz(small_world):
    """A single perturbed slot value must never hit the table."""
    fixture, goals, table = small_world
    rng = random.Random(0)
    for goal in goals:
        for _ in range(10):
            name = rng.choice(list(goal.slots))
            slots = dict(goal.slots)
            slots[name] = slots[name] + "x"
            assert invoke(table, ApiCall(goal.intent, slots)).failure


def test_whitespace_insensitive_hit(small_world):
    fixture, goals, table = small_world
    goal = goals[0]
    padded = ApiCall(goal.intent, {k: f"  {v} " for k, v in goal.slots.items()})
    assert not invoke(table, padded).failure


def test_synthesize_deterministic(small_world):
    fixture, goals, _ = small_world
    schemas = list(fixture.schemas.values())
    a = synthesize_table(schemas, goals, seed=5)
    b = synthesize_table(schemas, goals, seed=5)
    assert a.entries == b.entries
    c = synthesize_table(schemas, goals, seed=6)
    assert a.entries != c.entries


def test_synthesize_unknown_intent(small_world):
    fixture, goals, _ = small_world
    with pytest.raises(UnknownIntent):
        synthesize_table([], goals, seed=0)


def test_load_table_from_episodes():
    goal = ApiCall("X", {"a": "1"})
    resp = ApiResponse.ok({"ref": "r1"})
    ep = Episode(
        goal=goal,
        turns=[
            Turn(Speaker.USER, "hi"),
            Turn(Speaker.ASSISTANT_CALL, serialize_call(goal)),
            Turn(Speaker.API_RESP, "APIRESP: ref = r1"),
            Turn(Speaker.ASSISTANT_UTT, "ok"),
        ],
        success=True,
    )
    table = load_table([ep])
    assert invoke(table, goal) == resp


def test_load_table_skips_failures():
    goal = ApiCall("X", {"a": "1"})
    ep = Episode(
        goal=goal,
        turns=[
            Turn(Speaker.USER, "hi"),
            Turn(Speaker.ASSISTANT_CALL, serialize_call(goal)),
            Turn(Speaker.API_RESP, "APIRESP: API_FAIL"),
            Turn(Speaker.ASSISTANT_UTT, "sorry"),
        ],
        success=False,
    )
    table = load_table([ep])
    assert len(table) == 0
    assert invoke(table, goal).failure


def test_table_file_round_trip(small_world, tmp_path):
    fixture, goals, table = small_world
    path = tmp_path / "table.json"
    save_table(table, str(path))
    loaded = load_table_file(str(path))
    assert loaded.entries == table.entries


def test_http_contract(small_world):
    fixture, goals, table = small_world
    client = TestClient(create_app(table))
    hit = client.post("/invoke", content=serialize_call(goals[0]))
    assert hit.status_code == 200
    assert not parse_response(hit.text).failure
    miss = client.post(
        "/invoke", content=serialize_call(ApiCall(goals[0].intent, {"zz": "no"}))
    )
    assert miss.status_code == 200
    assert miss.text == "APIRESP: API_FAIL"
