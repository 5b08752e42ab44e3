from collections import Counter

import pytest

from todsim.agents import (
    DecodeConfig,
    DecodeMode,
    Observation,
    Role,
    ScriptedAssistant,
    ScriptedUser,
)
from todsim.core import ApiCall, Speaker, Turn, serialize_call, serialize_schema
from todsim.exemplar import (
    ExemplarAssistant,
    ExemplarStore,
    ExemplarUser,
    delexicalize,
    placeholders,
    relexicalize,
    train_exemplar,
)
from todsim.orchestrator import SimConfig, run_batch, run_dialogue
from todsim.sampledata import make_human_episodes, make_world


class TestDelexicalization:
    def test_whole_token_only(self):
        out = delexicalize("I need the movie to be Dune .", {"movie": "Dune"})
        assert out == "I need the movie to be {movie} ."

    def test_substring_not_replaced(self):
        out = delexicalize("Dunes are sandy", {"movie": "Dune"})
        assert out == "Dunes are sandy"

    def test_multiword_value(self):
        out = delexicalize("play Dune Part Two now", {"t": "Dune Part Two"})
        assert out == "play {t} now"

    def test_longest_value_wins(self):
        out = delexicalize("Dune Part Two", {"a": "Dune", "b": "Dune Part Two"})
        assert out == "{b}"

    def test_round_trip(self):
        slots = {"movie": "Dune", "qty": "2"}
        text = "I want 2 tickets for Dune ."
        assert relexicalize(delexicalize(text, slots), slots) == text

    def test_placeholders(self):
        assert placeholders("get {a} and {b_2}") == {"a", "b_2"}


class TestStore:
    def test_dedup_increments_weight(self):
        store = ExemplarStore()
        key = Counter({"hi": 1})
        store.add(Role.USER, key, "hello")
        store.add(Role.USER, key, "hello")
        store.add(Role.USER, key, "other")
        assert len(store) == 2
        assert store.entries[0].weight == 2

    def test_serialization_round_trip(self, small_episodes):
        store = ExemplarStore()
        train_exemplar(store, small_episodes, Role.USER)
        train_exemplar(store, small_episodes, Role.ASSISTANT)
        back = ExemplarStore.from_dict(store.to_dict())
        assert back.to_dict() == store.to_dict()
        assert back.trained_intents() == store.trained_intents()

    def test_file_round_trip(self, small_episodes, tmp_path):
        store = ExemplarStore()
        train_exemplar(store, small_episodes, Role.ASSISTANT)
        path = tmp_path / "store.json"
        store.save(str(path))
        assert ExemplarStore.load(str(path)).to_dict() == store.to_dict()

    def test_training_learns_intent_slots(self, small_world, small_episodes):
        fixture, _, _ = small_world
        store = ExemplarStore()
        train_exemplar(store, small_episodes, Role.ASSISTANT)
        assert store.trained_intents() == set(fixture.schemas)
        for intent, schema in fixture.schemas.items():
            assert store.intent_slots[intent] == set(schema.slot_names)


class TestUntrainedBehavior:
    def test_agnostic_assistant_never_calls(self):
        asst = ExemplarAssistant(ExemplarStore())
        obs = Observation(
            Role.ASSISTANT,
            None,
            (Turn(Speaker.USER, "I need the a to be 1 ."),),
            DecodeConfig(),
        )
        assert asst.act(obs) == ""

    def test_aware_assistant_falls_back_to_schema(self, small_world):
        fixture, goals, table = small_world
        goal = goals[0]
        schema = fixture.schemas[goal.intent]
        cfg = SimConfig(rollouts_per_goal=1, schema_aware=True)
        episode = run_dialogue(
            ScriptedUser(), ExemplarAssistant(ExemplarStore()), table, goal, schema, cfg
        )
        assert episode.success

    def test_user_falls_back_to_reveal_template(self):
        user = ExemplarUser(ExemplarStore())
        goal = ApiCall("X", {"a": "1"})
        obs = Observation(Role.USER, serialize_call(goal), (), DecodeConfig())
        assert user.act(obs) == "I need the a to be 1 ."


class TestTrainedBehavior:
    @pytest.fixture()
    def trained(self, small_world, small_episodes):
        store = ExemplarStore()
        train_exemplar(store, small_episodes, Role.USER)
        train_exemplar(store, small_episodes, Role.ASSISTANT)
        return store

    def test_agnostic_pair_closes_loop_on_unseen_goal(self, small_world, trained):
        fixture, _, _ = small_world
        # new values, seen intent: exactly what self-training must transfer to
        intent = sorted(fixture.schemas)[0]
        schema = fixture.schemas[intent]
        goal = ApiCall(intent, {s: f"fresh_{s}" for s in schema.slot_names})
        from todsim.mock_api import synthesize_table

        table = synthesize_table([schema], [goal], seed=9)
        cfg = SimConfig(rollouts_per_goal=1, schema_aware=False)
        episode = run_dialogue(
            ExemplarUser(trained), ExemplarAssistant(trained), table, goal, None, cfg
        )
        assert episode.success

    def test_greedy_is_deterministic(self, trained):
        goal = ApiCall("Dom0Svc0", {"dom0svc0_slot0": "v0", "dom0svc0_slot1": "v1"})
        outs = set()
        for _ in range(3):
            user = ExemplarUser(trained)
            obs = Observation(Role.USER, serialize_call(goal), (), DecodeConfig())
            outs.add(user.act(obs))
        assert len(outs) == 1

    def test_nucleus_deterministic_per_seed(self, trained):
        goal = ApiCall("Dom0Svc0", {"dom0svc0_slot0": "v0", "dom0svc0_slot1": "v1"})

        def sample(seed):
            user = ExemplarUser(trained)
            obs = Observation(
                Role.USER,
                serialize_call(goal),
                (),
                DecodeConfig(mode=DecodeMode.NUCLEUS, p=0.9, seed=seed),
            )
            return user.act(obs)

        assert sample(3) == sample(3)

    def test_retrieved_user_turns_reveal_pending_slots_only(self, trained):
        goal = ApiCall("Dom0Svc1", {"dom0svc1_slot0": "aa", "dom0svc1_slot1": "bb"})
        user = ExemplarUser(trained)
        out = user.act(Observation(Role.USER, serialize_call(goal), (), DecodeConfig()))
        from todsim.agents import extract_reveals

        reveals = extract_reveals([Turn(Speaker.USER, out)])
        assert set(reveals) <= set(goal.slots)
        assert reveals  # first turn must reveal something

    def test_assistant_never_retrieves_call_strings_as_utterances(self, trained):
        history = (
            Turn(Speaker.USER, "I need the dom0svc0_slot0 to be v0 ."),
            Turn(Speaker.ASSISTANT_CALL, "APICALL: api_name = Dom0Svc0 ; dom0svc0_slot0 = v0"),
            Turn(Speaker.API_RESP, "APIRESP: status = success"),
        )
        asst = ExemplarAssistant(trained)
        out = asst.act(Observation(Role.ASSISTANT, None, history, DecodeConfig()))
        assert not out.startswith("APICALL:")


def test_training_is_weight_monotone(small_episodes):
    store = ExemplarStore()
    train_exemplar(store, small_episodes, Role.ASSISTANT)
    size_once = len(store)
    total_once = sum(e.weight for e in store.entries)
    train_exemplar(store, small_episodes, Role.ASSISTANT)
    assert len(store) == size_once  # same surface forms dedup
    assert sum(e.weight for e in store.entries) == 2 * total_once
