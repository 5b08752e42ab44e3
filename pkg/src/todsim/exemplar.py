"""A trainable retrieval agent: the desk-scale stand-in for fine-tuned LMs.

Training stores (context token multiset -> response) exemplars per role, with
goal slot values delexicalized to ``{slot}`` placeholders so templates carry
over to unseen goals of seen intents. Call turns additionally teach the store
which slot names belong to each intent and build a content-token -> intent
lexicon used for intent detection when no schema is given.

Retrieval scores candidates by multiset Jaccard overlap of context tokens and
decodes from the softmax of scores at temperature 1, optionally nucleus-
filtered. An untrained store yields a schema-agnostic assistant that never
calls (TSR exactly zero) and a schema-aware assistant that falls back to
schema-guided slot filling, which is what makes the bootstrap loop start.
"""

from __future__ import annotations

import json
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .agents import (
    ALL_GIVEN_UTT,
    ASK_TEMPLATE,
    CONFIRM_UTT,
    FAILURE_UTT,
    IDLE_UTT,
    INTENT_TEMPLATE,
    REVEAL_TEMPLATE,
    DecodeConfig,
    DecodeMode,
    Observation,
    Role,
    extract_reveals,
    nucleus_filter,
    saw_successful_exchange,
)
from .core import (
    ApiCall,
    ApiSchema,
    DONE_TOKEN,
    CALL_PREFIX,
    Episode,
    ParseError,
    Speaker,
    Turn,
    parse_call,
    parse_response,
    parse_schema,
    serialize_call,
)
from .errors import MalformedGrounding

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z0-9_.-]+)\}")

# Function words of the scripted template inventory; excluded from the lexicon.
_STOPWORDS = frozenset(
    "I need the to be . What would you like ? That is all Your request "
    "confirmed could not complete that".split()
)


@dataclass
class ExemplarEntry:
    role: Role
    key: Counter
    response: str
    weight: int = 1


@dataclass
class ExemplarStore:
    """Grows monotonically under training; frozen (read-only) during simulation."""

    entries: list[ExemplarEntry] = field(default_factory=list)
    intent_lexicon: dict[str, Counter] = field(default_factory=dict)
    intent_slots: dict[str, set] = field(default_factory=dict)
    _index: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, role: Role, key: Counter, response: str) -> None:
        dedup = (role, tuple(sorted(key.items())), response)
        idx = self._index.get(dedup)
        if idx is not None:
            self.entries[idx].weight += 1
            return
        self._index[dedup] = len(self.entries)
        self.entries.append(ExemplarEntry(role, key, response))

    def trained_intents(self) -> set:
        return set(self.intent_slots)

    def to_dict(self) -> dict:
        return {
            "entries": [
                {
                    "role": e.role.value,
                    "key": dict(sorted(e.key.items())),
                    "response": e.response,
                    "weight": e.weight,
                }
                for e in self.entries
            ],
            "intent_lexicon": {
                token: dict(sorted(counts.items()))
                for token, counts in sorted(self.intent_lexicon.items())
            },
            "intent_slots": {
                intent: sorted(slots) for intent, slots in sorted(self.intent_slots.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExemplarStore":
        store = cls()
        for item in data.get("entries", []):
            entry = ExemplarEntry(
                Role(item["role"]),
                Counter(item["key"]),
                item["response"],
                int(item["weight"]),
            )
            dedup = (entry.role, tuple(sorted(entry.key.items())), entry.response)
            store._index[dedup] = len(store.entries)
            store.entries.append(entry)
        store.intent_lexicon = {
            token: Counter(counts)
            for token, counts in data.get("intent_lexicon", {}).items()
        }
        store.intent_slots = {
            intent: set(slots) for intent, slots in data.get("intent_slots", {}).items()
        }
        return store

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "ExemplarStore":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def delexicalize(text: str, slots: dict[str, str]) -> str:
    """Replace whole-token occurrences of slot values with {slot} placeholders."""
    pairs = sorted(slots.items(), key=lambda kv: -len(kv[1].strip()))
    for name, value in pairs:
        value = value.strip()
        if not value:
            continue
        text = re.sub(rf"(?<!\S){re.escape(value)}(?!\S)", "{" + name + "}", text)
    return text


def relexicalize(template: str, slots: dict[str, str]) -> str:
    return _PLACEHOLDER_RE.sub(lambda m: slots[m.group(1)].strip(), template)


def placeholders(template: str) -> set:
    return set(_PLACEHOLDER_RE.findall(template))


def _context_key(turns, slots: dict[str, str]) -> Counter:
    text = " ".join(delexicalize(t.text, slots) for t in turns)
    return Counter(text.split())


def _jaccard(a: Counter, b: Counter) -> float:
    if not a and not b:
        return 1.0
    inter = sum((a & b).values())
    union = sum((a | b).values())
    return inter / union if union else 0.0


def train_exemplar(
    store: ExemplarStore, episodes: list[Episode], role: Role
) -> ExemplarStore:
    """Insert one exemplar per turn of the given role; weights add on duplicates."""
    trained_speakers = {
        Role.USER: {Speaker.USER},
        Role.ASSISTANT: {Speaker.ASSISTANT_CALL, Speaker.ASSISTANT_UTT},
    }[role]
    for episode in episodes:
        slots = episode.goal.slots
        for i, turn in enumerate(episode.turns):
            if turn.speaker not in trained_speakers:
                continue
            key = _context_key(episode.turns[:i], slots)
            store.add(role, key, delexicalize(turn.text, slots))
            if turn.speaker is Speaker.ASSISTANT_CALL:
                _learn_call(store, episode.turns[:i], turn, slots)
    return store


def _learn_call(store: ExemplarStore, context, call_turn: Turn, slots) -> None:
    try:
        call = parse_call(call_turn.text)
    except ParseError:
        return
    store.intent_slots.setdefault(call.intent, set()).update(call.slots)
    user_text = " ".join(
        delexicalize(t.text, slots) for t in context if t.speaker is Speaker.USER
    )
    for token in user_text.split():
        if token in _STOPWORDS:
            continue
        store.intent_lexicon.setdefault(token, Counter())[call.intent] += 1


def _select(
    candidates: list[tuple[float, str]], decode: DecodeConfig, history_len: int
) -> str:
    """Pick a response from (score, text) candidates per the decode config."""
    if decode.mode is DecodeMode.GREEDY:
        return min(candidates, key=lambda c: (-c[0], c[1]))[1]
    weights = [math.exp(score) for score, _ in candidates]
    total = sum(weights)
    dist = [(text, w / total) for (_, text), w in zip(candidates, weights)]
    kept = nucleus_filter(dist, decode.p)
    rng = random.Random(f"exemplar|{decode.seed}|{history_len}")
    texts = [item for item, _ in kept]
    probs = [prob for _, prob in kept]
    return rng.choices(texts, weights=probs, k=1)[0]


class ExemplarUser:
    """Goal-grounded user: learned surface templates over a fixed reveal policy."""

    def __init__(self, store: ExemplarStore):
        self.store = store
        self._goal: Optional[ApiCall] = None

    def act(self, obs: Observation) -> str:
        if obs.grounding is not None:
            try:
                self._goal = parse_call(obs.grounding)
            except ParseError as exc:
                raise MalformedGrounding(str(exc)) from exc
        if self._goal is None:
            raise MalformedGrounding("exemplar user never received a goal")
        goal = self._goal
        if saw_successful_exchange(obs.history):
            return DONE_TOKEN
        revealed = extract_reveals(obs.history)
        pending = [name for name in goal.slots if name not in revealed]
        if not pending:
            if not goal.slots and not obs.history:
                return INTENT_TEMPLATE.format(intent=goal.intent)
            return ALL_GIVEN_UTT
        target = pending[0]
        context = _context_key(obs.history, goal.slots)
        candidates = []
        for entry in self.store.entries:
            if entry.role is not Role.USER:
                continue
            holes = placeholders(entry.response)
            if target not in holes or not holes <= set(pending):
                continue
            candidates.append(
                (_jaccard(context, entry.key), relexicalize(entry.response, goal.slots))
            )
        if not candidates:
            return REVEAL_TEMPLATE.format(slot=target, value=goal.slots[target].strip())
        return _select(candidates, obs.decode, len(obs.history))


class ExemplarAssistant:
    """Retrieval for utterances; rule-assembled API calls from extracted slots.

    Intent and slot names come from the schema grounding when present, and
    from the trained lexicon otherwise. An untrained schema-agnostic instance
    never emits a call.
    """

    def __init__(self, store: ExemplarStore):
        self.store = store
        self._schema: Optional[ApiSchema] = None

    def act(self, obs: Observation) -> str:
        if obs.grounding is not None:
            try:
                self._schema = parse_schema(obs.grounding)
            except ParseError as exc:
                raise MalformedGrounding(str(exc)) from exc
        history = obs.history
        belief = extract_reveals(history)
        if history and history[-1].speaker is Speaker.API_RESP:
            failed = parse_response(history[-1].text).failure
            fallback = FAILURE_UTT if failed else CONFIRM_UTT
            return self._retrieve_utterance(history, belief, fallback, obs.decode)
        intent, known = self._resolve_intent(history, belief)
        if intent is None:
            return ""
        missing = [s for s in sorted(known) if s not in belief]
        if missing:
            fallback = ASK_TEMPLATE.format(slot=missing[0])
            return self._retrieve_utterance(history, belief, fallback, obs.decode)
        if any(t.speaker is Speaker.ASSISTANT_CALL for t in history):
            return self._retrieve_utterance(history, belief, IDLE_UTT, obs.decode)
        return serialize_call(ApiCall(intent, {s: belief[s] for s in known}))

    def _resolve_intent(self, history, belief):
        if self._schema is not None:
            return self._schema.intent, set(self._schema.slot_names)
        votes: Counter = Counter()
        user_text = " ".join(
            delexicalize(t.text, belief) for t in history if t.speaker is Speaker.USER
        )
        for token in user_text.split():
            if token in _STOPWORDS:
                continue
            votes.update(self.store.intent_lexicon.get(token, Counter()))
        if not votes:
            return None, set()
        intent = min(votes, key=lambda it: (-votes[it], it))
        return intent, set(self.store.intent_slots.get(intent, set()))

    def _retrieve_utterance(self, history, belief, fallback: str, decode) -> str:
        context = _context_key(history, belief)
        candidates = []
        for entry in self.store.entries:
            if entry.role is not Role.ASSISTANT:
                continue
            if entry.response.startswith(CALL_PREFIX):
                continue
            if not placeholders(entry.response) <= set(belief):
                continue
            candidates.append(
                (_jaccard(context, entry.key), relexicalize(entry.response, belief))
            )
        if not candidates:
            return fallback
        return _select(candidates, decode, len(history))
