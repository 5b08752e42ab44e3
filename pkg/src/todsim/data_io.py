"""Dataset ingestion, folds, the In-Domain/Out-of-Domain split, goal extraction,
and the simplified SGD-style adapter.

SGD-style inputs: one ``schema.json``::

    {"services": [{"service": "Movies",
                   "intents": [{"intent": "BuyTicket", "slots": ["movie", "qty"]}]}]}

and dialogue files ``dialogues_*.json``::

    {"dialogues": [{"service": "Movies",
                    "turns": [{"speaker": "user", "text": "..."},
                              {"speaker": "assistant", "text": "...",
                               "call": {"intent": "BuyTicket", "slots": {...}},
                               "response": {...}}]}]}

An assistant turn's ``response`` of ``null`` (with a call present) maps to the
failure sentinel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .core import (
    ApiCall,
    ApiResponse,
    ApiSchema,
    Episode,
    Fold,
    Origin,
    ParseError,
    Speaker,
    Turn,
    episode_from_dict,
    episode_to_dict,
    serialize_call,
    serialize_response,
)
from .errors import SchemaMismatch

# Paper-designated holdout domains unique to the source dataset.
DEFAULT_HOLDOUT_DOMAINS = frozenset(
    {"Home Search", "Messaging", "Payment", "Rental Cars"}
)


@dataclass
class DomainSplit:
    holdout_domains: frozenset
    in_domain: dict[Fold, list[Episode]] = field(default_factory=dict)
    out_of_domain: dict[Fold, list[Episode]] = field(default_factory=dict)

    def counts(self) -> dict:
        return {
            "in_domain": {f.value: len(self.in_domain.get(f, [])) for f in Fold},
            "out_of_domain": {f.value: len(self.out_of_domain.get(f, [])) for f in Fold},
        }


def load_episodes(path: str | Path) -> list[Episode]:
    episodes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                episodes.append(episode_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ParseError(lineno, f"line {lineno}: {exc}") from exc
    return episodes


def write_episodes(path: str | Path, episodes: list[Episode]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for episode in episodes:
            fh.write(json.dumps(episode_to_dict(episode), sort_keys=True))
            fh.write("\n")


def split_by_domain(
    episodes: list[Episode], holdout: frozenset | set = DEFAULT_HOLDOUT_DOMAINS
) -> DomainSplit:
    """An episode is Out-of-Domain iff its domain is in the holdout set."""
    split = DomainSplit(holdout_domains=frozenset(holdout))
    for fold in Fold:
        split.in_domain[fold] = []
        split.out_of_domain[fold] = []
    for episode in episodes:
        side = split.out_of_domain if episode.domain in holdout else split.in_domain
        side[episode.fold].append(episode)
    return split


def extract_goals(episodes: list[Episode]) -> tuple[list[ApiCall], int]:
    """One goal per single-goal episode; returns (goals, n_skipped_multi_goal)."""
    goals = []
    skipped = 0
    for episode in episodes:
        calls = {
            serialize_call(c)
            for c in (
                _safe_parse(t.text)
                for t in episode.turns
                if t.speaker is Speaker.ASSISTANT_CALL
            )
            if c is not None
        }
        if len(calls) == 1:
            goals.append(episode.goal)
        elif len(calls) > 1:
            skipped += 1
    return goals, skipped


def _safe_parse(text: str):
    from .core import parse_call

    try:
        return parse_call(text)
    except ParseError:
        return None


def import_sgd_like(
    schema_file: str | Path,
    dialogue_files: list[str | Path],
    fold: Fold = Fold.TRAIN,
) -> list[Episode]:
    with open(schema_file, encoding="utf-8") as fh:
        schema_doc = json.load(fh)
    schemas: dict[str, ApiSchema] = {}
    service_of: dict[str, str] = {}
    for service in schema_doc["services"]:
        for intent in service["intents"]:
            schemas[intent["intent"]] = ApiSchema(
                intent["intent"], tuple(intent["slots"])
            )
            service_of[intent["intent"]] = service["service"]

    episodes: list[Episode] = []
    for path in sorted(str(p) for p in dialogue_files):
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        for dialogue in doc["dialogues"]:
            episode = _convert_dialogue(dialogue, schemas, service_of, fold)
            if episode is not None:
                episodes.append(episode)
    return episodes


def _convert_dialogue(dialogue, schemas, service_of, fold):
    turns: list[Turn] = []
    calls: list[ApiCall] = []
    for turn in dialogue["turns"]:
        speaker = turn["speaker"]
        if speaker == "user":
            turns.append(Turn(Speaker.USER, turn["text"]))
            continue
        if speaker != "assistant":
            raise SchemaMismatch(f"unknown speaker {speaker!r}")
        call_doc = turn.get("call")
        if call_doc is not None:
            intent = call_doc["intent"]
            if intent not in schemas:
                raise SchemaMismatch(f"unknown intent {intent!r}")
            unknown = set(call_doc.get("slots", {})) - set(schemas[intent].slot_names)
            if unknown:
                raise SchemaMismatch(
                    f"intent {intent!r} has no slots {sorted(unknown)}"
                )
            call = ApiCall(intent, dict(call_doc.get("slots", {})))
            calls.append(call)
            turns.append(Turn(Speaker.ASSISTANT_CALL, serialize_call(call)))
            response = turn.get("response")
            resp = (
                ApiResponse.ok(dict(response))
                if response is not None
                else ApiResponse.fail()
            )
            turns.append(Turn(Speaker.API_RESP, serialize_response(resp)))
        turns.append(Turn(Speaker.ASSISTANT_UTT, turn["text"]))
    if not calls:
        return None
    goal = calls[0]
    episode = Episode(
        goal=goal,
        turns=turns,
        success=False,
        domain=dialogue.get("service", service_of.get(goal.intent, "")),
        fold=fold,
        origin=Origin.HUMAN,
    )
    episode.success = episode.recompute_success()
    return episode
