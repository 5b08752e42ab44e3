"""Drives the User / Assistant / API turn cycle and produces Episodes."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional

from .agents import Agent, DecodeConfig, Observation, Role
from .core import (
    ApiCall,
    ApiSchema,
    CALL_PREFIX,
    Episode,
    Origin,
    ParseError,
    Speaker,
    Turn,
    calls_equal,
    parse_call,
    serialize_call,
    serialize_response,
    serialize_schema,
)
from .errors import AgentUnavailable
from .mock_api import ApiTable, invoke

log = logging.getLogger(__name__)

AgentFactory = Callable[[], Agent]


@dataclass(frozen=True)
class SimConfig:
    max_rounds: int = 10
    rollouts_per_goal: int = 20
    decode: DecodeConfig = DecodeConfig()
    schema_aware: bool = False
    # True: an AgentUnavailable rollout is logged and scored unsuccessful.
    # False: the exception propagates to the caller.
    errors_fail: bool = True

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.rollouts_per_goal < 1:
            raise ValueError("rollouts_per_goal must be >= 1")


def derive_seed(base: int, goal_idx: int, rollout_idx: int) -> int:
    digest = hashlib.sha256(f"{base}|{goal_idx}|{rollout_idx}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def run_dialogue(
    user: Agent,
    assistant: Agent,
    api: ApiTable,
    goal: ApiCall,
    schema: Optional[ApiSchema],
    cfg: SimConfig,
    domain: Optional[str] = None,
) -> Episode:
    """One full dialogue. Grounding goes only on first turns: Goal to the User,
    Schema to the Assistant when schema-aware, and never the Goal to the
    Assistant."""
    if cfg.schema_aware and schema is None:
        raise ValueError("schema_aware requires a schema")
    if not cfg.schema_aware and schema is not None:
        raise ValueError("schema given but cfg is not schema_aware")
    turns: list[Turn] = []
    goal_text = serialize_call(goal)
    schema_text = serialize_schema(schema) if schema else None
    user_started = False
    assistant_started = False
    try:
        for _ in range(cfg.max_rounds):
            obs = Observation(
                Role.USER,
                goal_text if not user_started else None,
                tuple(turns),
                cfg.decode,
            )
            user_started = True
            utterance = user.act(obs)
            turns.append(Turn(Speaker.USER, utterance))
            if turns[-1].is_done():
                break

            grounding = schema_text if not assistant_started else None
            assistant_started = True
            reply = assistant.act(
                Observation(Role.ASSISTANT, grounding, tuple(turns), cfg.decode)
            )
            call = _try_parse_call(reply)
            if call is not None:
                turns.append(Turn(Speaker.ASSISTANT_CALL, reply))
                resp = invoke(api, call)
                turns.append(Turn(Speaker.API_RESP, serialize_response(resp)))
                try:
                    utt = assistant.act(
                        Observation(Role.ASSISTANT, None, tuple(turns), cfg.decode)
                    )
                except AgentUnavailable:
                    turns.append(Turn(Speaker.ASSISTANT_UTT, ""))
                    raise
                turns.append(Turn(Speaker.ASSISTANT_UTT, utt))
            else:
                turns.append(Turn(Speaker.ASSISTANT_UTT, reply))
    except AgentUnavailable as exc:
        if not cfg.errors_fail:
            raise
        log.warning("rollout aborted: %s", exc)

    episode = Episode(
        goal=goal,
        schema=schema,
        turns=turns,
        success=False,
        domain=domain if domain is not None else goal.intent,
        origin=Origin.SYNTHETIC,
    )
    episode.success = episode.recompute_success()
    return episode


def _try_parse_call(reply: str) -> Optional[ApiCall]:
    """Malformed APICALL strings are treated as plain utterances."""
    if not reply.strip().startswith(CALL_PREFIX):
        return None
    try:
        return parse_call(reply)
    except ParseError:
        return None


def run_batch(
    goals: list[ApiCall],
    user_factory: AgentFactory,
    assistant_factory: AgentFactory,
    api: ApiTable,
    cfg: SimConfig,
    schemas: Optional[dict[str, ApiSchema]] = None,
    domains: Optional[dict[str, str]] = None,
    user_factory_for: Optional[Callable[[ApiCall], Agent]] = None,
) -> list[Episode]:
    """|goals| x rollouts_per_goal episodes, deterministic (goal, rollout) order.

    Rollout decode seeds derive from (cfg.decode.seed, goal index, rollout
    index). `user_factory_for` overrides `user_factory` per goal (used to vary
    noise by domain).
    """
    episodes: list[Episode] = []
    for goal_idx, goal in enumerate(goals):
        schema = None
        if cfg.schema_aware:
            if schemas is None or goal.intent not in schemas:
                raise ValueError(f"no schema for intent {goal.intent!r}")
            schema = schemas[goal.intent]
        domain = domains.get(goal.intent) if domains else None
        for rollout_idx in range(cfg.rollouts_per_goal):
            seed = derive_seed(cfg.decode.seed, goal_idx, rollout_idx)
            rollout_cfg = replace(cfg, decode=replace(cfg.decode, seed=seed))
            user = user_factory_for(goal) if user_factory_for else user_factory()
            assistant = assistant_factory()
            episode = run_dialogue(
                user, assistant, api, goal, schema, rollout_cfg, domain=domain
            )
            episodes.append(episode)
            log.info(
                "%d\t%d\t%s\t%d",
                goal_idx,
                rollout_idx,
                episode.success,
                len(episode.turns),
            )
    return episodes


def scan_goal_leaks(episodes: list[Episode], schema_aware: bool) -> list[str]:
    """Return descriptions of any goal leakage into Assistant-visible content.

    Assistant-visible content is the schema grounding plus every turn except
    the Assistant's own call turns (a correct call legitimately equals the
    serialized goal). Schema-aware groundings may carry intent and slot names
    but never slot values.
    """
    leaks = []
    for idx, episode in enumerate(episodes):
        goal_text = serialize_call(episode.goal)
        for turn in episode.turns:
            if turn.speaker is Speaker.ASSISTANT_CALL:
                continue
            if goal_text in turn.text:
                leaks.append(f"episode {idx}: goal in {turn.speaker.value} turn")
        if not schema_aware and episode.schema is not None:
            leaks.append(f"episode {idx}: schema grounding without schema_aware")
        if schema_aware and episode.schema is not None:
            schema_text = serialize_schema(episode.schema)
            for value in episode.goal.slots.values():
                if value.strip() and value.strip() in schema_text:
                    leaks.append(f"episode {idx}: slot value in schema grounding")
    return leaks
