"""Teacher-forced replay of gold episodes for offline JGA / BLEU / TEM."""

from __future__ import annotations

from typing import Callable, Optional

from .agents import Agent, DecodeConfig, Observation, Role
from .core import ApiCall, CALL_PREFIX, Episode, ParseError, Turn, parse_call, serialize_schema
from .metrics import episode_rounds


def assistant_predictions(
    assistant_factory: Callable[[], Agent],
    episodes: list[Episode],
    schema_aware: bool = False,
    decode: DecodeConfig = DecodeConfig(),
) -> tuple[list[list[Optional[ApiCall]]], list[list[str]], list[list[str]]]:
    """Replay each gold episode, asking a fresh assistant to act at every
    decision point with the gold history so far.

    Returns per-episode hypothesis calls (aligned with assistant rounds),
    hypothesis utterances, and the gold utterances they pair with.
    """
    hyp_calls: list[list[Optional[ApiCall]]] = []
    hyp_utts: list[list[str]] = []
    gold_utts: list[list[str]] = []
    for episode in episodes:
        assistant = assistant_factory()
        first_act = True
        calls_row: list[Optional[ApiCall]] = []
        hyp_row: list[str] = []
        gold_row: list[str] = []
        context: list[Turn] = []
        for rnd in episode_rounds(episode):
            if rnd["user"].is_done():
                context.append(rnd["user"])
                continue
            context.append(rnd["user"])
            grounding = None
            if schema_aware and first_act and episode.schema is not None:
                grounding = serialize_schema(episode.schema)
            out = assistant.act(
                Observation(Role.ASSISTANT, grounding, tuple(context), decode)
            )
            first_act = False
            calls_row.append(_as_call(out))
            # Advance with the gold call/response, then predict the utterance.
            if rnd["call"] is not None:
                context.append(rnd["call_turn"])
                context.append(rnd["resp"])
                out = assistant.act(
                    Observation(Role.ASSISTANT, None, tuple(context), decode)
                )
            if rnd["utt"] is not None:
                hyp_row.append("" if _as_call(out) else out)
                gold_row.append(rnd["utt"].text)
                context.append(rnd["utt"])
        hyp_calls.append(calls_row)
        hyp_utts.append(hyp_row)
        gold_utts.append(gold_row)
    return hyp_calls, hyp_utts, gold_utts


def _as_call(text: str) -> Optional[ApiCall]:
    if not text.strip().startswith(CALL_PREFIX):
        return None
    try:
        return parse_call(text)
    except ParseError:
        return None
