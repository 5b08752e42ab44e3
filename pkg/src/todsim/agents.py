"""Agent contract plus scripted oracles, the noise wrapper, and the remote client.

Scripted agents share a fixed utterance template inventory so slot extraction
between them is exact:

    "I need the <slot> to be <value> ."
    "I would like <intent> ."
    "That is all ."
    "What <slot> would you like ?"
    "Your request is confirmed ."
    "I could not complete that request ."

Grounding is delivered only on an agent's first observation of a dialogue;
agents cache it for later turns, so instances must be fresh per rollout.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Protocol

from .core import (
    ApiCall,
    ApiSchema,
    DONE_TOKEN,
    ParseError,
    Speaker,
    Turn,
    parse_call,
    parse_response,
    parse_schema,
    serialize_call,
)
from .errors import AgentUnavailable, InvalidDistribution, MalformedGrounding


class Role(str, Enum):
    USER = "User"
    ASSISTANT = "Assistant"


class DecodeMode(str, Enum):
    GREEDY = "Greedy"
    NUCLEUS = "Nucleus"


@dataclass(frozen=True)
class DecodeConfig:
    mode: DecodeMode = DecodeMode.GREEDY
    p: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"p must be in (0, 1], got {self.p}")


@dataclass(frozen=True)
class Observation:
    role: Role
    grounding: Optional[str]
    history: tuple[Turn, ...]
    decode: DecodeConfig = DecodeConfig()


class Agent(Protocol):
    def act(self, obs: Observation) -> str: ...


def nucleus_filter(
    dist: list[tuple[object, float]], p: float
) -> list[tuple[object, float]]:
    """Keep the smallest probability-descending prefix with mass >= p, renormalized.

    Ties are broken by stable input order.
    """
    if not 0.0 < p <= 1.0:
        raise InvalidDistribution(f"p must be in (0, 1], got {p}")
    if any(prob < 0 for _, prob in dist):
        raise InvalidDistribution("negative probability")
    total = sum(prob for _, prob in dist)
    if abs(total - 1.0) > 1e-9:
        raise InvalidDistribution(f"probabilities sum to {total}, not 1")
    order = sorted(range(len(dist)), key=lambda i: -dist[i][1])
    kept = []
    mass = 0.0
    for i in order:
        kept.append(i)
        mass += dist[i][1]
        if mass >= p - 1e-12:
            break
    kept.sort()
    return [(dist[i][0], dist[i][1] / mass) for i in kept]


REVEAL_TEMPLATE = "I need the {slot} to be {value} ."
INTENT_TEMPLATE = "I would like {intent} ."
ALL_GIVEN_UTT = "That is all ."
ASK_TEMPLATE = "What {slot} would you like ?"
CONFIRM_UTT = "Your request is confirmed ."
FAILURE_UTT = "I could not complete that request ."
IDLE_UTT = "Is there anything else ?"

_REVEAL_RE = re.compile(r"I need the ([A-Za-z0-9_.-]+) to be (.*) \.\Z")


def extract_reveals(turns: tuple[Turn, ...] | list[Turn]) -> dict[str, str]:
    """Slot values stated by the User via the reveal template, in turn order."""
    belief: dict[str, str] = {}
    for turn in turns:
        if turn.speaker is not Speaker.USER:
            continue
        match = _REVEAL_RE.match(turn.text.strip())
        if match:
            belief[match.group(1)] = match.group(2)
    return belief


def saw_successful_exchange(turns) -> bool:
    """A non-sentinel API response followed by an assistant utterance."""
    for i, turn in enumerate(turns):
        if turn.speaker is not Speaker.API_RESP:
            continue
        if i + 1 < len(turns) and turns[i + 1].speaker is Speaker.ASSISTANT_UTT:
            try:
                if not parse_response(turn.text).failure:
                    return True
            except ParseError:
                continue
    return False


class ScriptedUser:
    """Reveals goal slots one reveal per turn, lexicographically, then terminates.

    Emits [DONE] on the first assistant utterance following a successful API
    response; otherwise runs until the orchestrator's turn limit.
    """

    def __init__(self, reveal_k: int = 1):
        self.reveal_k = reveal_k
        self._goal: Optional[ApiCall] = None

    def act(self, obs: Observation) -> str:
        if obs.grounding is not None:
            try:
                self._goal = parse_call(obs.grounding)
            except ParseError as exc:
                raise MalformedGrounding(str(exc)) from exc
        if self._goal is None:
            raise MalformedGrounding("scripted user never received a goal")
        if saw_successful_exchange(obs.history):
            return DONE_TOKEN
        revealed = extract_reveals(obs.history)
        pending = [name for name in self._goal.slots if name not in revealed]
        if pending:
            reveals = [
                REVEAL_TEMPLATE.format(slot=name, value=self._goal.slots[name].strip())
                for name in pending[: self.reveal_k]
            ]
            return " ".join(reveals)
        if not self._goal.slots and not obs.history:
            return INTENT_TEMPLATE.format(intent=self._goal.intent)
        return ALL_GIVEN_UTT


class ScriptedAssistant:
    """Schema-guided slot filler; without a schema it can never place a call."""

    def __init__(self):
        self._schema: Optional[ApiSchema] = None

    def act(self, obs: Observation) -> str:
        if obs.grounding is not None:
            try:
                self._schema = parse_schema(obs.grounding)
            except ParseError as exc:
                raise MalformedGrounding(str(exc)) from exc
        history = obs.history
        if history and history[-1].speaker is Speaker.API_RESP:
            failed = parse_response(history[-1].text).failure
            return FAILURE_UTT if failed else CONFIRM_UTT
        if self._schema is None:
            return ""
        belief = extract_reveals(history)
        missing = [s for s in self._schema.slot_names if s not in belief]
        if missing:
            return ASK_TEMPLATE.format(slot=missing[0])
        already_called = any(t.speaker is Speaker.ASSISTANT_CALL for t in history)
        if already_called:
            return IDLE_UTT
        slots = {s: belief[s] for s in self._schema.slot_names}
        return serialize_call(ApiCall(self._schema.intent, slots))


class NoisyUser:
    """Corrupts each revealed slot value independently with probability epsilon.

    With the scripted oracle pair, per-goal success probability becomes
    (1 - epsilon) ** n_slots since each slot is revealed exactly once.
    """

    def __init__(self, inner: Agent, epsilon: float):
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
        self.inner = inner
        self.epsilon = epsilon

    def act(self, obs: Observation) -> str:
        text = self.inner.act(obs)
        if self.epsilon == 0.0:
            return text
        match = _REVEAL_RE.match(text.strip())
        if not match:
            return text
        rng = random.Random(f"noise|{obs.decode.seed}|{len(obs.history)}")
        if rng.random() < self.epsilon:
            slot, value = match.group(1), match.group(2)
            return REVEAL_TEMPLATE.format(slot=slot, value=f"not {value}")
        return text


def build_remote_request(obs: Observation) -> dict:
    return {
        "role": obs.role.value,
        "grounding": obs.grounding,
        "history": [{"speaker": t.speaker.value, "text": t.text} for t in obs.history],
        "decode": {
            "mode": obs.decode.mode.value,
            "p": obs.decode.p,
            "seed": obs.decode.seed,
        },
    }


class RemoteAgent:
    """Client for external model servers speaking the POST /act wire protocol."""

    def __init__(self, endpoint: str, timeout: float = 30.0, retries: int = 2):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries

    def act(self, obs: Observation) -> str:
        import requests

        url = self.endpoint.rstrip("/") + "/act"
        last_error: Optional[Exception] = None
        for _ in range(self.retries + 1):
            try:
                response = requests.post(
                    url, json=build_remote_request(obs), timeout=self.timeout
                )
                if response.status_code != 200:
                    last_error = AgentUnavailable(
                        f"{url} returned status {response.status_code}"
                    )
                    continue
                return response.json()["utterance"]
            except requests.RequestException as exc:
                last_error = exc
        raise AgentUnavailable(f"{url} unreachable after retries: {last_error}")
