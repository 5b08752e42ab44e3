"""Domain types and the canonical serialization grammar.

Calls, schemas, and responses all serialize to a single-line clause format:

    APICALL: api_name = BuyTicket ; movie = Dune ; qty = 2
    SCHEMA: api_name = BuyTicket ; slots = movie,qty
    APIRESP: confirmation = ABC123
    APIRESP: API_FAIL

Clauses are separated by unescaped ``;``. The characters ``;`` and ``\\``
inside values are escaped as ``\\;`` and ``\\\\``. Slots are emitted in
lexicographic order and values are trimmed, so equal calls serialize to
identical strings.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

TOKEN_RE = re.compile(r"[A-Za-z0-9_.-]+\Z")

CALL_PREFIX = "APICALL:"
SCHEMA_PREFIX = "SCHEMA:"
RESPONSE_PREFIX = "APIRESP:"
FAIL_SENTINEL = "API_FAIL"
DONE_TOKEN = "[DONE]"


class ParseError(ValueError):
    def __init__(self, position: int, reason: str):
        super().__init__(f"parse error at {position}: {reason}")
        self.position = position
        self.reason = reason


def _check_token(value: str, what: str) -> str:
    if not TOKEN_RE.match(value):
        raise ValueError(f"{what} must match [A-Za-z0-9_.-]+, got {value!r}")
    return value


@dataclass(frozen=True, eq=False)
class ApiCall:
    """An intent plus slot-name -> value map; doubles as a Goal."""

    intent: str
    slots: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        _check_token(self.intent, "intent")
        for name in self.slots:
            _check_token(name, "slot name")
        object.__setattr__(self, "slots", dict(sorted(self.slots.items())))

    def _key(self):
        return (self.intent, tuple((k, v.strip()) for k, v in self.slots.items()))

    def __eq__(self, other):
        if not isinstance(other, ApiCall):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def canonical(self) -> str:
        return serialize_call(self)


@dataclass(frozen=True)
class ApiSchema:
    """The signature of a goal: intent and slot names only, no values."""

    intent: str
    slot_names: tuple[str, ...] = ()

    def __post_init__(self):
        _check_token(self.intent, "intent")
        for name in self.slot_names:
            _check_token(name, "slot name")
        object.__setattr__(self, "slot_names", tuple(sorted(set(self.slot_names))))


@dataclass(frozen=True, eq=False)
class ApiResponse:
    """Either a payload map or the in-band failure sentinel."""

    payload: Optional[dict[str, str]] = None
    failure: bool = False

    def __post_init__(self):
        if self.failure and self.payload is not None:
            raise ValueError("payload and failure are mutually exclusive")
        if not self.failure:
            payload = dict(sorted((self.payload or {}).items()))
            for name in payload:
                _check_token(name, "slot name")
            object.__setattr__(self, "payload", payload)

    @classmethod
    def ok(cls, payload: dict[str, str]) -> "ApiResponse":
        return cls(payload=payload)

    @classmethod
    def fail(cls) -> "ApiResponse":
        return cls(failure=True)

    def _key(self):
        if self.failure:
            return None
        return tuple((k, v.strip()) for k, v in self.payload.items())

    def __eq__(self, other):
        if not isinstance(other, ApiResponse):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())


class Speaker(str, Enum):
    USER = "User"
    ASSISTANT_CALL = "AssistantCall"
    API_RESP = "ApiResp"
    ASSISTANT_UTT = "AssistantUtt"


class Fold(str, Enum):
    TRAIN = "Train"
    VALID = "Valid"
    TEST = "Test"


class Origin(str, Enum):
    HUMAN = "Human"
    SYNTHETIC = "Synthetic"


@dataclass(frozen=True)
class Turn:
    speaker: Speaker
    text: str

    def is_done(self) -> bool:
        return self.speaker is Speaker.USER and self.text.strip() == DONE_TOKEN


@dataclass
class Episode:
    goal: ApiCall
    turns: list[Turn]
    success: bool
    domain: str = ""
    schema: Optional[ApiSchema] = None
    fold: Fold = Fold.TRAIN
    origin: Origin = Origin.SYNTHETIC

    def recompute_success(self) -> bool:
        """Success iff some AssistantCall turn parses equal to the goal."""
        for turn in self.turns:
            if turn.speaker is Speaker.ASSISTANT_CALL:
                try:
                    if calls_equal(parse_call(turn.text), self.goal):
                        return True
                except ParseError:
                    continue
        return False


def check_turn_cycle(turns: list[Turn]) -> bool:
    """True iff turns follow User -> AssistantCall? -> ApiResp? -> AssistantUtt.

    A trailing partial round is allowed only after a User turn or an ApiResp
    turn; an AssistantCall with no following ApiResp is a violation.
    """
    i, n = 0, len(turns)
    while i < n:
        if turns[i].speaker is not Speaker.USER:
            return False
        i += 1
        if i >= n:
            return True
        if turns[i].speaker is Speaker.ASSISTANT_CALL:
            i += 1
            if i >= n or turns[i].speaker is not Speaker.API_RESP:
                return False
            i += 1
            if i >= n:
                return True
        if turns[i].speaker is not Speaker.ASSISTANT_UTT:
            return False
        i += 1
    return True


def calls_equal(a: ApiCall, b: ApiCall) -> bool:
    """Structural equality: slot order and surrounding value whitespace ignored."""
    return a == b


def _escape(value: str) -> str:
    return value.replace("\\", "\\\\").replace(";", "\\;")


def _unescape(value: str, position: int) -> str:
    out = []
    i = 0
    while i < len(value):
        ch = value[i]
        if ch == "\\":
            if i + 1 >= len(value):
                raise ParseError(position + i, "dangling escape")
            nxt = value[i + 1]
            if nxt not in ("\\", ";"):
                raise ParseError(position + i, f"invalid escape \\{nxt}")
            out.append(nxt)
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _split_clauses(body: str, offset: int) -> list[tuple[int, str]]:
    """Split on unescaped ';', keeping each clause's start position."""
    clauses = []
    start = 0
    i = 0
    while i < len(body):
        if body[i] == "\\":
            i += 2
            continue
        if body[i] == ";":
            clauses.append((offset + start, body[start:i]))
            start = i + 1
        i += 1
    clauses.append((offset + start, body[start:]))
    return clauses


def _parse_pairs(
    clauses: list[tuple[int, str]], what: str
) -> list[tuple[int, str, str]]:
    pairs = []
    for pos, clause in clauses:
        eq = clause.find("=")
        if eq < 0:
            raise ParseError(pos, f"{what} clause has no '=': {clause.strip()!r}")
        name = clause[:eq].strip()
        raw_value = clause[eq + 1 :].strip()
        pairs.append((pos, name, _unescape(raw_value, pos)))
    return pairs


def _strip_prefix(text: str, prefix: str) -> tuple[str, int]:
    stripped = text.strip()
    if not stripped.startswith(prefix):
        raise ParseError(0, f"missing {prefix} prefix")
    return stripped[len(prefix) :], len(prefix)


def serialize_call(call: ApiCall) -> str:
    parts = [f"{CALL_PREFIX} api_name = {call.intent}"]
    for name, value in call.slots.items():
        parts.append(f"{name} = {_escape(value.strip())}")
    return " ; ".join(parts)


def parse_call(text: str) -> ApiCall:
    body, offset = _strip_prefix(text, CALL_PREFIX)
    pairs = _parse_pairs(_split_clauses(body, offset), "call")
    if not pairs or pairs[0][1] != "api_name":
        raise ParseError(pairs[0][0] if pairs else offset, "missing api_name clause")
    intent = pairs[0][2]
    slots: dict[str, str] = {}
    for pos, name, value in pairs[1:]:
        if name == "api_name":
            raise ParseError(pos, "duplicate api_name clause")
        if name in slots:
            raise ParseError(pos, f"duplicate slot name {name!r}")
        if not TOKEN_RE.match(name):
            raise ParseError(pos, f"invalid slot name {name!r}")
        slots[name] = value
    if not TOKEN_RE.match(intent):
        raise ParseError(offset, f"invalid intent {intent!r}")
    return ApiCall(intent=intent, slots=slots)


def serialize_schema(schema: ApiSchema) -> str:
    slots = ",".join(schema.slot_names)
    return f"{SCHEMA_PREFIX} api_name = {schema.intent} ; slots = {slots}".rstrip()


def parse_schema(text: str) -> ApiSchema:
    body, offset = _strip_prefix(text, SCHEMA_PREFIX)
    pairs = _parse_pairs(_split_clauses(body, offset), "schema")
    fields = {name: (pos, value) for pos, name, value in pairs}
    if len(fields) != len(pairs):
        raise ParseError(offset, "duplicate schema clause")
    if "api_name" not in fields:
        raise ParseError(offset, "missing api_name clause")
    if "slots" not in fields:
        raise ParseError(offset, "missing slots clause")
    intent = fields["api_name"][1]
    if not TOKEN_RE.match(intent):
        raise ParseError(fields["api_name"][0], f"invalid intent {intent!r}")
    names = [s.strip() for s in fields["slots"][1].split(",") if s.strip()]
    for name in names:
        if not TOKEN_RE.match(name):
            raise ParseError(fields["slots"][0], f"invalid slot name {name!r}")
    return ApiSchema(intent=intent, slot_names=tuple(names))


def serialize_response(resp: ApiResponse) -> str:
    if resp.failure:
        return f"{RESPONSE_PREFIX} {FAIL_SENTINEL}"
    if not resp.payload:
        return RESPONSE_PREFIX
    parts = [f"{name} = {_escape(value.strip())}" for name, value in resp.payload.items()]
    return f"{RESPONSE_PREFIX} " + " ; ".join(parts)


def parse_response(text: str) -> ApiResponse:
    body, offset = _strip_prefix(text, RESPONSE_PREFIX)
    if body.strip() == FAIL_SENTINEL:
        return ApiResponse.fail()
    if not body.strip():
        return ApiResponse.ok({})
    pairs = _parse_pairs(_split_clauses(body, offset), "response")
    payload: dict[str, str] = {}
    for pos, name, value in pairs:
        if name in payload:
            raise ParseError(pos, f"duplicate slot name {name!r}")
        if not TOKEN_RE.match(name):
            raise ParseError(pos, f"invalid slot name {name!r}")
        payload[name] = value
    return ApiResponse.ok(payload)


def episode_to_dict(episode: Episode) -> dict:
    return {
        "goal": serialize_call(episode.goal),
        "schema": serialize_schema(episode.schema) if episode.schema else None,
        "turns": [{"speaker": t.speaker.value, "text": t.text} for t in episode.turns],
        "success": episode.success,
        "domain": episode.domain,
        "fold": episode.fold.value,
        "origin": episode.origin.value,
    }


def episode_from_dict(data: dict) -> Episode:
    return Episode(
        goal=parse_call(data["goal"]),
        schema=parse_schema(data["schema"]) if data.get("schema") else None,
        turns=[Turn(Speaker(t["speaker"]), t["text"]) for t in data["turns"]],
        success=bool(data["success"]),
        domain=data.get("domain", ""),
        fold=Fold(data.get("fold", "Train")),
        origin=Origin(data.get("origin", "Synthetic")),
    )
