"""Lookup-table API implementation.

The table maps canonical serialized calls to responses; any call absent from
the table yields the in-band failure sentinel rather than an error.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from fastapi import FastAPI, Request, Response

from .core import (
    ApiCall,
    ApiResponse,
    ApiSchema,
    Episode,
    Speaker,
    parse_call,
    parse_response,
    serialize_call,
    serialize_response,
)
from .errors import UnknownIntent


@dataclass
class ApiTable:
    """Immutable after load; keys are canonical call serializations."""

    entries: dict[str, ApiResponse] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)


def load_table(episodes: list[Episode]) -> ApiTable:
    """Populate a table from every (call, following response) pair.

    Later duplicates overwrite earlier ones.
    """
    entries: dict[str, ApiResponse] = {}
    for episode in episodes:
        turns = episode.turns
        for i, turn in enumerate(turns):
            if turn.speaker is not Speaker.ASSISTANT_CALL:
                continue
            if i + 1 >= len(turns) or turns[i + 1].speaker is not Speaker.API_RESP:
                continue
            call = parse_call(turn.text)
            resp = parse_response(turns[i + 1].text)
            if not resp.failure:
                entries[serialize_call(call)] = resp
    return ApiTable(entries)


def invoke(table: ApiTable, call: ApiCall) -> ApiResponse:
    return table.entries.get(serialize_call(call), ApiResponse.fail())


def synthesize_table(
    schemas: list[ApiSchema], goals: list[ApiCall], seed: int
) -> ApiTable:
    """Deterministic-per-seed fixture table with a generated payload per goal."""
    known = {schema.intent for schema in schemas}
    rng = random.Random(seed)
    entries: dict[str, ApiResponse] = {}
    for goal in goals:
        if goal.intent not in known:
            raise UnknownIntent(f"goal intent {goal.intent!r} has no schema")
        payload = {
            "reference": f"ref-{rng.randrange(10**8):08d}",
            "status": "success",
        }
        entries[serialize_call(goal)] = ApiResponse.ok(payload)
    return ApiTable(entries)


def save_table(table: ApiTable, path: str) -> None:
    import json

    doc = {key: serialize_response(resp) for key, resp in sorted(table.entries.items())}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_table_file(path: str) -> ApiTable:
    import json

    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    entries = {
        serialize_call(parse_call(key)): parse_response(value)
        for key, value in doc.items()
    }
    return ApiTable(entries)


def create_app(table: ApiTable):
    """Local service endpoint exposing the same contract over HTTP.

    Hits and sentinel misses both return status 200; the sentinel is in-band.
    """
    app = FastAPI(title="todsim mock API")

    @app.post("/invoke")
    async def invoke_endpoint(request: Request) -> Response:
        body = (await request.body()).decode("utf-8")
        call = parse_call(body)
        resp = invoke(table, call)
        return Response(content=serialize_response(resp), media_type="text/plain")

    return app
