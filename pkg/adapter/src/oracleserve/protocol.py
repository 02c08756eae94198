"""Server-side implementation of the JSON-lines oracle protocol.

Mirrors the canonical form any compliant client uses: one JSON object per
line, UTF-8, LF framing, fields in documented order, compact separators,
shortest round-trip number formatting.  Parsing is liberal (any field order,
unknown fields ignored).  The conformance vectors shipped with the client
package pin the byte-exact form; the test suite runs this module against
them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

OPS = ("meta", "logprob", "logprob_batch")

_REQUEST_FIELDS = ("id", "op", "text", "texts")
_RESPONSE_FIELDS = ("id", "name", "context_length", "scores_first_token",
                    "logprob", "logprobs", "error")


class ProtocolError(Exception):
    """A line on the wire violated the protocol."""


@dataclass(frozen=True)
class Request:
    id: int
    op: str
    text: str | None = None
    texts: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Response:
    id: int
    name: str | None = None
    context_length: int | None = None
    scores_first_token: bool | None = None
    logprob: float | None = None
    logprobs: tuple[float, ...] | None = None
    error: str | None = None


def _serialize(obj, field_order) -> str:
    payload = {}
    for field in field_order:
        value = getattr(obj, field)
        if value is None:
            continue
        if isinstance(value, tuple):
            value = list(value)
        payload[field] = value
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))


def serialize_request(request: Request) -> str:
    return _serialize(request, _REQUEST_FIELDS)


def serialize_response(response: Response) -> str:
    return _serialize(response, _RESPONSE_FIELDS)


def _parse_id(obj: dict) -> int:
    rid = obj.get("id")
    if not isinstance(rid, int) or isinstance(rid, bool) or not (0 <= rid < 1 << 64):
        raise ProtocolError(f"missing or invalid request id: {rid!r}")
    return rid


def parse_request(line: str) -> Request:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed JSON line: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("protocol line is not a JSON object")
    rid = _parse_id(obj)
    op = obj.get("op")
    if op not in OPS:
        raise ProtocolError(f"unknown op {op!r}")
    text = obj.get("text")
    texts = obj.get("texts")
    if op == "logprob" and not isinstance(text, str):
        raise ProtocolError('op "logprob" needs a string "text"')
    if op == "logprob_batch":
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            raise ProtocolError('op "logprob_batch" needs a string list "texts"')
        texts = tuple(texts)
    return Request(id=rid, op=op, text=text if op == "logprob" else None,
                   texts=texts if op == "logprob_batch" else None)


def parse_response(line: str) -> Response:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed JSON line: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("protocol line is not a JSON object")
    rid = _parse_id(obj)
    logprob = obj.get("logprob")
    if logprob is not None:
        if isinstance(logprob, bool) or not isinstance(logprob, (int, float)):
            raise ProtocolError('"logprob" must be a number')
        logprob = float(logprob)
    logprobs = obj.get("logprobs")
    if logprobs is not None:
        if not isinstance(logprobs, list) or any(
            isinstance(v, bool) or not isinstance(v, (int, float)) for v in logprobs
        ):
            raise ProtocolError('"logprobs" must be a list of numbers')
        logprobs = tuple(float(v) for v in logprobs)
    return Response(
        id=rid,
        name=obj.get("name"),
        context_length=obj.get("context_length"),
        scores_first_token=obj.get("scores_first_token"),
        logprob=logprob,
        logprobs=logprobs,
        error=obj.get("error"),
    )
