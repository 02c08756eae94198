"""JSON-lines wire protocol for remote log-probability oracles.

Framing is one JSON object per line, UTF-8, LF-terminated.  Serialization is
canonical and bit-exact: fields in the documented order, compact separators,
no ASCII escaping, numbers in Python's shortest round-trip formatting.  The
parser is liberal: any field order is accepted and unknown fields are
ignored.  Both ends of the wire (this client and any adapter process) must
serialize identically; the pinned vectors in data/protocol_vectors.json are
the conformance suite.

Requests:  {"id": u64, "op": "meta"}
           {"id": u64, "op": "logprob", "text": str}
           {"id": u64, "op": "logprob_batch", "texts": [str, ...]}
Responses: {"id": u64, "name": str, "context_length": int[, "scores_first_token": bool]}
           {"id": u64, "logprob": double}
           {"id": u64, "logprobs": [double, ...]}
           {"id": u64, "error": str}
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import ContamkitError

OPS = ("meta", "logprob", "logprob_batch")

_REQUEST_FIELDS = ("id", "op", "text", "texts")
_RESPONSE_FIELDS = ("id", "name", "context_length", "scores_first_token",
                    "logprob", "logprobs", "error")


class ProtocolError(ContamkitError):
    """A line on the wire violated the protocol."""


@dataclass(frozen=True)
class OracleRequest:
    id: int
    op: str
    text: str | None = None
    texts: tuple[str, ...] | None = None


@dataclass(frozen=True)
class OracleResponse:
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


def serialize_request(request: OracleRequest) -> str:
    """Canonical single-line form, without the trailing LF."""
    return _serialize(request, _REQUEST_FIELDS)


def serialize_response(response: OracleResponse) -> str:
    return _serialize(response, _RESPONSE_FIELDS)


def _parse_object(line: str) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed JSON line: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("protocol line is not a JSON object")
    return obj


def _parse_id(obj: dict) -> int:
    rid = obj.get("id")
    if not isinstance(rid, int) or isinstance(rid, bool) or not (0 <= rid < 1 << 64):
        raise ProtocolError(f"missing or invalid request id: {rid!r}")
    return rid


def parse_request(line: str) -> OracleRequest:
    obj = _parse_object(line)
    rid = _parse_id(obj)
    op = obj.get("op")
    if op not in OPS:
        raise ProtocolError(f"unknown op {op!r}")
    text = obj.get("text")
    texts = obj.get("texts")
    if op == "logprob":
        if not isinstance(text, str):
            raise ProtocolError('op "logprob" needs a string "text"')
    elif op == "logprob_batch":
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            raise ProtocolError('op "logprob_batch" needs a string list "texts"')
        texts = tuple(texts)
    return OracleRequest(id=rid, op=op, text=text if op == "logprob" else None,
                         texts=texts if op == "logprob_batch" else None)


def parse_response(line: str) -> OracleResponse:
    obj = _parse_object(line)
    rid = _parse_id(obj)
    error = obj.get("error")
    if error is not None and not isinstance(error, str):
        raise ProtocolError('"error" must be a string')
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
    context_length = obj.get("context_length")
    if context_length is not None and (
        isinstance(context_length, bool) or not isinstance(context_length, int)
    ):
        raise ProtocolError('"context_length" must be an integer')
    name = obj.get("name")
    if name is not None and not isinstance(name, str):
        raise ProtocolError('"name" must be a string')
    scores_first_token = obj.get("scores_first_token")
    if scores_first_token is not None and not isinstance(scores_first_token, bool):
        raise ProtocolError('"scores_first_token" must be a boolean')
    return OracleResponse(
        id=rid,
        name=name,
        context_length=context_length,
        scores_first_token=scores_first_token,
        logprob=logprob,
        logprobs=logprobs,
        error=error,
    )
