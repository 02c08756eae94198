"""The serve loop: read protocol lines, answer them in arrival order.

Requests are processed strictly FIFO on the reading thread, so there is
never more than one model execution in flight; pipelined clients are served
by queueing (the transport buffers), not parallel inference.  Failures stay
request-local: scoring errors (including OOM) become error responses and the
process keeps serving.  A malformed line gets an error response carrying the
offending id when one can be parsed out, else a protocol-error line with
id 0 (the client never issues id 0).
"""

from __future__ import annotations

import json
import socket
import sys

from .models import ModelBackend
from .protocol import ProtocolError, Request, Response, parse_request, serialize_response


def _is_oom(exc: BaseException) -> bool:
    if type(exc).__name__ == "OutOfMemoryError":
        return True
    return isinstance(exc, RuntimeError) and "out of memory" in str(exc).lower()


class OracleServer:
    def __init__(self, backend: ModelBackend):
        self.backend = backend

    def handle(self, request: Request) -> Response:
        if request.op == "meta":
            return Response(
                id=request.id,
                name=self.backend.name,
                context_length=self.backend.context_length,
                scores_first_token=self.backend.scores_first_token,
            )
        try:
            if request.op == "logprob":
                return Response(id=request.id,
                                logprob=self.backend.logprob(request.text))
            return Response(
                id=request.id,
                logprobs=tuple(self.backend.logprob_batch(list(request.texts))),
            )
        except MemoryError:
            return Response(id=request.id, error="out of memory")
        except Exception as exc:  # noqa: BLE001 - request-local by design
            if _is_oom(exc):
                return Response(id=request.id, error=f"out of memory: {exc}")
            return Response(id=request.id, error=f"{type(exc).__name__}: {exc}")

    def respond_line(self, raw: bytes) -> str | None:
        line = raw.strip()
        if not line:
            return None
        try:
            request = parse_request(line.decode("utf-8"))
        except (ProtocolError, UnicodeDecodeError) as exc:
            offending = _salvage_id(line)
            return serialize_response(
                Response(id=offending if offending is not None else 0,
                         error=f"protocol error: {exc}")
            )
        return serialize_response(self.handle(request))

    def serve_stream(self, infile, outfile) -> None:
        for raw in infile:
            reply = self.respond_line(raw)
            if reply is not None:
                outfile.write(reply.encode("utf-8") + b"\n")
                outfile.flush()

    def serve_stdio(self) -> None:
        self.serve_stream(sys.stdin.buffer, sys.stdout.buffer)

    def serve_tcp(self, port: int, announce=None, max_connections: int | None = None) -> None:
        """Accept connections one at a time; each is served until it closes."""
        server = socket.create_server(("0.0.0.0", port))
        actual_port = server.getsockname()[1]
        if announce is not None:
            announce(actual_port)
        served = 0
        while max_connections is None or served < max_connections:
            conn, _ = server.accept()
            with conn:
                infile = conn.makefile("rb")
                outfile = conn.makefile("wb")
                try:
                    self.serve_stream(infile, outfile)
                except (BrokenPipeError, ConnectionResetError):
                    pass
            served += 1


def _salvage_id(line: bytes) -> int | None:
    try:
        obj = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError):
        return None
    if isinstance(obj, dict):
        rid = obj.get("id")
        if isinstance(rid, int) and not isinstance(rid, bool) and 0 <= rid < 1 << 64:
            return rid
    return None
