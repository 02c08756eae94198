"""Remote oracle client: subprocess-stdio and TCP transports with pipelining.

A connection is a single ordered byte stream, so concurrent callers go
through a multiplexer: each request gets a fresh id, responses are matched
back by id and may arrive in any order.  A malformed line or EOF poisons the
connection; every pending request fails with a transport error.  ``score``
reconnects and retries transport failures up to ``max_retries`` times, then
propagates; semantic errors (the oracle answered ``{"error": ...}``) are
never retried.
"""

from __future__ import annotations

import shlex
import socket
import subprocess
import threading
from concurrent.futures import Future
from concurrent.futures import TimeoutError as FutureTimeoutError

from .errors import OracleSemanticError, OracleTransportError
from .oracles import LogProbOracle
from .protocol import (
    OracleRequest,
    OracleResponse,
    ProtocolError,
    parse_response,
    serialize_request,
)

DEFAULT_META_TIMEOUT = 10.0
DEFAULT_REQUEST_TIMEOUT = 600.0
DEFAULT_MAX_IN_FLIGHT = 32


class _StdioTransport:
    def __init__(self, command: str):
        self._command = command
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=None,
            )
        except OSError as exc:
            raise OracleTransportError(f"cannot launch {command!r}: {exc}") from None

    def send_line(self, line: bytes) -> None:
        try:
            self._proc.stdin.write(line + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise OracleTransportError(f"oracle process not accepting input: {exc}") from None

    def read_line(self) -> bytes:
        return self._proc.stdout.readline()

    def describe(self) -> str:
        return f"cmd:{self._command}"

    def close(self) -> None:
        # terminate first so the reader thread unblocks on EOF; closing the
        # stdout pipe while it is mid-read would deadlock on the buffer lock
        self._proc.terminate()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                stream.close()
            except OSError:
                pass


class _TcpTransport:
    def __init__(self, host: str, port: int, connect_timeout: float):
        self._where = f"tcp:{host}:{port}"
        try:
            self._sock = socket.create_connection((host, port), timeout=connect_timeout)
        except OSError as exc:
            raise OracleTransportError(f"{self._where}: connect failed: {exc}") from None
        self._sock.settimeout(None)
        self._reader = self._sock.makefile("rb")

    def send_line(self, line: bytes) -> None:
        try:
            self._sock.sendall(line + b"\n")
        except OSError as exc:
            raise OracleTransportError(f"{self._where}: send failed: {exc}") from None

    def read_line(self) -> bytes:
        try:
            return self._reader.readline()
        except OSError:
            return b""

    def describe(self) -> str:
        return self._where

    def close(self) -> None:
        # shutdown first: it unblocks a reader thread parked in readline();
        # closing the makefile here would deadlock on its internal lock
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass


class RemoteOracle(LogProbOracle):
    """Client half of the wire protocol; see module docstring for semantics."""

    def __init__(self, transport_factory, meta_timeout: float = DEFAULT_META_TIMEOUT,
                 request_timeout: float = DEFAULT_REQUEST_TIMEOUT,
                 max_in_flight: int = DEFAULT_MAX_IN_FLIGHT, max_retries: int = 1):
        self._factory = transport_factory
        self._meta_timeout = meta_timeout
        self._request_timeout = request_timeout
        self._max_retries = max_retries
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._lock = threading.Lock()
        self._reconnect_lock = threading.Lock()
        self._transport = None
        self._pending: dict[int, Future] = {}
        self._next_id = 0
        self._dead = None  # error message once the connection is poisoned
        self._connect()

    @classmethod
    def spawn(cls, command: str, **kwargs) -> "RemoteOracle":
        return cls(lambda: _StdioTransport(command), **kwargs)

    @classmethod
    def connect_tcp(cls, host: str, port: int, **kwargs) -> "RemoteOracle":
        meta_timeout = kwargs.get("meta_timeout", DEFAULT_META_TIMEOUT)
        return cls(lambda: _TcpTransport(host, port, meta_timeout), **kwargs)

    # -- connection management ---------------------------------------------

    def _connect(self) -> None:
        self._transport = self._factory()
        self._dead = None
        self._reader_thread = threading.Thread(target=self._read_loop, daemon=True)
        self._reader_thread.start()
        meta = self._roundtrip(OracleRequest(id=0, op="meta"), self._meta_timeout,
                               retries=0)
        if meta.name is None or meta.context_length is None:
            self._poison("meta response is missing name/context_length")
            raise OracleTransportError(
                f"{self._transport.describe()}: incomplete meta handshake"
            )
        self.name = meta.name
        self.context_length = meta.context_length
        self.scores_first_token = meta.scores_first_token

    def _reconnect(self) -> None:
        old = self._transport
        if old is not None:
            old.close()
        self._connect()

    def _poison(self, reason: str) -> None:
        with self._lock:
            if self._dead is None:
                self._dead = reason
            pending = list(self._pending.values())
            self._pending.clear()
        for fut in pending:
            if not fut.done():
                fut.set_exception(OracleTransportError(reason))

    def _read_loop(self) -> None:
        transport = self._transport
        while True:
            line = transport.read_line()
            if not line:
                self._poison(f"{transport.describe()}: connection closed by remote")
                return
            try:
                response = parse_response(line.decode("utf-8"))
            except (ProtocolError, UnicodeDecodeError) as exc:
                self._poison(f"{transport.describe()}: protocol violation: {exc}")
                return
            with self._lock:
                fut = self._pending.pop(response.id, None)
            if fut is not None and not fut.done():
                fut.set_result(response)
            # responses with unknown ids are dropped (late arrivals after a retry)

    # -- request plumbing ----------------------------------------------------

    def _submit(self, request: OracleRequest) -> Future:
        fut: Future = Future()
        with self._lock:
            if self._dead is not None:
                raise OracleTransportError(self._dead)
            self._pending[request.id] = fut
        try:
            self._transport.send_line(serialize_request(request).encode("utf-8"))
        except OracleTransportError:
            with self._lock:
                self._pending.pop(request.id, None)
            raise
        return fut

    def _fresh_id(self) -> int:
        with self._lock:
            self._next_id += 1
            return self._next_id

    def _roundtrip(self, request: OracleRequest, timeout: float, retries: int) -> OracleResponse:
        for attempt in range(retries + 1):
            try:
                fut = self._submit(request)
                try:
                    response = fut.result(timeout=timeout)
                except FutureTimeoutError:
                    self._poison(
                        f"{self._transport.describe()}: timed out after {timeout}s "
                        f"waiting for response {request.id}"
                    )
                    raise OracleTransportError(self._dead) from None
                if response.error is not None:
                    raise OracleSemanticError(f"{self.name}: {response.error}")
                return response
            except OracleTransportError:
                if attempt == retries:
                    raise
                request = OracleRequest(id=self._fresh_id(), op=request.op,
                                        text=request.text, texts=request.texts)
                with self._reconnect_lock:
                    if self._dead is not None:
                        self._reconnect()
        raise AssertionError("unreachable")

    # -- oracle surface ------------------------------------------------------

    def score(self, text: str) -> float:
        if not text:
            raise ValueError("cannot score empty text")
        with self._slots:
            request = OracleRequest(id=self._fresh_id(), op="logprob", text=text)
            response = self._roundtrip(request, self._request_timeout, self._max_retries)
        if response.logprob is None:
            raise OracleSemanticError(f"{self.name}: logprob response without a value")
        return response.logprob

    def score_batch(self, texts: list[str]) -> list[float]:
        if not texts:
            return []
        with self._slots:
            request = OracleRequest(id=self._fresh_id(), op="logprob_batch",
                                    texts=tuple(texts))
            response = self._roundtrip(request, self._request_timeout, self._max_retries)
        if response.logprobs is None or len(response.logprobs) != len(texts):
            raise OracleSemanticError(
                f"{self.name}: batch response does not match request size"
            )
        return list(response.logprobs)

    def close(self) -> None:
        if self._transport is not None:
            self._poison("connection closed locally")
            self._transport.close()
            self._transport = None
