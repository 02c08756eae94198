"""Log-probability oracle abstraction and the oracle-spec registry.

An oracle is anything that deterministically maps a text to a finite total
log-probability.  The built-in n-gram scores exactly at any length, so its
context_length is 0 (unbounded); remote oracles report their own bound and
are responsible for striding internally.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod

from .errors import ConfigError, OracleSemanticError
from .ngram import NGramModel


class LogProbOracle(ABC):
    """Deterministic text -> total log-probability scorer."""

    name: str = "oracle"
    context_length: int = 0  # 0 means unbounded

    @abstractmethod
    def score(self, text: str) -> float:
        """Total log-probability of ``text``; must be finite and repeatable."""

    def score_batch(self, texts: list[str]) -> list[float]:
        return [self.score(t) for t in texts]

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()
        return False


class NGramOracle(LogProbOracle):
    """Wraps a trained NGramModel; safe for unlimited concurrent reads."""

    def __init__(self, model: NGramModel, name: str | None = None):
        self.model = model
        self.name = name if name is not None else (
            f"ngram:order={model.order},alpha={model.alpha:g}"
        )
        self.context_length = 0

    def score(self, text: str) -> float:
        if not text:
            raise ValueError("cannot score empty text")
        value = self.model.logprob(text)
        if not math.isfinite(value):
            raise OracleSemanticError(f"{self.name}: non-finite score {value!r}")
        return value


def resolve_oracle(spec: str, meta_timeout: float = 10.0,
                   request_timeout: float = 600.0, max_retries: int = 1):
    """Build an oracle from a CLI specifier.

    ``builtin:ngram=<model-file>`` loads a trained model file;
    ``cmd:<shell command>`` spawns a subprocess speaking the wire protocol on
    stdio; ``tcp:<host>:<port>`` connects to a protocol server.
    """
    from .remote import RemoteOracle  # deferred: keeps import light for builtin use

    if spec.startswith("builtin:ngram="):
        path = spec[len("builtin:ngram="):]
        if not path:
            raise ConfigError("builtin:ngram= needs a model file path")
        return NGramOracle(NGramModel.load(path))
    if spec.startswith("cmd:"):
        command = spec[len("cmd:"):].strip()
        if not command:
            raise ConfigError("cmd: needs a shell command")
        return RemoteOracle.spawn(command, meta_timeout=meta_timeout,
                                  request_timeout=request_timeout,
                                  max_retries=max_retries)
    if spec.startswith("tcp:"):
        rest = spec[len("tcp:"):]
        host, sep, port = rest.rpartition(":")
        if not sep or not host or not port.isdigit():
            raise ConfigError(f"malformed tcp oracle spec {spec!r} (want tcp:host:port)")
        return RemoteOracle.connect_tcp(host, int(port), meta_timeout=meta_timeout,
                                        request_timeout=request_timeout,
                                        max_retries=max_retries)
    raise ConfigError(
        f"unknown oracle spec {spec!r}; expected builtin:ngram=..., cmd:... or tcp:host:port"
    )
