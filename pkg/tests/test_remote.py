"""Remote oracle client against the scripted mock oracle process."""

import re
import subprocess
import sys
import threading

import pytest

from contamkit.errors import OracleSemanticError, OracleTransportError
from contamkit.oracles import resolve_oracle
from contamkit.remote import RemoteOracle

from conftest import MOCK_ORACLE


def spawn(mock_cmd, *flags, **kwargs):
    return RemoteOracle.spawn(mock_cmd(*flags), **kwargs)


def test_meta_handshake_populates_name_and_context(mock_cmd):
    with spawn(mock_cmd, "--name", "scripted", "--context-length", "2048") as oracle:
        assert oracle.name == "scripted"
        assert oracle.context_length == 2048


def test_score_uses_logprob_op(mock_cmd):
    with spawn(mock_cmd, "--score", "bytelen") as oracle:
        assert oracle.score("abcd") == -2.0
        assert oracle.score("ü") == -1.0  # two UTF-8 bytes


def test_determinism_same_text(mock_cmd):
    with spawn(mock_cmd, "--score", "sumord") as oracle:
        assert oracle.score("hello") == oracle.score("hello")


def test_hundred_pipelined_requests_reordered(mock_cmd):
    # the mock holds 100 requests and answers them in reverse arrival order;
    # id matching must untangle them
    with spawn(mock_cmd, "--score", "bytelen", "--reverse-batch", "100",
               max_in_flight=128, request_timeout=30) as oracle:
        texts = ["x" * (i + 1) for i in range(100)]
        results: dict[int, float] = {}

        def worker(i):
            results[i] = oracle.score(texts[i])

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(100)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == {i: -0.5 * (i + 1) for i in range(100)}


def test_batch_op(mock_cmd):
    with spawn(mock_cmd, "--score", "bytelen") as oracle:
        assert oracle.score_batch(["a", "bb", "ccc"]) == [-0.5, -1.0, -1.5]


def test_semantic_error_surfaces_oracle_name(mock_cmd):
    with spawn(mock_cmd, "--name", "picky", "--error-substr", "forbidden") as oracle:
        assert oracle.score("fine") == -2.0
        with pytest.raises(OracleSemanticError, match="picky"):
            oracle.score("forbidden text")


def test_remote_death_is_transport_error_after_retries(mock_cmd):
    # every (re)spawned process dies on its first scoring request without
    # answering, so the retry budget runs out
    oracle = spawn(mock_cmd, "--die-before", "1", max_retries=2, request_timeout=10)
    with pytest.raises(OracleTransportError):
        oracle.score("doomed")
    oracle.close()


def test_retry_recovers_from_single_death(mock_cmd):
    # dies after 3 answers; the 3rd score fails once, reconnects, succeeds
    oracle = spawn(mock_cmd, "--die-after", "3", max_retries=1, request_timeout=10)
    assert oracle.score("a") == -0.5
    assert oracle.score("bb") == -1.0
    assert oracle.score("ccc") == -1.5  # server exits after this answer
    assert oracle.score("dddd") == -2.0  # transparently retried on a fresh process
    oracle.close()


def test_malformed_line_poisons_connection(mock_cmd):
    oracle = spawn(mock_cmd, "--malformed-after", "1", max_retries=0,
                   request_timeout=10)
    oracle.score("first")  # answer arrives, then the garbage line
    with pytest.raises(OracleTransportError, match="protocol violation"):
        for _ in range(4):
            oracle.score("second")
    oracle.close()


def test_handshake_timeout(mock_cmd):
    with pytest.raises(OracleTransportError, match="timed out"):
        spawn(mock_cmd, "--no-meta", meta_timeout=0.4)


def test_tcp_transport(mock_cmd):
    proc = subprocess.Popen(
        [sys.executable, str(MOCK_ORACLE), "--tcp", "--score", "bytelen",
         "--name", "tcp-mock", "--context-length", "64"],
        stdout=subprocess.PIPE,
    )
    try:
        banner = proc.stdout.readline().decode()
        port = int(re.match(r"PORT (\d+)", banner).group(1))
        with RemoteOracle.connect_tcp("127.0.0.1", port, request_timeout=10) as oracle:
            assert oracle.name == "tcp-mock"
            assert oracle.context_length == 64
            assert oracle.score("abcdef") == -3.0
    finally:
        proc.terminate()
        proc.wait()


def test_resolve_oracle_cmd_spec(mock_cmd):
    with resolve_oracle("cmd:" + mock_cmd("--name", "via-spec")) as oracle:
        assert oracle.name == "via-spec"
        assert oracle.score("xy") == -1.0


def test_resolve_oracle_bad_specs():
    from contamkit.errors import ConfigError

    for spec in ("nonsense", "tcp:localhost", "builtin:ngram=", "cmd:"):
        with pytest.raises(ConfigError):
            resolve_oracle(spec)
