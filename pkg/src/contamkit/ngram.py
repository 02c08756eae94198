"""Trainable byte-level n-gram language model with additive smoothing.

The model is the desk-scale stand-in for a pretrained LM: it is cheap to
train from scratch on a contaminated corpus, and it memorizes example order
through the n-grams that span adjacent examples in an injected block.  The
conditional probability of byte b after context c is

    P(b | c) = (count(c -> b) + alpha) / (total(c) + alpha * 256)

which is exactly normalized for every context, seen or unseen.  Position i of
a document is conditioned on the longest available context min(i, order-1);
there is no BOS padding and no context ever crosses a document boundary.

Counting and scoring are vectorized for orders whose n-grams fit in a uint64
code (order <= 8, the default regime); longer orders up to the memory guard
use a plain dict path with identical semantics.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .datasets import ExampleDataset, seq
from .errors import ConfigError, ModelFormatError
from .rng import CounterRng

DEFAULT_ORDER = 5
DEFAULT_ALPHA = 0.1
MAX_ORDER = 12
VOCAB_SIZE = 256

_PACK_BYTES = 8  # n-grams up to 8 bytes are packed into uint64 codes
_MAGIC = b"CKNG"
_FORMAT_VERSION = 1

_INJECTION_LANE = 0x1A1A


class _PackedTable:
    """Counts for one context length, keyed by big-endian uint64 byte codes."""

    __slots__ = ("ngram_keys", "ngram_counts", "ctx_keys", "ctx_totals")

    def __init__(self, ngram_keys, ngram_counts, ctx_keys, ctx_totals):
        self.ngram_keys = ngram_keys
        self.ngram_counts = ngram_counts
        self.ctx_keys = ctx_keys
        self.ctx_totals = ctx_totals

    @classmethod
    def empty(cls):
        return cls(
            np.empty(0, dtype=np.uint64),
            np.empty(0, dtype=np.int64),
            np.empty(0, dtype=np.uint64),
            np.empty(0, dtype=np.int64),
        )

    @classmethod
    def from_codes(cls, codes: np.ndarray, weights: np.ndarray | None = None):
        if weights is None:
            keys, counts = np.unique(codes, return_counts=True)
        else:
            keys, inverse = np.unique(codes, return_inverse=True)
            counts = np.bincount(inverse, weights=weights)
        counts = counts.astype(np.int64)
        ctx_keys, inverse = np.unique(keys >> np.uint64(8), return_inverse=True)
        ctx_totals = np.bincount(inverse, weights=counts).astype(np.int64)
        return cls(keys, counts, ctx_keys, ctx_totals)

    def lookup(self, ngram_codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-code (count, context_total) with zeros for unseen keys."""
        counts = _searchsorted_lookup(self.ngram_keys, self.ngram_counts, ngram_codes)
        totals = _searchsorted_lookup(self.ctx_keys, self.ctx_totals, ngram_codes >> np.uint64(8))
        return counts, totals

    def lookup_one(self, ngram: bytes) -> tuple[int, int]:
        code = np.uint64(int.from_bytes(ngram, "big"))
        counts, totals = self.lookup(np.array([code], dtype=np.uint64))
        return int(counts[0]), int(totals[0])


class _BytesTable:
    """Dict-backed counts for context lengths too long for uint64 packing."""

    __slots__ = ("ngrams", "ctxs")

    def __init__(self, ngrams: dict | None = None, ctxs: dict | None = None):
        self.ngrams = ngrams if ngrams is not None else {}
        self.ctxs = ctxs if ctxs is not None else {}

    def add(self, ngram: bytes) -> None:
        self.ngrams[ngram] = self.ngrams.get(ngram, 0) + 1
        ctx = ngram[:-1]
        self.ctxs[ctx] = self.ctxs.get(ctx, 0) + 1

    def lookup_one(self, ngram: bytes) -> tuple[int, int]:
        return self.ngrams.get(ngram, 0), self.ctxs.get(ngram[:-1], 0)


def _searchsorted_lookup(keys, values, queries):
    if len(keys) == 0:
        return np.zeros(len(queries), dtype=np.int64)
    idx = np.searchsorted(keys, queries)
    idx = np.minimum(idx, len(keys) - 1)
    found = keys[idx] == queries
    return np.where(found, values[idx], 0)


def _pack_codes(arr: np.ndarray, width: int) -> np.ndarray:
    """Big-endian uint64 codes of every length-``width`` window of a byte array."""
    m = len(arr) - width + 1
    codes = np.zeros(m, dtype=np.uint64)
    for j in range(width):
        codes = (codes << np.uint64(8)) | arr[j : j + m]
    return codes


class NGramModel:
    """Byte-level Lidstone-smoothed n-gram model; immutable once trained."""

    def __init__(self, order: int = DEFAULT_ORDER, alpha: float = DEFAULT_ALPHA,
                 max_order: int = MAX_ORDER):
        if order < 1:
            raise ConfigError(f"order must be >= 1, got {order}")
        if order > max_order:
            raise ConfigError(
                f"order {order} exceeds the memory guard of {max_order}; "
                f"raise max_order explicitly if you mean it"
            )
        if not (alpha > 0):
            raise ConfigError(f"alpha must be > 0, got {alpha}")
        self.order = order
        self.alpha = float(alpha)
        # Context length 0 is a dense 256-vector; longer contexts get a table.
        self._counts0 = np.zeros(VOCAB_SIZE, dtype=np.int64)
        self._total0 = 0
        self._tables: list = [None]
        for o in range(1, order):
            if o + 1 <= _PACK_BYTES:
                self._tables.append(_PackedTable.empty())
            else:
                self._tables.append(_BytesTable())

    # -- training ---------------------------------------------------------

    @classmethod
    def train(cls, corpus: Sequence[str], order: int = DEFAULT_ORDER,
              alpha: float = DEFAULT_ALPHA, max_order: int = MAX_ORDER) -> "NGramModel":
        """Single deterministic pass over the corpus, one count per byte position."""
        if not corpus:
            raise ConfigError("training corpus is empty")
        model = cls(order=order, alpha=alpha, max_order=max_order)
        n = order
        early: list[dict] = [{} for _ in range(n)]  # index o, used for 1 <= o <= n-2
        bulk_parts: list[np.ndarray] = []
        bulk_dict = _BytesTable() if (n >= 2 and n > _PACK_BYTES) else None

        for doc in corpus:
            bs = doc.encode("utf-8")
            T = len(bs)
            if T == 0:
                continue
            if n == 1:
                arr = np.frombuffer(bs, dtype=np.uint8)
                model._counts0 += np.bincount(arr, minlength=VOCAB_SIZE).astype(np.int64)
                model._total0 += T
                continue
            model._counts0[bs[0]] += 1
            model._total0 += 1
            for i in range(1, min(n - 1, T)):
                key = bs[: i + 1]
                tab = early[i]
                tab[key] = tab.get(key, 0) + 1
            if T >= n:
                if bulk_dict is None:
                    arr = np.frombuffer(bs, dtype=np.uint8).astype(np.uint64)
                    bulk_parts.append(_pack_codes(arr, n))
                else:
                    for i in range(n - 1, T):
                        bulk_dict.add(bs[i - n + 1 : i + 1])

        for o in range(1, n - 1):
            model._tables[o] = _table_from_dict(early[o], o)
        if n >= 2:
            if bulk_dict is None:
                if bulk_parts:
                    model._tables[n - 1] = _PackedTable.from_codes(np.concatenate(bulk_parts))
            else:
                model._tables[n - 1] = bulk_dict
        return model

    # -- scoring ----------------------------------------------------------

    def logprob(self, text: str) -> float:
        """Exact chain-rule log-probability of ``text`` scored as one document."""
        if not text:
            raise ValueError("logprob of empty text")
        return self._score_bytes(text.encode("utf-8"), 0)

    def window_logprob(self, window: bytes | str, score_from: int) -> float:
        """Sum of byte log-probs for positions >= score_from, contexts within the window."""
        bs = window.encode("utf-8") if isinstance(window, str) else bytes(window)
        if not (0 <= score_from < len(bs)):
            raise ValueError(f"score_from {score_from} out of range for window of {len(bs)} bytes")
        return self._score_bytes(bs, score_from)

    def _term(self, count: int, total: int) -> float:
        return math.log((count + self.alpha) / (total + self.alpha * VOCAB_SIZE))

    def _score_bytes(self, bs: bytes, start: int) -> float:
        n = self.order
        T = len(bs)
        if n == 1:
            arr = np.frombuffer(bs, dtype=np.uint8)[start:]
            counts = self._counts0[arr]
            terms = np.log((counts + self.alpha) / (self._total0 + self.alpha * VOCAB_SIZE))
            return float(np.sum(terms))
        head = 0.0
        if start == 0:
            head += self._term(int(self._counts0[bs[0]]), self._total0)
        for i in range(max(start, 1), min(n - 1, T)):
            c, tot = self._tables[i].lookup_one(bs[: i + 1])
            head += self._term(c, tot)
        first_bulk = max(start, n - 1)
        if first_bulk >= T:
            return head
        table = self._tables[n - 1]
        if isinstance(table, _PackedTable):
            arr = np.frombuffer(bs, dtype=np.uint8).astype(np.uint64)
            codes = _pack_codes(arr, n)[first_bulk - (n - 1) :]
            counts, totals = table.lookup(codes)
            terms = np.log(
                (counts + self.alpha) / (totals + self.alpha * VOCAB_SIZE)
            )
            return head + float(np.sum(terms))
        tail = []
        for i in range(first_bulk, T):
            c, tot = table.lookup_one(bs[i - n + 1 : i + 1])
            tail.append(self._term(c, tot))
        return head + float(np.sum(np.asarray(tail)))

    # -- introspection (tests and diagnostics) -----------------------------

    def count(self, context: bytes, next_byte: int) -> int:
        """Training count of ``next_byte`` after ``context`` (longest-context rule)."""
        o = len(context)
        self._check_context_length(o)
        if o == 0:
            return int(self._counts0[next_byte])
        c, _ = self._tables[o].lookup_one(context + bytes([next_byte]))
        return c

    def context_total(self, context: bytes) -> int:
        o = len(context)
        self._check_context_length(o)
        if o == 0:
            return self._total0
        table = self._tables[o]
        if isinstance(table, _PackedTable):
            code = np.uint64(int.from_bytes(context, "big"))
            total = _searchsorted_lookup(
                table.ctx_keys, table.ctx_totals, np.array([code], dtype=np.uint64)
            )
            return int(total[0])
        return table.ctxs.get(context, 0)

    def contexts(self, context_length: int) -> list[bytes]:
        """All contexts of the given length seen in training, in sorted order."""
        self._check_context_length(context_length)
        if context_length == 0:
            return [b""]
        table = self._tables[context_length]
        if isinstance(table, _PackedTable):
            return [int(k).to_bytes(context_length, "big") for k in table.ctx_keys]
        return sorted(table.ctxs)

    def _check_context_length(self, o: int) -> None:
        if not (0 <= o <= self.order - 1):
            raise ValueError(f"context length {o} not in [0, {self.order - 1}]")

    # -- persistence --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Binary, versioned, deterministic dump; see _FORMAT_VERSION layout below."""
        path = Path(path)
        with path.open("wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<HBd", _FORMAT_VERSION, self.order, self.alpha))
            fh.write(struct.pack("<Q", self._total0))
            fh.write(self._counts0.astype("<i8").tobytes())
            for o in range(1, self.order):
                table = self._tables[o]
                if isinstance(table, _PackedTable):
                    fh.write(struct.pack("<B", 0))
                    for arr, dt in (
                        (table.ngram_keys, "<u8"),
                        (table.ngram_counts, "<i8"),
                        (table.ctx_keys, "<u8"),
                        (table.ctx_totals, "<i8"),
                    ):
                        fh.write(struct.pack("<Q", len(arr)))
                        fh.write(arr.astype(dt).tobytes())
                else:
                    fh.write(struct.pack("<B", 1))
                    for mapping, width in ((table.ngrams, o + 1), (table.ctxs, o)):
                        fh.write(struct.pack("<Q", len(mapping)))
                        for key in sorted(mapping):
                            fh.write(key)
                            fh.write(struct.pack("<q", mapping[key]))

    @classmethod
    def load(cls, path: str | Path) -> "NGramModel":
        path = Path(path)
        data = path.read_bytes()
        view = memoryview(data)
        pos = 0

        def take(count: int) -> memoryview:
            nonlocal pos
            if pos + count > len(view):
                raise ModelFormatError(f"{path}: truncated model file")
            chunk = view[pos : pos + count]
            pos += count
            return chunk

        if bytes(take(4)) != _MAGIC:
            raise ModelFormatError(f"{path}: not a model file (bad magic)")
        version, order, alpha = struct.unpack("<HBd", take(11))
        if version != _FORMAT_VERSION:
            raise ModelFormatError(
                f"{path}: unsupported model format version {version} "
                f"(this build reads version {_FORMAT_VERSION})"
            )
        model = cls(order=order, alpha=alpha, max_order=max(order, MAX_ORDER))
        (model._total0,) = struct.unpack("<Q", take(8))
        model._counts0 = np.frombuffer(take(8 * VOCAB_SIZE), dtype="<i8").astype(np.int64)
        for o in range(1, order):
            (kind,) = struct.unpack("<B", take(1))
            if kind == 0:
                arrays = []
                for dt in (np.uint64, np.int64, np.uint64, np.int64):
                    (length,) = struct.unpack("<Q", take(8))
                    wire = "<u8" if dt is np.uint64 else "<i8"
                    arrays.append(np.frombuffer(take(8 * length), dtype=wire).astype(dt))
                model._tables[o] = _PackedTable(*arrays)
            elif kind == 1:
                table = _BytesTable()
                for mapping, width in ((table.ngrams, o + 1), (table.ctxs, o)):
                    (length,) = struct.unpack("<Q", take(8))
                    for _ in range(length):
                        key = bytes(take(width))
                        (value,) = struct.unpack("<q", take(8))
                        mapping[key] = value
                model._tables[o] = table
            else:
                raise ModelFormatError(f"{path}: unknown table kind {kind}")
        if pos != len(view):
            raise ModelFormatError(f"{path}: {len(view) - pos} trailing bytes")
        return model


def _table_from_dict(mapping: dict, o: int):
    if o + 1 > _PACK_BYTES:
        table = _BytesTable()
        for key, value in mapping.items():
            table.ngrams[key] = value
            ctx = key[:-1]
            table.ctxs[ctx] = table.ctxs.get(ctx, 0) + value
        return table
    if not mapping:
        return _PackedTable.empty()
    codes = np.fromiter(
        (int.from_bytes(k, "big") for k in mapping), dtype=np.uint64, count=len(mapping)
    )
    weights = np.fromiter(mapping.values(), dtype=np.int64, count=len(mapping))
    return _PackedTable.from_codes(codes, weights)


# -- contaminated corpus construction --------------------------------------


@dataclass(frozen=True)
class CanaryPlan:
    """Background documents plus canary datasets injected with duplication counts."""

    background: tuple[str, ...]
    canaries: tuple[tuple[ExampleDataset, int], ...]
    injection_seed: int

    def __post_init__(self):
        for dataset, dup in self.canaries:
            if dup < 1:
                raise ConfigError(
                    f"canary {dataset.name!r}: duplication count must be >= 1, got {dup}"
                )


def build_contaminated_corpus(plan: CanaryPlan) -> list[str]:
    """Background docs plus whole canonical-order canary blocks at seeded positions.

    Each canary block is one document (the dataset's seq in canonical order);
    block insertion positions come from the injection_seed counter stream, so
    the output document order is a pure function of the plan.
    """
    docs = list(plan.background)
    rng = CounterRng(plan.injection_seed, lane=_INJECTION_LANE, index=0)
    for dataset, dup in plan.canaries:
        block = seq(dataset.examples)
        for _ in range(dup):
            docs.insert(rng.randbelow(len(docs) + 1), block)
    return docs
