"""Seeded synthetic text: background corpora and exchangeable datasets.

Documents and dataset examples are sentences of pseudo-words drawn i.i.d.
from a fixed 1000-word lexicon, so a synthetic dataset is exchangeable by
construction.  Background documents never contain newlines; the example
separator used by ``seq`` therefore appears only inside injected canary
blocks, which is what makes the junction n-grams informative.

Everything is keyed by (seed, lane, index) counter streams; the modulo bias
of mapping 64-bit draws onto the lexicon is ~1e-16 and irrelevant for text
synthesis.
"""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path

import numpy as np

from .datasets import Example, ExampleDataset
from .errors import ConfigError
from .rng import counter_block, derive_key

LEXICON_SIZE = 1000

_LANE_DOC_LENGTHS = 0x0D01
_LANE_DOC_WORDS = 0x0D02
_LANE_EXAMPLE_WORDS = 0x0E01

_CONSONANTS = "bdfghklmnprstvz"
_VOWELS = "aeiou"


@lru_cache(maxsize=4)
def synthetic_lexicon(size: int = LEXICON_SIZE) -> tuple[str, ...]:
    """Deterministic list of distinct pseudo-words ("bada", "zolu", ...)."""
    syllables = [c + v for c in _CONSONANTS for v in _VOWELS]  # 75 distinct
    limit = len(syllables) ** 2
    if not (1 <= size <= limit):
        raise ConfigError(f"lexicon size must be in [1, {limit}]")
    words = []
    for i in range(size):
        hi, lo = divmod(i, len(syllables))
        words.append(syllables[hi] + syllables[lo])
    return tuple(words)


def synthetic_documents(
    seed: int,
    count: int,
    min_words: int = 5,
    max_words: int = 12,
    lexicon: tuple[str, ...] | None = None,
) -> list[str]:
    """``count`` newline-free documents of min_words..max_words random words."""
    if count < 1:
        raise ConfigError(f"document count must be >= 1, got {count}")
    if not (1 <= min_words <= max_words):
        raise ConfigError("need 1 <= min_words <= max_words")
    lex = np.array(lexicon if lexicon is not None else synthetic_lexicon())
    span = max_words - min_words + 1
    lengths = (
        counter_block(derive_key(seed, _LANE_DOC_LENGTHS, 0), 0, count) % np.uint64(span)
    ).astype(np.int64) + min_words
    draws = counter_block(derive_key(seed, _LANE_DOC_WORDS, 0), 0, int(lengths.sum()))
    words = lex[(draws % np.uint64(len(lex))).astype(np.int64)]
    docs = []
    offset = 0
    for length in lengths:
        docs.append(" ".join(words[offset : offset + length]))
        offset += length
    return docs


def synthetic_dataset(
    seed: int,
    num_examples: int,
    words_per_example: int = 6,
    name: str | None = None,
    lexicon: tuple[str, ...] | None = None,
) -> ExampleDataset:
    """An exchangeable dataset of ``num_examples`` fixed-length word sentences."""
    if num_examples < 1:
        raise ConfigError(f"num_examples must be >= 1, got {num_examples}")
    if words_per_example < 1:
        raise ConfigError(f"words_per_example must be >= 1, got {words_per_example}")
    lex = np.array(lexicon if lexicon is not None else synthetic_lexicon())
    draws = counter_block(
        derive_key(seed, _LANE_EXAMPLE_WORDS, 0), 0, num_examples * words_per_example
    )
    words = lex[(draws % np.uint64(len(lex))).astype(np.int64)]
    examples = tuple(
        Example(
            text=" ".join(words[i * words_per_example : (i + 1) * words_per_example]),
            index=i,
        )
        for i in range(num_examples)
    )
    return ExampleDataset(
        name=name if name is not None else f"synthetic-{seed:x}",
        examples=examples,
        source_path=f"synthetic:seed={seed},examples={num_examples}",
    )


def load_corpus(spec: str) -> list[str]:
    """Documents from a corpus spec: a file path (one document per non-empty
    line) or ``synthetic:seed=N,docs=M[,min_words=A][,max_words=B]``."""
    if spec.startswith("synthetic:"):
        params = _parse_kv(spec[len("synthetic:"):], "corpus spec")
        seed = int(params.pop("seed", 0))
        docs = int(params.pop("docs", 0))
        min_words = int(params.pop("min_words", 5))
        max_words = int(params.pop("max_words", 12))
        if params:
            raise ConfigError(f"unknown corpus spec keys: {sorted(params)}")
        if docs < 1:
            raise ConfigError("synthetic corpus spec needs docs=<count >= 1>")
        return synthetic_documents(seed, docs, min_words=min_words, max_words=max_words)
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"corpus file not found: {path}")
    docs = [line.strip() for line in path.read_text(encoding="utf-8").splitlines()]
    docs = [d for d in docs if d]
    if not docs:
        raise ConfigError(f"corpus file {path} holds no non-empty lines")
    return docs


def _parse_kv(body: str, what: str) -> dict[str, str]:
    params: dict[str, str] = {}
    for part in body.split(","):
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"malformed {what} entry {part!r} (expected key=value)")
        key, value = part.split("=", 1)
        params[key.strip()] = value.strip()
    return params
