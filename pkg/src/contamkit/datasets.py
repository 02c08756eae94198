"""Benchmark datasets as ordered example collections.

The object under test is the *order* of a dataset's examples, so this module
is strict about it: examples keep exactly the order of the source file, each
example is normalized to a single newline-free line, and ``seq`` joins
examples with single newlines.  Because the join rule is order-independent,
the concatenation of any permutation of the same examples is a rearrangement
of the same characters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, DatasetFormatError
from .rng import CounterRng

DEFAULT_MAX_EXAMPLES = 5000


@dataclass(frozen=True)
class Example:
    text: str
    index: int

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"example {self.index}: empty text")
        if "\n" in self.text:
            raise ValueError(f"example {self.index}: text contains a newline")


@dataclass(frozen=True)
class ExampleDataset:
    """An ordered collection of examples; order is the canonical order."""

    name: str
    examples: tuple[Example, ...]
    source_path: str

    def __post_init__(self):
        if not self.examples:
            raise ValueError(f"dataset {self.name!r} has no examples")

    def __len__(self) -> int:
        return len(self.examples)

    def texts(self) -> list[str]:
        return [e.text for e in self.examples]

    def reordered(self, mapping: Sequence[int], name: str | None = None) -> "ExampleDataset":
        """New dataset whose position i holds example mapping[i] (re-canonicalized)."""
        if sorted(mapping) != list(range(len(self.examples))):
            raise ValueError("mapping is not a permutation of the example indices")
        examples = tuple(
            Example(text=self.examples[src].text, index=i) for i, src in enumerate(mapping)
        )
        return ExampleDataset(
            name=name if name is not None else self.name,
            examples=examples,
            source_path=self.source_path,
        )


@dataclass(frozen=True)
class SeedLineage:
    master_seed: int
    shard_index: int
    permutation_index: int


@dataclass(frozen=True)
class Permutation:
    mapping: tuple[int, ...]
    seed_lineage: SeedLineage

    def apply(self, items: Sequence) -> list:
        return [items[src] for src in self.mapping]


@dataclass(frozen=True)
class ShardPlan:
    num_examples: int
    num_shards: int
    boundaries: tuple[tuple[int, int], ...]

    def sizes(self) -> list[int]:
        return [end - start for start, end in self.boundaries]


def normalize_text(raw: str) -> str:
    """Replace each internal newline with one space, strip surrounding whitespace."""
    return raw.replace("\n", " ").strip()


def _decode_line(data: bytes, lineno: int, path: str) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DatasetFormatError(f"{path}:{lineno}: invalid UTF-8 ({exc.reason})") from None


def _parse_jsonl_line(line: str, lineno: int, path: str) -> str:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict) or "text" not in obj:
        raise DatasetFormatError(f'{path}:{lineno}: missing "text" field')
    text = obj["text"]
    if not isinstance(text, str):
        raise DatasetFormatError(f'{path}:{lineno}: "text" is not a string')
    return text


def load_dataset(
    path: str | Path,
    max_examples: int | None = None,
    fmt: str = "auto",
    name: str | None = None,
) -> ExampleDataset:
    """Load a dataset from JSON-lines ({"text": ...} per line) or plain text.

    ``fmt`` is "jsonl", "text", or "auto"; auto decides by whether the first
    line parses as a JSON object.  When ``max_examples`` is set only the first
    ``max_examples`` lines are read; later lines are never parsed.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetFormatError(f"dataset file not found: {path}")
    if fmt not in ("auto", "jsonl", "text"):
        raise ConfigError(f"unknown dataset format {fmt!r}")
    if max_examples is not None and max_examples < 1:
        raise ConfigError("max_examples must be >= 1")

    raw = path.read_bytes()
    # Split on LF; a trailing newline yields one empty trailing chunk to drop.
    chunks = raw.split(b"\n")
    if chunks and chunks[-1] == b"":
        chunks.pop()
    if not chunks:
        raise DatasetFormatError(f"{path}: file is empty")

    if max_examples is not None:
        chunks = chunks[:max_examples]

    examples = []
    mode = fmt
    for lineno, data in enumerate(chunks, start=1):
        data = data.rstrip(b"\r")
        line = _decode_line(data, lineno, str(path))
        if mode == "auto":
            stripped = line.lstrip()
            mode = "jsonl" if stripped.startswith("{") else "text"
        text = _parse_jsonl_line(line, lineno, str(path)) if mode == "jsonl" else line
        text = normalize_text(text)
        if not text:
            raise DatasetFormatError(f"{path}:{lineno}: empty text")
        examples.append(Example(text=text, index=lineno - 1))

    return ExampleDataset(
        name=name if name is not None else path.stem,
        examples=tuple(examples),
        source_path=str(path),
    )


def save_dataset(dataset: ExampleDataset, path: str | Path) -> None:
    """Emit the normalized dataset as JSON-lines; load(save(d)) is the identity."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        for example in dataset.examples:
            fh.write(json.dumps({"text": example.text}, ensure_ascii=False))
            fh.write("\n")


def seq(examples: Iterable[Example] | Iterable[str]) -> str:
    """Concatenate example texts with single newlines, no trailing newline."""
    texts = [e.text if isinstance(e, Example) else e for e in examples]
    if not texts:
        raise ValueError("seq of an empty example list")
    for t in texts:
        if not t or "\n" in t:
            raise ValueError("seq requires non-empty, newline-free example texts")
    return "\n".join(texts)


def make_shard_plan(n: int, r: int) -> ShardPlan:
    """Contiguous order-preserving partition of n examples into r shards.

    The first n mod r shards get one extra example.  Every shard must hold at
    least 2 examples (a singleton shard has only the identity permutation and
    contributes a degenerate zero statistic), hence the n >= 2r requirement.
    """
    if r < 2:
        raise ConfigError(f"num_shards={r}: the t-test needs at least 2 shards")
    if n < 2 * r:
        raise ConfigError(
            f"{n} examples cannot fill {r} shards with >= 2 examples each; "
            f"lower num_shards to at most {n // 2}"
        )
    base, extra = divmod(n, r)
    boundaries = []
    start = 0
    for i in range(r):
        size = base + (1 if i < extra else 0)
        boundaries.append((start, start + size))
        start += size
    return ShardPlan(num_examples=n, num_shards=r, boundaries=tuple(boundaries))


def shard_examples(dataset: ExampleDataset, plan: ShardPlan) -> list[tuple[Example, ...]]:
    if plan.num_examples != len(dataset):
        raise ConfigError("shard plan was built for a different dataset size")
    return [dataset.examples[start:end] for start, end in plan.boundaries]


def sample_permutation(
    k: int, master_seed: int, shard_index: int, permutation_index: int
) -> Permutation:
    """Uniform permutation of range(k) from the seeded counter stream.

    Fisher-Yates over the (master_seed, shard_index, permutation_index)
    stream; the identity permutation is not excluded.  Same lineage, same
    mapping, independent of call order or threading.
    """
    if k < 2:
        raise ConfigError(f"cannot permute {k} element(s); need k >= 2")
    rng = CounterRng(master_seed, lane=shard_index, index=permutation_index)
    mapping = tuple(rng.shuffle_indices(k))
    return Permutation(
        mapping=mapping,
        seed_lineage=SeedLineage(master_seed, shard_index, permutation_index),
    )
