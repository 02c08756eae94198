"""Strided scoring of sequences longer than an oracle's context window.

This is the normative algorithm every bounded-context adapter must
implement; the core ships this reference over abstract unit sequences (bytes
in the built-in tests, tokens inside adapters).

With context length C and stride s = floor(C/2): window 0 covers units
[0, min(C, L)) and scores all of them; window j >= 1 starts at j*s, covers at
most C units, and scores only its last C - s = ceil(C/2) unit slots, i.e.
units [j*s + (C-s), min(j*s + C, L)).  The scored ranges tile [0, L) exactly:
every unit is scored once, and every unit after the first window sees at
least ceil(C/2) units of context.
"""

from __future__ import annotations

from typing import Callable, Sequence

from .errors import ConfigError

# window_scorer(window, score_from) must return the sum of per-unit
# conditional log-probs for window positions >= score_from, with each unit
# conditioned only on the preceding units of that window.
WindowScorer = Callable[[Sequence, int], float]


def strided_log_likelihood(window_scorer: WindowScorer, units: Sequence,
                           context_length: int) -> float:
    if context_length < 2:
        raise ConfigError(f"context_length must be >= 2, got {context_length}")
    length = len(units)
    if length == 0:
        raise ValueError("cannot score an empty unit sequence")
    if length <= context_length:
        return window_scorer(units, 0)
    stride = context_length // 2
    keep = context_length - stride  # scored slots per later window
    total = window_scorer(units[:context_length], 0)
    j = 1
    while j * stride + keep < length:
        start = j * stride
        end = min(start + context_length, length)
        total += window_scorer(units[start:end], keep)
        j += 1
    return total


def scored_ranges(length: int, context_length: int) -> list[tuple[int, int]]:
    """The (start, end) unit ranges each window scores; used by partition tests."""
    if context_length < 2:
        raise ConfigError(f"context_length must be >= 2, got {context_length}")
    if length <= context_length:
        return [(0, length)]
    stride = context_length // 2
    keep = context_length - stride
    ranges = [(0, context_length)]
    j = 1
    while j * stride + keep < length:
        ranges.append((j * stride + keep, min(j * stride + context_length, length)))
        j += 1
    return ranges
