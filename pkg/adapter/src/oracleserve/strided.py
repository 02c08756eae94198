"""Strided scoring over token indices for bounded-context models.

With context length C and stride s = C // 2: window 0 covers tokens
[0, min(C, L)) and scores all of its slots; window j >= 1 starts at j*s,
covers at most C tokens, and scores only its final C - s slots, i.e. tokens
[j*s + (C - s), min(j*s + C, L)).  The scored ranges tile [0, L): every token
is scored exactly once and every token after the first window has at least
ceil(C/2) tokens of context.  Whether the very first token of the sequence
is scorable at all is the backend's business (reported in meta as
scores_first_token), not this tiling's.
"""

from __future__ import annotations

from typing import Callable, Sequence

# window_scorer(window_tokens, score_from) -> sum of conditional log-probs for
# window positions >= score_from, conditioned only within the window.
WindowScorer = Callable[[Sequence[int], int], float]


def strided_score(window_scorer: WindowScorer, tokens: Sequence[int],
                  context_length: int) -> float:
    if context_length < 2:
        raise ValueError(f"context_length must be >= 2, got {context_length}")
    length = len(tokens)
    if length == 0:
        raise ValueError("cannot score an empty token sequence")
    if length <= context_length:
        return window_scorer(tokens, 0)
    stride = context_length // 2
    keep = context_length - stride
    total = window_scorer(tokens[:context_length], 0)
    j = 1
    while j * stride + keep < length:
        start = j * stride
        end = min(start + context_length, length)
        total += window_scorer(tokens[start:end], keep)
        j += 1
    return total
