"""Word- and utterance-level confidences from token scores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .align import Alignment, levenshtein_align, targets_from_alignment, word_spans
from .dataio import TokenRecord

__all__ = [
    "WordConfidence",
    "word_confidences",
    "utterance_confidence",
    "word_targets",
]


@dataclass(frozen=True)
class WordConfidence:
    word: str
    confidence: float
    token_span: tuple[int, int]  # half-open


def _scores(tokens: Sequence[TokenRecord], scorer: str) -> np.ndarray:
    return np.array([t.score(scorer) for t in tokens], dtype=np.float64)


def word_confidences(tokens: Sequence[TokenRecord], scorer: str = "softmax",
                     scores: Sequence[float] | None = None) -> list[WordConfidence]:
    """Average token scores within each word.

    ``scores`` overrides the per-token field picked by ``scorer``.
    """
    s = _scores(tokens, scorer) if scores is None else np.asarray(scores, dtype=np.float64)
    if len(s) != len(tokens):
        raise ValueError("one score per token is required")
    out = []
    for start, end in word_spans([t.word_begin for t in tokens]):
        word = "".join(t.piece for t in tokens[start:end])
        out.append(WordConfidence(word, float(np.mean(s[start:end])), (start, end)))
    return out


def utterance_confidence(tokens: Sequence[TokenRecord], scorer: str = "softmax",
                         by: str = "token") -> float:
    """Mean token score (``by="token"``) or mean word score (``by="word"``)."""
    if len(tokens) == 0:
        raise ValueError("empty hypothesis has no utterance confidence")
    if by == "token":
        return float(np.mean(_scores(tokens, scorer)))
    if by == "word":
        return float(np.mean([w.confidence for w in word_confidences(tokens, scorer)]))
    raise ValueError(f"unknown aggregation {by!r}")


def word_targets(alignment: Alignment | None = None, *, ref_words: Sequence[str] | None = None,
                 hyp_words: Sequence[str] | None = None) -> np.ndarray:
    """Correctness of each hypothesis word: 1 if matched, 0 otherwise.

    Either pass a word-level alignment, or the word sequences to align.
    """
    if alignment is None:
        if ref_words is None or hyp_words is None:
            raise ValueError("need an alignment or both word sequences")
        alignment = levenshtein_align(ref_words, hyp_words)
    hyp_len = sum(op.hyp_index is not None for op in alignment.ops)
    return targets_from_alignment(alignment, hyp_len)
