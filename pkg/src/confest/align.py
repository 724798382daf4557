"""Levenshtein alignment, binary confidence targets and WER accounting."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Hashable, Sequence

import numpy as np

__all__ = [
    "Op",
    "AlignOp",
    "Alignment",
    "WerBreakdown",
    "levenshtein_align",
    "targets_from_alignment",
    "word_error_rate",
    "tokens_to_words",
]


class Op(str, Enum):
    MATCH = "match"
    SUBSTITUTE = "substitute"
    INSERT = "insert"
    DELETE = "delete"


@dataclass(frozen=True)
class AlignOp:
    kind: Op
    ref_index: int | None
    hyp_index: int | None


@dataclass(frozen=True)
class Alignment:
    ops: tuple[AlignOp, ...]
    distance: int

    def counts(self) -> tuple[int, int, int]:
        """Return ``(substitutions, deletions, insertions)``."""
        s = d = i = 0
        for op in self.ops:
            if op.kind is Op.SUBSTITUTE:
                s += 1
            elif op.kind is Op.DELETE:
                d += 1
            elif op.kind is Op.INSERT:
                i += 1
        return s, d, i


@dataclass(frozen=True)
class WerBreakdown:
    substitutions: int
    deletions: int
    insertions: int
    ref_len: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        if self.ref_len < 1:
            raise ValueError("WER undefined for an empty reference")
        return self.errors / self.ref_len


def levenshtein_align(ref: Sequence[Hashable], hyp: Sequence[Hashable]) -> Alignment:
    """Minimum unit-cost edit alignment of ``hyp`` against ``ref``.

    Ties in the backtrace are broken Match/Substitute first, then Delete,
    then Insert, so the result is deterministic.
    """
    n, m = len(ref), len(hyp)
    cost = np.empty((n + 1, m + 1), dtype=np.int64)
    cost[:, 0] = np.arange(n + 1)
    cost[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        r = ref[i - 1]
        prev = cost[i - 1].tolist()
        row = [i] * (m + 1)
        for j in range(1, m + 1):
            diag = prev[j - 1] + (0 if r == hyp[j - 1] else 1)
            up = prev[j] + 1
            left = row[j - 1] + 1
            row[j] = min(diag, up, left)
        cost[i] = row

    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        here = cost[i, j]
        if i > 0 and j > 0:
            same = ref[i - 1] == hyp[j - 1]
            if cost[i - 1, j - 1] + (0 if same else 1) == here:
                ops.append(AlignOp(Op.MATCH if same else Op.SUBSTITUTE, i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
        if i > 0 and cost[i - 1, j] + 1 == here:
            ops.append(AlignOp(Op.DELETE, i - 1, None))
            i -= 1
            continue
        ops.append(AlignOp(Op.INSERT, None, j - 1))
        j -= 1
    ops.reverse()
    return Alignment(tuple(ops), int(cost[n, m]))


def targets_from_alignment(alignment: Alignment, hyp_len: int) -> np.ndarray:
    """Binary correctness targets, one per hypothesis token.

    Matches give 1, substitutions and insertions give 0.  Deletions have no
    hypothesis token and contribute nothing.
    """
    targets = np.full(hyp_len, -1, dtype=np.int64)
    for op in alignment.ops:
        if op.hyp_index is None:
            continue
        if not 0 <= op.hyp_index < hyp_len:
            raise ValueError(f"alignment refers to hyp index {op.hyp_index}, "
                             f"but hyp_len is {hyp_len}")
        targets[op.hyp_index] = 1 if op.kind is Op.MATCH else 0
    if (targets < 0).any():
        raise ValueError(f"alignment does not cover all {hyp_len} hypothesis tokens")
    return targets


def word_error_rate(ref_words: Sequence[str], hyp_words: Sequence[str]) -> WerBreakdown:
    if len(ref_words) == 0:
        raise ValueError("empty reference: WER is undefined")
    s, d, i = levenshtein_align(ref_words, hyp_words).counts()
    return WerBreakdown(s, d, i, len(ref_words))


def tokens_to_words(pieces: Sequence[tuple[str, bool]]) -> list[str]:
    """Join word pieces into words using their word-begin flags.

    >>> tokens_to_words([("he", True), ("llo", False), ("you", True)])
    ['hello', 'you']
    """
    words: list[str] = []
    for k, (piece, begin) in enumerate(pieces):
        if begin:
            words.append(piece)
        elif k == 0:
            raise ValueError("first piece must start a word")
        else:
            words[-1] += piece
    return words


def word_spans(flags: Sequence[bool]) -> list[tuple[int, int]]:
    """Half-open token spans ``(start, end)`` of each word."""
    if len(flags) and not flags[0]:
        raise ValueError("first piece must start a word")
    starts = [k for k, f in enumerate(flags) if f]
    return list(zip(starts, starts[1:] + [len(flags)]))
