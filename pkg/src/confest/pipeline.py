"""End-to-end evaluation: softmax vs CEM scores, P-R curves, filtering curves."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .aggregate import utterance_confidence, word_confidences
from .align import WerBreakdown, levenshtein_align, targets_from_alignment, tokens_to_words
from .calibrate import DEFAULT_BINS, DEFAULT_STRICT_MIX, Pwlm, apply_pwlm, fit_pwlm
from .dataio import Utterance, atomic_write
from .metrics import ScoredSet, auc, nce, pr_curve

__all__ = [
    "SCORERS",
    "LEVELS",
    "DEFAULT_THRESHOLDS",
    "LevelReport",
    "EvalReport",
    "FilterCurve",
    "top1_wer",
    "corpus_wer",
    "scored_set",
    "evaluate",
    "filter_curve",
    "spike_score",
    "write_report",
]

SCORERS = ("softmax", "cem")
LEVELS = ("token", "word")
DEFAULT_THRESHOLDS = tuple(np.round(np.arange(0.0, 1.0, 0.05), 2).tolist())


def _ref_words(utt: Utterance) -> list[str]:
    return tokens_to_words([(r.piece, r.word_begin) for r in utt.reference])


def _hyp_words(utt: Utterance) -> list[str]:
    return tokens_to_words([(t.piece, t.word_begin) for t in utt.top1.tokens])


def top1_wer(utt: Utterance) -> WerBreakdown:
    """Word-level error counts of the best hypothesis."""
    ref = _ref_words(utt)
    if not ref:
        raise ValueError(f"utterance {utt.utt_id!r} has an empty reference")
    s, d, i = levenshtein_align(ref, _hyp_words(utt)).counts()
    return WerBreakdown(s, d, i, len(ref))


def corpus_wer(utterances: Sequence[Utterance]) -> float:
    """Pooled WER: total errors over total reference words."""
    errors = words = 0
    for utt in utterances:
        b = top1_wer(utt)
        errors += b.errors
        words += b.ref_len
    if words == 0:
        raise ValueError("corpus has no reference words")
    return errors / words


def scored_set(utterances: Sequence[Utterance], scorer: str, level: str) -> ScoredSet:
    """Targets and confidences of every top-1 token (or word) in a corpus."""
    if scorer not in SCORERS or level not in LEVELS:
        raise ValueError(f"unknown scorer/level {scorer!r}/{level!r}")
    targets, confs = [], []
    for utt in utterances:
        hyp = utt.top1
        if level == "token":
            ali = levenshtein_align([r.piece for r in utt.reference], hyp.pieces)
            targets.append(targets_from_alignment(ali, len(hyp.tokens)))
            confs.append([t.score(scorer) for t in hyp.tokens])
        else:
            words = word_confidences(hyp.tokens, scorer)
            ali = levenshtein_align(_ref_words(utt), [w.word for w in words])
            targets.append(targets_from_alignment(ali, len(words)))
            confs.append([w.confidence for w in words])
    return ScoredSet(np.concatenate(targets), np.concatenate([np.asarray(c, dtype=np.float64)
                                                              for c in confs]))


@dataclass(frozen=True)
class LevelReport:
    scorer: str
    level: str
    num_items: int
    accuracy: float
    auc: float
    auc_calibrated: float
    nce: float
    nce_calibrated: float


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[LevelReport, ...]
    wer: float
    num_utterances: int

    def get(self, scorer: str, level: str) -> LevelReport:
        for r in self.rows:
            if r.scorer == scorer and r.level == level:
                return r
        raise KeyError((scorer, level))

    def to_dict(self) -> dict:
        return {"wer": self.wer, "num_utterances": self.num_utterances,
                "rows": [asdict(r) for r in self.rows]}

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(LevelReport.__dataclass_fields__)
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        for r in self.rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in asdict(r).values()])
        return buf.getvalue()


def evaluate(corpus: Sequence[Utterance], dev: Sequence[Utterance],
             scorers: Sequence[str] = SCORERS, levels: Sequence[str] = LEVELS,
             num_bins: int = DEFAULT_BINS, strict_mix: float = DEFAULT_STRICT_MIX,
             pwlms: dict | None = None) -> EvalReport:
    """Metrics for each scorer and level, before and after a dev-fitted PWLM.

    Only the top-1 hypothesis of each utterance is scored.  If ``pwlms`` is
    a dict, the fitted maps are stored in it under ``(scorer, level)``.
    """
    overlap = {u.utt_id for u in corpus} & {u.utt_id for u in dev}
    if overlap:
        raise ValueError(f"eval and dev corpora share utterance ids, e.g. {sorted(overlap)[0]!r}")
    rows = []
    for scorer in scorers:
        for level in levels:
            where = f"{scorer}/{level}"
            test = scored_set(corpus, scorer, level)
            held = scored_set(dev, scorer, level)
            m: Pwlm = fit_pwlm(held, num_bins, strict_mix)
            if pwlms is not None:
                pwlms[(scorer, level)] = m
            cal = ScoredSet(test.targets, apply_pwlm(m, test.confidences))
            if test.targets.sum() == 0:
                raise ValueError(f"{where}: no correct items in the eval corpus, P-R undefined")
            try:
                raw_nce = nce(test)
                cal_nce = nce(cal)
            except ValueError as exc:
                raise ValueError(f"{where}: {exc}") from None
            rows.append(LevelReport(scorer, level, len(test), float(test.targets.mean()),
                                    auc(pr_curve(test)), auc(pr_curve(cal)), raw_nce, cal_nce))
    return EvalReport(tuple(rows), corpus_wer(corpus), len(corpus))


@dataclass(frozen=True)
class FilterCurve:
    points: tuple[tuple[float, float, int], ...]  # (threshold, pooled WER, utterances)

    @property
    def wers(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])


def filter_curve(corpus: Sequence[Utterance], thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
                 scorer: str = "softmax", by: str = "token",
                 confidences: Sequence[float] | None = None) -> FilterCurve:
    """Pooled WER of the utterances whose confidence is >= each threshold.

    Utterance confidence is the mean top-1 token score (or mean word score
    with ``by="word"``) unless ``confidences`` supplies one per utterance.
    """
    if not corpus:
        raise ValueError("empty corpus")
    th = np.asarray(thresholds, dtype=np.float64)
    if th.ndim != 1 or (np.diff(th) < 0).any():
        raise ValueError("thresholds must be an ascending list")
    if confidences is None:
        conf = np.array([utterance_confidence(u.top1.tokens, scorer, by) for u in corpus])
    else:
        conf = np.asarray(confidences, dtype=np.float64)
        if conf.shape != (len(corpus),):
            raise ValueError("need one confidence per utterance")
    breakdowns = [top1_wer(u) for u in corpus]
    errors = np.array([b.errors for b in breakdowns])
    words = np.array([b.ref_len for b in breakdowns])
    points = []
    for t in th:
        keep = conf >= t
        n = int(keep.sum())
        if n == 0:
            continue
        points.append((float(t), int(errors[keep].sum()) / int(words[keep].sum()), n))
    return FilterCurve(tuple(points))


def spike_score(curve: FilterCurve) -> float:
    """Total upward movement of WER as the threshold rises; 0 when monotone."""
    if len(curve.points) < 2:
        raise ValueError("spike score needs at least two curve points")
    return float(np.maximum(np.diff(curve.wers), 0.0).sum())


def write_report(report: EvalReport, out_dir) -> None:
    """Write ``report.json`` and ``report.csv`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with atomic_write(out / "report.json") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    with atomic_write(out / "report.csv") as fh:
        fh.write(report.to_csv())
