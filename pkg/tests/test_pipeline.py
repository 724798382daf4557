from dataclasses import replace

import numpy as np
import pytest

from confest.dataio import Hypothesis, RefToken, TokenRecord, Utterance
from confest.pipeline import (
    DEFAULT_THRESHOLDS,
    FilterCurve,
    corpus_wer,
    evaluate,
    filter_curve,
    scored_set,
    spike_score,
    top1_wer,
)


def utt(utt_id, ref, hyp, scores=None):
    scores = scores or [0.5] * len(hyp)
    return Utterance(utt_id, [RefToken(w, True) for w in ref],
                     [Hypothesis([TokenRecord(w, True, s, [0.0]) for w, s in zip(hyp, scores)])])


def oracle_scored(utts):
    """Copy of ``utts`` whose softmax and CEM scores equal the alignment targets."""
    out = []
    for u in utts:
        targets = scored_set([u], "softmax", "token").targets
        toks = [replace(t, softmax_p=float(c), cem_p=float(c)) for t, c in zip(u.top1.tokens, targets)]
        out.append(replace(u, nbest=[Hypothesis(toks, u.top1.total_logp)]))
    return out


def test_thresholds():
    assert DEFAULT_THRESHOLDS[:3] == (0.0, 0.05, 0.1)
    assert DEFAULT_THRESHOLDS[-1] == 0.95 and len(DEFAULT_THRESHOLDS) == 20


def test_wer_counts():
    b = top1_wer(utt("a", ["x", "y", "z"], ["x", "q"]))
    assert (b.substitutions, b.deletions, b.insertions, b.ref_len) == (1, 1, 0, 3)
    assert b.wer == pytest.approx(2 / 3)


def test_scored_set_uses_top1(small_corpus):
    _, utts = small_corpus
    s = scored_set(utts, "softmax", "token")
    assert len(s) == sum(len(u.top1.tokens) for u in utts)


class TestEvaluate:
    def test_perfect_scorer(self, small_corpus):
        _, utts = small_corpus
        perfect = oracle_scored(utts)
        report = evaluate(perfect[:20], perfect[20:], levels=("token",))
        for scorer in ("softmax", "cem"):
            row = report.get(scorer, "token")
            assert row.auc == 1.0
            assert row.nce == pytest.approx(1.0, abs=1e-9)

    def test_constant_scorer_matches_base_rate(self, small_corpus):
        _, utts = small_corpus
        flat = []
        for u in utts:
            toks = [replace(t, softmax_p=0.5, cem_p=0.5) for t in u.top1.tokens]
            flat.append(replace(u, nbest=[Hypothesis(toks)]))
        report = evaluate(flat[:20], flat[20:])
        for level in ("token", "word"):
            soft, cem = report.get("softmax", level), report.get("cem", level)
            assert soft.auc == cem.auc == pytest.approx(soft.accuracy)

    def test_calibration_keeps_auc(self, small_corpus):
        _, utts = small_corpus
        report = evaluate(utts[:20], utts[20:], scorers=("softmax",))
        for row in report.rows:
            assert abs(row.auc - row.auc_calibrated) <= 1e-9

    def test_overlapping_ids(self, small_corpus):
        _, utts = small_corpus
        with pytest.raises(ValueError, match="share"):
            evaluate(utts[:20], utts[10:30], scorers=("softmax",))

    def test_report_serialises(self, small_corpus, tmp_path):
        import json
        from confest.pipeline import write_report
        _, utts = small_corpus
        report = evaluate(utts[:20], utts[20:], scorers=("softmax",))
        write_report(report, tmp_path / "out")
        data = json.loads((tmp_path / "out" / "report.json").read_text())
        assert data["wer"] == report.wer and len(data["rows"]) == 2
        assert (tmp_path / "out" / "report.csv").read_text().startswith("scorer,level,")


class TestFilterCurve:
    def test_threshold_zero_is_corpus_wer(self, small_corpus):
        _, utts = small_corpus
        fc = filter_curve(utts)
        assert fc.points[0] == (0.0, corpus_wer(utts), len(utts))

    def test_counts_non_increasing(self, small_corpus):
        _, utts = small_corpus
        counts = [p[2] for p in filter_curve(utts).points]
        assert all(b <= a for a, b in zip(counts, counts[1:]))

    def test_high_threshold_drops_point(self, small_corpus):
        _, utts = small_corpus
        fc = filter_curve(utts, [0.0, 0.999999])
        top = max(np.mean([t.softmax_p for t in u.top1.tokens]) for u in utts)
        assert top < 0.999999 and len(fc.points) == 1

    def test_toy(self):
        a = utt("a", ["x", "y"], ["x", "y"], [0.9, 0.7])
        b = utt("b", ["x", "y"], ["x", "q"], [0.3, 0.3])
        fc = filter_curve([a, b], [0.0, 0.5])
        assert fc.points == ((0.0, 0.25, 2), (0.5, 0.0, 1))

    def test_explicit_confidences(self):
        a = utt("a", ["x"], ["x"])
        b = utt("b", ["x"], ["q"])
        assert filter_curve([a, b], [0.0, 0.5], confidences=[0.2, 0.8]).points == (
            (0.0, 0.5, 2), (0.5, 1.0, 1))
        with pytest.raises(ValueError):
            filter_curve([a, b], [0.0], confidences=[0.2])

    def test_descending_thresholds(self):
        with pytest.raises(ValueError):
            filter_curve([utt("a", ["x"], ["x"])], [0.5, 0.1])


class TestSpike:
    def test_monotone(self):
        assert spike_score(FilterCurve(((0.0, 0.3, 5), (0.5, 0.2, 3), (0.9, 0.0, 1)))) == 0.0

    def test_spike(self):
        fc = FilterCurve(((0.0, 0.10, 5), (0.5, 0.05, 3), (0.9, 0.20, 1)))
        assert spike_score(fc) == pytest.approx(0.15, abs=1e-15)

    def test_too_short(self):
        with pytest.raises(ValueError):
            spike_score(FilterCurve(((0.0, 0.1, 1),)))
