"""Synthetic n-best corpora with known ground truth.

References are random word-piece sequences.  Each hypothesis is the
reference with independent per-position substitutions, deletions and
insertions.  Every emitted token carries

* ``softmax_p``: drawn high for correct tokens; for erroneous tokens drawn
  from [0.9, 1.0] with probability ``overconf_rate`` (the overconfidence
  pathology) and low otherwise;
* ``features``: ``w * s * u + (1 - w) * noise`` where ``u`` is a fixed unit
  direction, ``s`` is +1 for correct and -1 for erroneous tokens and ``w``
  is ``feature_informativeness``;
* ``oracle``: the generation-time correctness label.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .align import levenshtein_align, targets_from_alignment
from .dataio import CorpusError, CorpusHeader, Hypothesis, RefToken, TokenRecord, Utterance

__all__ = ["SynthConfig", "generate", "oracle_targets", "load_config"]


@dataclass(frozen=True)
class SynthConfig:
    num_utterances: int = 500
    mean_utt_len: int = 12
    vocab_size: int = 200
    sub_rate: float = 0.10
    ins_rate: float = 0.02
    del_rate: float = 0.02
    overconf_rate: float = 0.5
    feature_dim: int = 16
    feature_informativeness: float = 0.8
    nbest_width: int = 8
    word_begin_rate: float = 0.6
    with_lm: bool = False
    seed: int = 0
    # seeds the feature direction; corpora meant to share one recogniser
    # must share this value
    feature_seed: int = 0
    utt_prefix: str = "utt"

    def __post_init__(self):
        for name in ("sub_rate", "ins_rate", "del_rate", "overconf_rate",
                     "feature_informativeness", "word_begin_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v!r} must lie in [0, 1]")
        if self.sub_rate + self.del_rate > 1.0:
            raise ValueError("sub_rate + del_rate must not exceed 1")
        for name in ("num_utterances", "mean_utt_len", "feature_dim", "nbest_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2 so substitutions exist")


def load_config(path, **overrides) -> SynthConfig:
    """Read a JSON config file; unknown keys are rejected."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    known = {f.name for f in fields(SynthConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown synth config keys: {sorted(unknown)}")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return SynthConfig(**raw)


def _softmax_p(rng, correct: bool, cfg: SynthConfig) -> float:
    if correct:
        return float(1.0 - 0.4 * rng.beta(1.0, 4.0))
    if rng.random() < cfg.overconf_rate:
        return float(rng.uniform(0.9, 1.0))
    return float(rng.uniform(0.05, 0.55))


def _lm_logp(rng, correct: bool) -> float:
    p = rng.uniform(0.3, 1.0) if correct else rng.uniform(0.01, 0.6)
    return float(np.log(p))


def generate(cfg: SynthConfig) -> tuple[CorpusHeader, list[Utterance]]:
    """Generate a corpus; identical configs give identical corpora."""
    rng = np.random.default_rng(cfg.seed)
    vocab = [f"p{k}" for k in range(cfg.vocab_size)]
    direction = np.random.default_rng(cfg.feature_seed).standard_normal(cfg.feature_dim)
    direction /= np.linalg.norm(direction)
    w = cfg.feature_informativeness

    def token(piece, begin, correct):
        noise = rng.standard_normal(cfg.feature_dim)
        feats = w * (1.0 if correct else -1.0) * direction + (1.0 - w) * noise
        return TokenRecord(
            piece, begin, _softmax_p(rng, correct, cfg), feats,
            lm_logp=_lm_logp(rng, correct) if cfg.with_lm else None,
            oracle=int(correct))

    def other(piece):
        k = int(rng.integers(cfg.vocab_size - 1))
        cand = vocab[k]
        return vocab[-1] if cand == piece else cand

    width = len(str(cfg.num_utterances))
    utterances = []
    for u in range(cfg.num_utterances):
        n = max(1, int(rng.poisson(cfg.mean_utt_len)))
        pieces = [vocab[k] for k in rng.integers(cfg.vocab_size, size=n)]
        flags = [True] + [bool(f) for f in rng.random(n - 1) < cfg.word_begin_rate]
        reference = [RefToken(p, f) for p, f in zip(pieces, flags)]

        nbest = []
        while len(nbest) < cfg.nbest_width:
            toks = []
            for piece, flag in zip(pieces, flags):
                r = rng.random()
                if r < cfg.del_rate:
                    pass
                elif r < cfg.del_rate + cfg.sub_rate:
                    toks.append(token(other(piece), flag, False))
                else:
                    toks.append(token(piece, flag, True))
                if rng.random() < cfg.ins_rate:
                    toks.append(token(vocab[int(rng.integers(cfg.vocab_size))],
                                      bool(rng.random() < cfg.word_begin_rate), False))
            if not toks:
                continue
            if not toks[0].word_begin:
                toks[0].word_begin = True
            total = float(np.sum(np.log([t.softmax_p for t in toks])))
            nbest.append(Hypothesis(toks, total))
        # beam order: best score first
        nbest.sort(key=lambda h: -h.total_logp)
        utterances.append(Utterance(f"{cfg.utt_prefix}{u:0{width}d}", reference, nbest))

    note = f"synthetic vocabulary p0..p{cfg.vocab_size - 1}; config {json.dumps(asdict(cfg), sort_keys=True)}"
    header = CorpusHeader(cfg.feature_dim, cfg.with_lm, note)
    return header, utterances


def oracle_targets(utterances) -> list[list[np.ndarray]]:
    """Generation-time correctness labels per utterance and hypothesis."""
    out = []
    for utt in utterances:
        per_hyp = []
        for hyp in utt.nbest:
            labels = [t.oracle for t in hyp.tokens]
            if any(v is None for v in labels):
                raise CorpusError(f"utterance {utt.utt_id!r} lacks generation metadata",
                                  field="oracle")
            per_hyp.append(np.array(labels, dtype=np.int64))
        out.append(per_hyp)
    return out


def alignment_agreement(utterances) -> float:
    """Fraction of hypothesis tokens whose alignment target equals the oracle label."""
    agree = total = 0
    for utt, per_hyp in zip(utterances, oracle_targets(utterances)):
        ref = [r.piece for r in utt.reference]
        for hyp, labels in zip(utt.nbest, per_hyp):
            got = targets_from_alignment(levenshtein_align(ref, hyp.pieces), len(hyp.tokens))
            agree += int((got == labels).sum())
            total += labels.size
    return agree / total
