"""Corpus, model and curve files.

A corpus is a JSON-lines file.  The first line is a header object::

    {"feature_dim": 16, "has_lm_feature": false, "vocabulary": "..."}

and every following line holds one utterance::

    {"utt_id": "u0001",
     "reference": [{"piece": "he", "word_begin": true}, ...],
     "nbest": [{"total_logp": -3.2,
                "tokens": [{"piece": "he", "word_begin": true,
                            "softmax_p": 0.93, "lm_logp": -1.2,
                            "features": [0.1, ...]}, ...]}, ...]}

Optional token fields ``lm_logp``, ``cem_p`` and ``oracle`` are omitted when
absent.  Floats are written with ``repr`` so a write/read/write cycle is
byte-identical.
"""

from __future__ import annotations

import contextlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "CorpusError",
    "TokenRecord",
    "RefToken",
    "Hypothesis",
    "Utterance",
    "CorpusHeader",
    "read_corpus",
    "write_corpus",
    "write_curve",
    "read_curve",
    "atomic_write",
]


class CorpusError(ValueError):
    """Raised for malformed or invariant-violating corpus content."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


@dataclass(eq=False)
class TokenRecord:
    piece: str
    word_begin: bool
    softmax_p: float
    features: np.ndarray
    lm_logp: float | None = None
    cem_p: float | None = None
    # generation-time correctness label, only present in synthetic corpora
    oracle: int | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 1:
            raise CorpusError("features must be a flat vector", field="features")
        if not (0.0 <= self.softmax_p <= 1.0):
            raise CorpusError(f"softmax_p={self.softmax_p!r} outside [0, 1]",
                              field="softmax_p")
        if self.lm_logp is not None and not (self.lm_logp <= 0.0):
            raise CorpusError(f"lm_logp={self.lm_logp!r} must be <= 0",
                              field="lm_logp")
        if self.cem_p is not None and not (0.0 <= self.cem_p <= 1.0):
            raise CorpusError(f"cem_p={self.cem_p!r} outside [0, 1]", field="cem_p")
        if self.oracle is not None and self.oracle not in (0, 1):
            raise CorpusError(f"oracle={self.oracle!r} must be 0 or 1", field="oracle")

    def __eq__(self, other):
        if not isinstance(other, TokenRecord):
            return NotImplemented
        return (self.piece == other.piece
                and self.word_begin == other.word_begin
                and self.softmax_p == other.softmax_p
                and self.lm_logp == other.lm_logp
                and self.cem_p == other.cem_p
                and self.oracle == other.oracle
                and np.array_equal(self.features, other.features))

    def score(self, scorer: str) -> float:
        """Return ``softmax_p`` or ``cem_p`` depending on ``scorer``."""
        if scorer == "softmax":
            return self.softmax_p
        if scorer == "cem":
            if self.cem_p is None:
                raise CorpusError("token has no cem_p; score the corpus first",
                                  field="cem_p")
            return self.cem_p
        raise ValueError(f"unknown scorer {scorer!r}")


@dataclass(frozen=True)
class RefToken:
    piece: str
    word_begin: bool


@dataclass(eq=True)
class Hypothesis:
    tokens: list[TokenRecord]
    total_logp: float | None = None

    def __post_init__(self):
        if not self.tokens:
            raise CorpusError("hypothesis has no tokens", field="tokens")
        if not self.tokens[0].word_begin:
            raise CorpusError("first token must have word_begin=true",
                              field="word_begin")

    @property
    def pieces(self) -> list[str]:
        return [t.piece for t in self.tokens]


@dataclass(eq=True)
class Utterance:
    utt_id: str
    reference: list[RefToken]
    nbest: list[Hypothesis] = field(default_factory=list)

    @property
    def top1(self) -> Hypothesis:
        if not self.nbest:
            raise CorpusError(f"utterance {self.utt_id!r} has an empty n-best list",
                              field="nbest")
        return self.nbest[0]


@dataclass(frozen=True)
class CorpusHeader:
    feature_dim: int
    has_lm_feature: bool = False
    vocabulary: str = ""

    def __post_init__(self):
        if not isinstance(self.feature_dim, int) or self.feature_dim < 1:
            raise CorpusError(f"feature_dim={self.feature_dim!r} must be a positive integer",
                              field="feature_dim")


# -- serialisation ---------------------------------------------------------

def _token_to_dict(tok: TokenRecord) -> dict:
    d = {"piece": tok.piece, "word_begin": tok.word_begin, "softmax_p": tok.softmax_p}
    if tok.lm_logp is not None:
        d["lm_logp"] = tok.lm_logp
    if tok.cem_p is not None:
        d["cem_p"] = tok.cem_p
    if tok.oracle is not None:
        d["oracle"] = tok.oracle
    d["features"] = tok.features.tolist()
    return d


def _utterance_to_dict(utt: Utterance) -> dict:
    nbest = []
    for hyp in utt.nbest:
        h = {}
        if hyp.total_logp is not None:
            h["total_logp"] = hyp.total_logp
        h["tokens"] = [_token_to_dict(t) for t in hyp.tokens]
        nbest.append(h)
    return {
        "utt_id": utt.utt_id,
        "reference": [{"piece": r.piece, "word_begin": r.word_begin} for r in utt.reference],
        "nbest": nbest,
    }


def _header_to_dict(header: CorpusHeader) -> dict:
    d = {"feature_dim": header.feature_dim, "has_lm_feature": header.has_lm_feature}
    if header.vocabulary:
        d["vocabulary"] = header.vocabulary
    return d


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, allow_nan=False, separators=(", ", ": "))


@contextlib.contextmanager
def atomic_write(path, mode="w"):
    """Open a temporary sibling of ``path`` and move it into place on success."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, mode, encoding=None if "b" in mode else "utf-8") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_corpus(header: CorpusHeader, utterances: Iterable[Utterance], path) -> None:
    """Write a corpus file; the file only appears once fully written."""
    with atomic_write(path) as fh:
        fh.write(_dumps(_header_to_dict(header)) + "\n")
        for utt in utterances:
            for hyp in utt.nbest:
                for tok in hyp.tokens:
                    if tok.features.shape[0] != header.feature_dim:
                        raise CorpusError(
                            f"utterance {utt.utt_id!r}: feature length "
                            f"{tok.features.shape[0]} != feature_dim {header.feature_dim}",
                            field="features")
            fh.write(_dumps(_utterance_to_dict(utt)) + "\n")


# -- parsing ---------------------------------------------------------------

def _require(obj: dict, key: str, kind, line: int, where: str):
    if not isinstance(obj, dict):
        raise CorpusError(f"{where} must be an object", line=line)
    if key not in obj:
        raise CorpusError(f"missing in {where}", line=line, field=key)
    value = obj[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise CorpusError(f"expected a number in {where}", line=line, field=key)
        value = float(value)
        if not math.isfinite(value):
            raise CorpusError(f"non-finite number in {where}", line=line, field=key)
        return value
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise CorpusError(f"expected {kind.__name__} in {where}", line=line, field=key)
    return value


def _optional_float(obj: dict, key: str, line: int, where: str):
    if key not in obj or obj[key] is None:
        return None
    return _require(obj, key, float, line, where)


def _parse_header(text: str, line: int) -> CorpusHeader:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"header is not valid JSON ({exc.msg})", line=line) from None
    dim = _require(obj, "feature_dim", int, line, "header")
    has_lm = _require(obj, "has_lm_feature", bool, line, "header")
    vocab = obj.get("vocabulary", "")
    if not isinstance(vocab, str):
        raise CorpusError("expected str in header", line=line, field="vocabulary")
    try:
        return CorpusHeader(dim, has_lm, vocab)
    except CorpusError as exc:
        raise CorpusError(str(exc), line=line, field="feature_dim") from None


def _parse_token(obj, header: CorpusHeader, line: int, where: str) -> TokenRecord:
    piece = _require(obj, "piece", str, line, where)
    word_begin = _require(obj, "word_begin", bool, line, where)
    softmax_p = _require(obj, "softmax_p", float, line, where)
    feats = _require(obj, "features", list, line, where)
    if len(feats) != header.feature_dim:
        raise CorpusError(f"{where}: feature length {len(feats)} != feature_dim "
                          f"{header.feature_dim}", line=line, field="features")
    if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in feats):
        raise CorpusError(f"{where}: features must be numbers", line=line, field="features")
    features = np.array(feats, dtype=np.float64)
    if not np.all(np.isfinite(features)):
        raise CorpusError(f"{where}: non-finite feature", line=line, field="features")
    lm_logp = _optional_float(obj, "lm_logp", line, where)
    if header.has_lm_feature and lm_logp is None:
        raise CorpusError(f"{where}: header declares an LM feature but lm_logp is missing",
                          line=line, field="lm_logp")
    cem_p = _optional_float(obj, "cem_p", line, where)
    oracle = obj.get("oracle")
    if oracle is not None and (isinstance(oracle, bool) or oracle not in (0, 1)):
        raise CorpusError(f"{where}: oracle must be 0 or 1", line=line, field="oracle")
    try:
        return TokenRecord(piece, word_begin, softmax_p, features,
                           lm_logp=lm_logp, cem_p=cem_p, oracle=oracle)
    except CorpusError as exc:
        raise CorpusError(f"{where}: {exc}", line=line, field=exc.field) from None


def _parse_utterance(text: str, header: CorpusHeader, line: int) -> Utterance:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"invalid JSON ({exc.msg})", line=line) from None
    utt_id = _require(obj, "utt_id", str, line, "utterance")
    reference = []
    for i, r in enumerate(_require(obj, "reference", list, line, "utterance")):
        where = f"reference[{i}]"
        reference.append(RefToken(_require(r, "piece", str, line, where),
                                  _require(r, "word_begin", bool, line, where)))
    if reference and not reference[0].word_begin:
        raise CorpusError("first reference token must have word_begin=true",
                          line=line, field="word_begin")
    nbest = []
    for h_idx, h in enumerate(_require(obj, "nbest", list, line, "utterance")):
        where = f"nbest[{h_idx}]"
        total_logp = _optional_float(h, "total_logp", line, where)
        tokens = [_parse_token(t, header, line, f"{where}.tokens[{t_idx}]")
                  for t_idx, t in enumerate(_require(h, "tokens", list, line, where))]
        try:
            nbest.append(Hypothesis(tokens, total_logp))
        except CorpusError as exc:
            raise CorpusError(f"{where}: {exc}", line=line, field=exc.field) from None
    return Utterance(utt_id, reference, nbest)


def iter_corpus(path) -> tuple[CorpusHeader, Iterator[Utterance]]:
    """Streaming variant of :func:`read_corpus`."""
    fh = open(path, encoding="utf-8")
    first = fh.readline()
    if not first.strip():
        fh.close()
        raise CorpusError("missing header line", line=1)
    try:
        header = _parse_header(first, 1)
    except CorpusError:
        fh.close()
        raise

    def gen():
        seen = set()
        with fh:
            for lineno, text in enumerate(fh, start=2):
                if not text.strip():
                    continue
                utt = _parse_utterance(text, header, lineno)
                if utt.utt_id in seen:
                    raise CorpusError(f"duplicate utt_id {utt.utt_id!r}",
                                      line=lineno, field="utt_id")
                seen.add(utt.utt_id)
                yield utt

    return header, gen()


def read_corpus(path) -> tuple[CorpusHeader, list[Utterance]]:
    header, utts = iter_corpus(path)
    return header, list(utts)


# -- curves ----------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    # repr is the shortest string that round-trips, so precision is never lost
    return repr(float(value))


def write_curve(points: Sequence[Sequence], path, columns: Sequence[str] = ("x", "y", "n")) -> None:
    """Write curve points as comma-separated text under a header line.

    The default layout is ``x,y,n``.  Pass ``columns`` for wider tables, e.g.
    ``("threshold", "precision", "recall", "tp", "fp", "fn")``.
    """
    columns = tuple(columns)
    prev = None
    for p in points:
        if len(p) != len(columns):
            raise ValueError(f"point {p!r} does not match columns {columns}")
        if prev is not None and p[0] < prev:
            raise ValueError("curve points must be ordered by their first column")
        prev = p[0]
    with atomic_write(path) as fh:
        fh.write(",".join(columns) + "\n")
        for p in points:
            fh.write(",".join(_fmt(v) for v in p) + "\n")


def read_curve(path) -> tuple[list[str], list[tuple]]:
    """Parse a file written by :func:`write_curve`.

    Integer-looking fields come back as ``int``, everything else as ``float``.
    """
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty curve file")
    columns = lines[0].split(",")
    rows = []
    for lineno, text in enumerate(lines[1:], start=2):
        fields = text.split(",")
        if len(fields) != len(columns):
            raise ValueError(f"{path}:{lineno}: expected {len(columns)} fields")
        rows.append(tuple(int(f) if f.lstrip("-").isdigit() else float(f) for f in fields))
    return columns, rows
