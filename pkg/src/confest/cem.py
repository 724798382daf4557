"""Confidence estimation module (CEM).

A small feed-forward head on top of a frozen recogniser::

    p = sigmoid(w2 . relu(W1 x + b1) + b2)

where ``x`` is the per-token feature vector exported by the recogniser
(attention context, decoder state and token embedding), optionally extended
by the linear LM probability of the token.  Trained with binary
cross-entropy against edit-distance targets over every n-best hypothesis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.special import expit

from .align import levenshtein_align, targets_from_alignment
from .dataio import CorpusHeader, Hypothesis, Utterance, atomic_write

__all__ = [
    "DEFAULT_HIDDEN",
    "CemModel",
    "CemTrainingExample",
    "TrainConfig",
    "TrainResult",
    "Adam",
    "init_model",
    "cem_forward",
    "cem_loss_and_grad",
    "hypothesis_inputs",
    "build_examples",
    "train_cem",
    "score_corpus",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)

DEFAULT_HIDDEN = 256
_FORMAT = "confest-cem"
_VERSION = 1
_PARAMS = ("W1", "b1", "w2", "b2")


@dataclass(eq=False)
class CemModel:
    W1: np.ndarray  # (hidden, input_dim)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float
    lm_feature: bool = False

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.w2 = np.asarray(self.w2, dtype=np.float64)
        self.b2 = float(self.b2)
        h = self.W1.shape[0]
        if self.W1.ndim != 2 or self.b1.shape != (h,) or self.w2.shape != (h,):
            raise ValueError(f"inconsistent CEM shapes: W1 {self.W1.shape}, "
                             f"b1 {self.b1.shape}, w2 {self.w2.shape}")
        for name in _PARAMS:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite values in {name}")

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "w2": self.w2, "b2": np.array(self.b2)}

    def with_params(self, params: dict) -> "CemModel":
        return CemModel(params["W1"], params["b1"], params["w2"], float(params["b2"]),
                        lm_feature=self.lm_feature)

    def __eq__(self, other):
        if not isinstance(other, CemModel):
            return NotImplemented
        return (self.lm_feature == other.lm_feature and self.b2 == other.b2
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("W1", "b1", "w2")))


@dataclass
class CemTrainingExample:
    """All n-best hypotheses of one utterance: inputs ``(T_h, D)`` and targets ``(T_h,)``."""

    inputs: list[np.ndarray]
    targets: list[np.ndarray]

    def __post_init__(self):
        if len(self.inputs) != len(self.targets) or not self.inputs:
            raise ValueError("need one target vector per hypothesis and at least one hypothesis")
        for x, c in zip(self.inputs, self.targets):
            if x.ndim != 2 or x.shape[0] != c.shape[0] or x.shape[0] == 0:
                raise ValueError(f"hypothesis inputs {x.shape} do not match targets {c.shape}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    steps: int = 2000
    batch_size: int = 32
    seed: int = 0
    hidden_dim: int = DEFAULT_HIDDEN
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init_scale: float | None = None  # None: 1/sqrt(fan_in) per layer

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.batch_size < 1 or self.hidden_dim < 1:
            raise ValueError("batch_size and hidden_dim must be >= 1")


@dataclass
class TrainResult:
    model: CemModel
    initial_loss: float
    final_loss: float
    history: list[float] = field(default_factory=list)


def init_model(input_dim: int, hidden_dim: int = DEFAULT_HIDDEN, rng=None,
               init_scale: float | None = None, lm_feature: bool = False) -> CemModel:
    rng = np.random.default_rng(rng)
    s1 = init_scale if init_scale is not None else 1.0 / np.sqrt(input_dim)
    s2 = init_scale if init_scale is not None else 1.0 / np.sqrt(hidden_dim)
    W1 = rng.uniform(-s1, s1, size=(hidden_dim, input_dim))
    w2 = rng.uniform(-s2, s2, size=hidden_dim)
    return CemModel(W1, np.zeros(hidden_dim), w2, 0.0, lm_feature=lm_feature)


def _logits(model: CemModel, X: np.ndarray):
    a = X @ model.W1.T
    a += model.b1
    np.maximum(a, 0.0, out=a)
    return a @ model.w2 + model.b2, a


def cem_forward(model: CemModel, x) -> np.ndarray | float:
    """Confidence for one input vector, or for each row of a matrix."""
    X = np.asarray(x, dtype=np.float64)
    if X.shape[-1] != model.input_dim:
        raise ValueError(f"input dimension {X.shape[-1]} != model input_dim {model.input_dim}")
    z, _ = _logits(model, np.atleast_2d(X))
    p = expit(z)
    return float(p[0]) if X.ndim == 1 else p


def _flatten(batch: Sequence[CemTrainingExample], input_dim: int):
    """Stack a batch into token arrays plus per-token loss weights."""
    if not batch:
        raise ValueError("empty batch")
    xs, cs, ws = [], [], []
    for ex in batch:
        for x, c in zip(ex.inputs, ex.targets):
            if x.shape[1] != input_dim:
                raise ValueError(f"input dimension {x.shape[1]} != model input_dim {input_dim}")
            xs.append(x)
            cs.append(c)
            ws.append(np.full(x.shape[0], 1.0 / x.shape[0]))
    return np.concatenate(xs), np.concatenate(cs).astype(np.float64), np.concatenate(ws) / len(batch)


def _loss_grad(model: CemModel, X, c, w):
    z, a = _logits(model, X)
    # softplus(z) - c*z is the BCE of sigmoid(z), stable for large |z|
    loss = float(np.dot(w, np.logaddexp(0.0, z) - c * z))
    dz = w * (expit(z) - c)
    # relu'(h) is 1 exactly where the activation is positive
    dh = (a > 0.0) * model.w2
    dh *= dz[:, None]
    grads = {"W1": dh.T @ X, "b1": dh.sum(axis=0), "w2": dz @ a, "b2": np.array(dz.sum())}
    return loss, grads


def cem_loss_and_grad(model: CemModel, batch: Sequence[CemTrainingExample]):
    """Loss and exact gradients over a batch of utterances.

    Each hypothesis contributes its mean token BCE; an utterance's loss is
    the sum over its n-best list; the batch loss is the mean over utterances.
    """
    return _loss_grad(model, *_flatten(batch, model.input_dim))


class Adam:
    """Adaptive-moment updates over a dict of parameter arrays."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        self.v = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        out = {}
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            out[k] = p - self.lr * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + self.eps)
        return out


# -- corpus glue -----------------------------------------------------------

def hypothesis_inputs(hyp: Hypothesis, lm_feature: bool) -> np.ndarray:
    """CEM input matrix for a hypothesis, LM probability appended if requested."""
    X = np.stack([t.features for t in hyp.tokens])
    if lm_feature:
        if any(t.lm_logp is None for t in hyp.tokens):
            raise ValueError("LM feature requested but a token has no lm_logp")
        X = np.column_stack([X, np.exp([t.lm_logp for t in hyp.tokens])])
    return X


def build_examples(header: CorpusHeader, utterances: Sequence[Utterance],
                   lm_feature: bool | None = None) -> list[CemTrainingExample]:
    """Align every n-best hypothesis with its reference to get training targets."""
    if lm_feature is None:
        lm_feature = header.has_lm_feature
    if lm_feature and not header.has_lm_feature:
        raise ValueError("corpus header declares no LM feature")
    examples = []
    for utt in utterances:
        ref = [r.piece for r in utt.reference]
        inputs, targets = [], []
        for hyp in utt.nbest:
            ali = levenshtein_align(ref, hyp.pieces)
            inputs.append(hypothesis_inputs(hyp, lm_feature))
            targets.append(targets_from_alignment(ali, len(hyp.tokens)))
        if inputs:
            examples.append(CemTrainingExample(inputs, targets))
    return examples


def train_cem(data: Sequence[CemTrainingExample], cfg: TrainConfig = TrainConfig(),
              lm_feature: bool = False) -> TrainResult:
    """Train a CEM with minibatch Adam; deterministic for a given ``cfg.seed``."""
    if not data:
        raise ValueError("no training data")
    input_dim = data[0].inputs[0].shape[1]
    init_ss, shuffle_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    model = init_model(input_dim, cfg.hidden_dim, np.random.default_rng(init_ss),
                       cfg.init_scale, lm_feature=lm_feature)
    shuffle_rng = np.random.default_rng(shuffle_ss)

    # flatten once; batches are gathered by token index
    X_all, c_all, w_all = _flatten(data, input_dim)
    w_all = w_all * len(data)  # undo the full-set mean; batches rescale below
    sizes = np.array([sum(x.shape[0] for x in ex.inputs) for ex in data])
    starts = np.r_[0, np.cumsum(sizes)[:-1]]

    initial = _loss_grad(model, X_all, c_all, w_all / len(data))[0]
    log.info("CEM training: %d utterances, %d tokens, input_dim %d, initial loss %.6f",
             len(data), X_all.shape[0], input_dim, initial)

    params = model.params()
    opt = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    history = []
    order = shuffle_rng.permutation(len(data))
    cursor = 0
    bsz = min(cfg.batch_size, len(data))
    for step in range(cfg.steps):
        if cursor + bsz > len(order):
            order = shuffle_rng.permutation(len(data))
            cursor = 0
        chosen = order[cursor:cursor + bsz]
        cursor += bsz
        idx = np.concatenate([np.arange(starts[u], starts[u] + sizes[u]) for u in chosen])
        loss, grads = _loss_grad(model, X_all[idx], c_all[idx], w_all[idx] / bsz)
        params = opt.step(params, grads)
        model = model.with_params(params)
        history.append(loss)
        if (step + 1) % 500 == 0:
            log.info("step %d: batch loss %.6f", step + 1, loss)

    final = _loss_grad(model, X_all, c_all, w_all / len(data))[0]
    log.info("CEM training done: full-batch loss %.6f -> %.6f", initial, final)
    return TrainResult(model, initial, final, history)


def score_corpus(model: CemModel, header: CorpusHeader,
                 utterances: Sequence[Utterance]) -> list[Utterance]:
    """Return copies of ``utterances`` with ``cem_p`` set on every token.

    Features and ``softmax_p`` are left untouched.
    """
    if model.lm_feature and not header.has_lm_feature:
        raise ValueError("model expects an LM feature but the corpus has none")
    expected = header.feature_dim + int(model.lm_feature)
    if model.input_dim != expected:
        raise ValueError(f"model input_dim {model.input_dim} does not match corpus "
                         f"feature_dim {header.feature_dim}"
                         f"{' + LM' if model.lm_feature else ''} = {expected}")
    scored = []
    for utt in utterances:
        nbest = []
        for hyp in utt.nbest:
            p = cem_forward(model, hypothesis_inputs(hyp, model.lm_feature))
            tokens = [replace(t, cem_p=float(v)) for t, v in zip(hyp.tokens, p)]
            nbest.append(Hypothesis(tokens, hyp.total_logp))
        scored.append(Utterance(utt.utt_id, list(utt.reference), nbest))
    return scored


# -- model files -----------------------------------------------------------

def save_model(model: CemModel, path) -> None:
    """Write a versioned text file; weights row-major with full precision."""
    with atomic_write(path) as fh:
        fh.write(f"{_FORMAT} {_VERSION}\n")
        fh.write(f"input_dim {model.input_dim}\n")
        fh.write(f"hidden_dim {model.hidden_dim}\n")
        fh.write(f"lm_feature {int(model.lm_feature)}\n")
        fh.write("W1\n")
        for row in model.W1:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        fh.write("b1\n" + " ".join(repr(float(v)) for v in model.b1) + "\n")
        fh.write("w2\n" + " ".join(repr(float(v)) for v in model.w2) + "\n")
        fh.write(f"b2\n{model.b2!r}\n")


def load_model(path) -> CemModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]

    def expect(k, key):
        parts = lines[k].split()
        if len(parts) != 2 or parts[0] != key:
            raise ValueError(f"{path}:{k + 1}: expected '{key} <value>'")
        return int(parts[1])

    if not lines or lines[0].split() != [_FORMAT, str(_VERSION)]:
        raise ValueError(f"{path}: not a {_FORMAT} v{_VERSION} file")
    d, h = expect(1, "input_dim"), expect(2, "hidden_dim")
    lm = bool(expect(3, "lm_feature"))
    if lines[4] != "W1":
        raise ValueError(f"{path}:5: expected 'W1'")
    W1 = np.array([ln.split() for ln in lines[5:5 + h]], dtype=np.float64)
    k = 5 + h
    if W1.shape != (h, d) or lines[k] != "b1" or lines[k + 2] != "w2" or lines[k + 4] != "b2":
        raise ValueError(f"{path}: weight block layout does not match declared dimensions")
    b1 = np.array(lines[k + 1].split(), dtype=np.float64)
    w2 = np.array(lines[k + 3].split(), dtype=np.float64)
    return CemModel(W1, b1, w2, float(lines[k + 5]), lm_feature=lm)
