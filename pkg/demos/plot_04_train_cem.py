"""
Training a confidence estimation module
=======================================

A one-hidden-layer network reads per-token decoder features and predicts
whether the token is correct.  Targets come from aligning every n-best
hypothesis with the reference.  A small run is shown; the acceptance suite
trains the full-size model for 2000 steps.
"""

from dataclasses import replace

from confest.cem import TrainConfig, build_examples, score_corpus, train_cem
from confest.pipeline import evaluate
from confest.synth import SynthConfig, generate

base = SynthConfig(sub_rate=0.15, overconf_rate=0.5, nbest_width=4, with_lm=True)
header, train = generate(replace(base, num_utterances=400, seed=1, utt_prefix="train"))
_, dev = generate(replace(base, num_utterances=150, seed=2, utt_prefix="dev"))
_, test = generate(replace(base, num_utterances=150, seed=3, utt_prefix="test"))

# the LM probability is appended to the features when the corpus carries it
result = train_cem(build_examples(header, train), TrainConfig(steps=300, hidden_dim=64),
                   lm_feature=True)
print(f"training loss {result.initial_loss:.4f} -> {result.final_loss:.4f}")

dev = score_corpus(result.model, header, dev)
test = score_corpus(result.model, header, test)
report = evaluate(test, dev)
print(f"top-1 WER {report.wer:.4f}")
for row in report.rows:
    print(f"{row.scorer:<8}{row.level:<6} AUC {row.auc:.4f}  NCE {row.nce:+.4f} "
          f"-> {row.nce_calibrated:+.4f} after calibration")
