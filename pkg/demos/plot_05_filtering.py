"""
Filtering utterances by confidence
==================================

Keeping only utterances whose mean token confidence clears a threshold should
lower the WER of what is kept.  Overconfident softmax scores let bad
utterances through at high thresholds, which shows up as upward spikes in the
curve.  The spike score sums those upward steps.
"""

from dataclasses import replace

from confest.cem import TrainConfig, build_examples, score_corpus, train_cem
from confest.pipeline import filter_curve, spike_score
from confest.synth import SynthConfig, generate

base = SynthConfig(sub_rate=0.15, overconf_rate=0.5, nbest_width=4)
header, train = generate(replace(base, num_utterances=400, seed=1, utt_prefix="train"))
_, test = generate(replace(base, num_utterances=300, seed=3, utt_prefix="test"))
model = train_cem(build_examples(header, train), TrainConfig(steps=300, hidden_dim=64)).model
test = score_corpus(model, header, test)

for scorer in ("softmax", "cem"):
    fc = filter_curve(test, scorer=scorer)
    print(f"{scorer}: spike score {spike_score(fc):.4f}")
    for t, wer, n in fc.points[10:]:
        print(f"  >= {t:.2f}  WER {wer:.4f}  utterances {n}")
