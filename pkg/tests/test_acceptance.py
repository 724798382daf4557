"""Acceptance criteria.  Each test records a one-line verdict in ``ACCEPTANCE``."""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from confest import cli
from confest.align import levenshtein_align, targets_from_alignment
from confest.calibrate import apply_pwlm, fit_pwlm
from confest.cem import TrainConfig, build_examples, save_model, score_corpus, train_cem
from confest.dataio import write_curve
from confest.metrics import ScoredSet, auc, binary_cross_entropy, nce, pr_curve
from confest.pipeline import evaluate, filter_curve, scored_set, spike_score, write_report
from confest.synth import SynthConfig, generate

from conftest import ACCEPTANCE
from oracles import edit_distance_recursive, pr_bruteforce, sequences
from test_cem import gradient_check


def record(key, ok, text):
    ACCEPTANCE[key] = (bool(ok), text)
    assert ok, text


def test_criterion_1_worked_example():
    t0 = time.perf_counter()
    ali = levenshtein_align(["A", "B", "C", "D."], ["A", "C", "C", "D."])
    targets = targets_from_alignment(ali, 4).tolist()
    ms = (time.perf_counter() - t0) * 1e3
    record(1, targets == [1, 0, 1, 1] and ms < 1.0,
           f"targets {targets} (want [1, 0, 1, 1]) in {ms:.3f} ms (< 1 ms)")


def test_criterion_2_metric_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    c = (rng.random(1000) < 0.7).astype(int)
    c[:2] = (0, 1)
    self_nce = nce(ScoredSet(c, c.astype(float)))
    base = nce(ScoredSet(c, np.full(c.size, c.mean())))
    half = binary_cross_entropy(ScoredSet(c, np.full(c.size, 0.5)))
    sep = auc(pr_curve(ScoredSet(c, np.where(c == 1, rng.uniform(0.6, 1, c.size),
                                                   rng.uniform(0, 0.4, c.size)))))
    dt = time.perf_counter() - t0
    errs = (abs(self_nce - 1), abs(base), abs(half - math.log(2)), abs(sep - 1))
    ok = errs[0] <= 1e-9 and errs[1] <= 1e-12 and errs[2] <= 1e-12 and errs[3] <= 1e-9 and dt < 1
    record(2, ok, "|NCE(c,c)-1|={:.1e} |NCE(base)|={:.1e} |BCE(0.5)-ln2|={:.1e} "
                  "|AUC(sep)-1|={:.1e} in {:.2f} s".format(*errs, dt))


def test_criterion_3_oracle_equivalence():
    t0 = time.perf_counter()
    seqs = list(sequences("abc", 5))
    ed_bad = sum(levenshtein_align(r, h).distance != edit_distance_recursive(r, h)
                 for r in seqs for h in seqs)
    rng = np.random.default_rng(3)
    count_bad, area_err = 0, 0.0
    for _ in range(200):
        n = int(rng.integers(1, 201))
        # a coarse grid forces plenty of ties
        p = np.round(rng.random(n), int(rng.integers(1, 4)))
        c = (rng.random(n) < rng.uniform(0.05, 0.95)).astype(int)
        c[0] = 1
        curve = pr_curve(ScoredSet(c, p))
        got = [(pt.threshold, pt.tp, pt.fp, pt.fn) for pt in curve.points]
        want = pr_bruteforce(c.tolist(), p.tolist())
        count_bad += got != want
        # right-step area recomputed from the brute-force counts
        n_pos = int(c.sum())
        area = sum((want[k][1] / n_pos - (want[k + 1][1] / n_pos if k + 1 < len(want) else 0.0))
                   * want[k][1] / (want[k][1] + want[k][2]) for k in range(len(want)))
        area_err = max(area_err, abs(area - auc(curve)))
    dt = time.perf_counter() - t0
    record(3, ed_bad == 0 and count_bad == 0 and area_err <= 1e-12 and dt < 30,
           f"{len(seqs) ** 2} pairs, {ed_bad} distance mismatches; 200 P-R sets, {count_bad} count "
           f"mismatches, max area error {area_err:.1e} in {dt:.1f} s")


def test_criterion_4_gradient_check():
    t0 = time.perf_counter()
    results = [gradient_check(seed) for seed in range(120)]
    dt = time.perf_counter() - t0
    worst = max(err for err, _ in results)
    redraws = sum(r for _, r in results)
    record(4, worst <= 1e-4 and dt < 30,
           f"max relative error {worst:.2e} over {len(results)} draws (<= 1e-4), "
           f"{redraws} batches redrawn off the ReLU kink, in {dt:.1f} s")


def test_criterion_5_calibration_laws():
    t0 = time.perf_counter()
    worst_auc, worst_gain = 0.0, math.inf
    for seed in range(50):
        rng = np.random.default_rng(seed)
        cfg = SynthConfig(num_utterances=80, mean_utt_len=10, sub_rate=rng.uniform(0.05, 0.3),
                          overconf_rate=rng.uniform(0, 1), nbest_width=1, seed=seed)
        _, utts = generate(cfg)
        perm = rng.permutation(len(utts))
        dev, ev = [utts[i] for i in perm[:40]], [utts[i] for i in perm[40:]]
        for level in ("token", "word"):
            d, e = scored_set(dev, "softmax", level), scored_set(ev, "softmax", level)
            m = fit_pwlm(d)
            after = auc(pr_curve(ScoredSet(e.targets, apply_pwlm(m, e.confidences))))
            worst_auc = max(worst_auc, abs(auc(pr_curve(e)) - after))
            gain = nce(ScoredSet(d.targets, apply_pwlm(m, d.confidences))) - nce(d)
            worst_gain = min(worst_gain, gain)
    dt = time.perf_counter() - t0
    record(5, worst_auc <= 1e-9 and worst_gain >= 0 and dt < 30,
           f"50 splits x 2 levels: max |dAUC| {worst_auc:.1e} (<= 1e-9), "
           f"min fitting-set NCE gain {worst_gain:+.4f} (>= 0) in {dt:.1f} s")


# -- synthetic end-to-end reproduction --------------------------------------

BASE = SynthConfig(sub_rate=0.15, overconf_rate=0.5, feature_informativeness=0.8, nbest_width=8)
TRAIN = replace(BASE, num_utterances=2000, seed=1, utt_prefix="train")
DEV = replace(BASE, num_utterances=500, seed=2, utt_prefix="dev")
EVAL = replace(BASE, num_utterances=500, seed=3, utt_prefix="eval")
STEPS = 2000


def reproduce(out):
    """Library-level run: train, score, evaluate and write every artefact to ``out``."""
    t0 = time.perf_counter()
    header, train = generate(TRAIN)
    _, dev = generate(DEV)
    _, ev = generate(EVAL)
    model = train_cem(build_examples(header, train), TrainConfig(steps=STEPS, seed=0)).model
    t_train = time.perf_counter() - t0
    dev, ev = score_corpus(model, header, dev), score_corpus(model, header, ev)
    report = evaluate(ev, dev)
    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "cem.txt")
    write_report(report, out)
    t1 = time.perf_counter()
    curves = {s: filter_curve(ev, scorer=s) for s in ("softmax", "cem")}
    for s, fc in curves.items():
        write_curve(fc.points, out / f"filter_{s}.csv")
    return report, curves, t_train + (t1 - t0 - t_train), time.perf_counter() - t1


@pytest.fixture(scope="module")
def synthetic_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("reproduce") / "run"
    return out, *reproduce(out)


@pytest.mark.slow
def test_criterion_6_cem_beats_softmax(synthetic_run):
    _, report, _, t_main, _ = synthetic_run
    soft, cem = report.get("softmax", "token"), report.get("cem", "token")
    ok = (cem.auc >= soft.auc + 0.02 and cem.nce_calibrated > 0 and soft.nce < cem.nce
          and t_main < 120)
    record(6, ok, f"token AUC softmax {soft.auc:.4f} vs CEM {cem.auc:.4f} (need +0.02); "
                  f"CEM NCE after PWLM {cem.nce_calibrated:.4f} (> 0); NCE before PWLM "
                  f"softmax {soft.nce:.4f} < CEM {cem.nce:.4f}; {t_main:.0f} s (< 120 s)")


@pytest.mark.slow
def test_criterion_7_filter_spikes(synthetic_run):
    _, _, curves, _, t_curves = synthetic_run
    s_soft, s_cem = spike_score(curves["softmax"]), spike_score(curves["cem"])
    record(7, s_soft > s_cem and s_cem <= 0.01 and t_curves < 10,
           f"spike score softmax {s_soft:.4f} > CEM {s_cem:.4f} (CEM <= 0.01) in {t_curves:.1f} s")


@pytest.mark.slow
def test_criterion_8_determinism(synthetic_run, tmp_path):
    """Rerun through the command line and compare bytes with the library run."""
    first = synthetic_run[0]
    d = tmp_path
    flags = ["--sub-rate", "0.15", "--overconf-rate", "0.5", "--feature-informativeness", "0.8",
             "--nbest-width", "8"]
    for cfg, name in ((TRAIN, "train"), (DEV, "dev"), (EVAL, "eval")):
        assert cli.run(["synth", *flags, "--num-utterances", str(cfg.num_utterances),
                        "--seed", str(cfg.seed), "--utt-prefix", cfg.utt_prefix,
                        "--out", str(d / f"{name}.jsonl")]) == 0
    assert cli.run(["train-cem", "--corpus", str(d / "train.jsonl"), "--steps", str(STEPS),
                    "--seed", "0", "--out", str(d / "cem.txt")]) == 0
    assert cli.run(["score", "--corpus", str(d / "eval.jsonl"), "--cem-model", str(d / "cem.txt"),
                    "--out", str(d / "eval_scored.jsonl")]) == 0
    assert cli.run(["eval", "--corpus", str(d / "eval.jsonl"), "--dev", str(d / "dev.jsonl"),
                    "--cem-model", str(d / "cem.txt"), "--out", str(d / "report")]) == 0
    names = ["cem.txt", "report.json", "report.csv", "filter_softmax.csv", "filter_cem.csv"]
    second = {n: (d / n if n == "cem.txt" else d / "report" / n) for n in names}
    same = [n for n in names if (first / n).read_bytes() == second[n].read_bytes()]
    record(8, len(same) == len(names),
           f"{len(same)}/{len(names)} artefacts bit-identical across reruns ({', '.join(names)})")
