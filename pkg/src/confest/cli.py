"""Command-line entry point: ``confest <stage> [flags]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

from . import calibrate, cem, dataio, pipeline, synth
from .align import levenshtein_align, targets_from_alignment

log = logging.getLogger("confest")


def _thresholds(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not values or any(b < a for a, b in zip(values, values[1:])):
        raise argparse.ArgumentTypeError("thresholds must be a non-empty ascending list")
    return values


def _load_scored(path, model_path):
    header, utts = dataio.read_corpus(path)
    if model_path:
        utts = cem.score_corpus(cem.load_model(model_path), header, utts)
    return header, utts


# -- stages ----------------------------------------------------------------

def cmd_synth(args):
    overrides = {f.name: getattr(args, f.name) for f in fields(synth.SynthConfig)
                 if getattr(args, f.name, None) is not None}
    cfg = (synth.load_config(args.config, **overrides) if args.config
           else synth.SynthConfig(**overrides))
    log.info("synth config: %s", json.dumps(asdict(cfg), sort_keys=True))
    header, utts = synth.generate(cfg)
    dataio.write_corpus(header, utts, args.out)
    log.info("wrote %d utterances to %s", len(utts), args.out)


def cmd_align(args):
    _, utts = dataio.read_corpus(args.corpus)
    with dataio.atomic_write(args.out) as fh:
        for utt in utts:
            hyp = utt.top1
            ali = levenshtein_align([r.piece for r in utt.reference], hyp.pieces)
            wer = pipeline.top1_wer(utt)
            fh.write(json.dumps({
                "utt_id": utt.utt_id,
                "targets": targets_from_alignment(ali, len(hyp.tokens)).tolist(),
                "ops": [[op.kind.value, op.ref_index, op.hyp_index] for op in ali.ops],
                "token_distance": ali.distance,
                "word_errors": {"sub": wer.substitutions, "del": wer.deletions,
                                "ins": wer.insertions, "ref_len": wer.ref_len},
            }) + "\n")
    log.info("wrote alignments for %d utterances to %s", len(utts), args.out)


def cmd_train_cem(args):
    header, utts = dataio.read_corpus(args.corpus)
    if args.no_lm and not header.has_lm_feature:
        log.warning("--no-lm given but the corpus has no LM feature anyway")
    use_lm = header.has_lm_feature and not args.no_lm
    cfg = cem.TrainConfig(learning_rate=args.lr, steps=args.steps, batch_size=args.batch,
                          seed=args.seed, hidden_dim=args.hidden)
    log.info("train config: %s (lm_feature=%s)", json.dumps(asdict(cfg), sort_keys=True), use_lm)
    result = cem.train_cem(cem.build_examples(header, utts, use_lm), cfg, lm_feature=use_lm)
    cem.save_model(result.model, args.out)
    log.info("full-batch loss %.6f -> %.6f; model written to %s",
             result.initial_loss, result.final_loss, args.out)


def cmd_score(args):
    header, utts = _load_scored(args.corpus, args.cem_model)
    dataio.write_corpus(header, utts, args.out)
    log.info("scored %d utterances into %s", len(utts), args.out)


def cmd_calibrate(args):
    _, utts = _load_scored(args.corpus, args.cem_model)
    m = calibrate.fit_pwlm(pipeline.scored_set(utts, args.scorer, args.level), args.bins)
    calibrate.save_pwlm(m, args.out)
    log.info("PWLM with %d knots written to %s", m.x.size, args.out)


def cmd_eval(args):
    _, utts = _load_scored(args.corpus, args.cem_model)
    _, dev = _load_scored(args.dev, args.cem_model)
    scorers = tuple(args.scorer) if args.scorer else pipeline.SCORERS
    levels = tuple(args.level) if args.level else pipeline.LEVELS
    pwlms = {}
    report = pipeline.evaluate(utts, dev, scorers, levels, num_bins=args.bins, pwlms=pwlms)
    out = Path(args.out)
    pipeline.write_report(report, out)
    wide = ("threshold", "precision", "recall", "tp", "fp", "fn")
    for (scorer, level), m in pwlms.items():
        calibrate.save_pwlm(m, out / f"pwlm_{scorer}_{level}.txt")
        curve = pipeline.pr_curve(pipeline.scored_set(utts, scorer, level))
        dataio.write_curve(curve.rows(), out / f"pr_{scorer}_{level}.csv", columns=wide)
    for scorer in scorers:
        fc = pipeline.filter_curve(utts, args.thresholds, scorer=scorer)
        dataio.write_curve(fc.points, out / f"filter_{scorer}.csv")
    for row in report.rows:
        log.info("%-7s %-5s AUC %.4f  NCE %.4f -> %.4f (PWLM)", row.scorer, row.level,
                 row.auc, row.nce, row.nce_calibrated)
    log.info("WER %.4f over %d utterances; outputs in %s", report.wer, report.num_utterances, out)


def cmd_filter_curve(args):
    _, utts = _load_scored(args.corpus, args.cem_model)
    fc = pipeline.filter_curve(utts, args.thresholds, scorer=args.scorer, by=args.by)
    dataio.write_curve(fc.points, args.out)
    if len(fc.points) >= 2:
        log.info("spike score %.6f", pipeline.spike_score(fc))


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="confest", description="Confidence estimation toolkit for sequence recognisers",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic corpus")
    p.add_argument("--config", help="JSON file with SynthConfig fields")
    for f in fields(synth.SynthConfig):
        kind = {"bool": lambda s: s.lower() in ("1", "true", "yes")}.get(f.type, None)
        kind = kind or {"int": int, "float": float, "str": str}[f.type]
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, type=kind, default=None,
                       help=f"override {f.name} (default {f.default!r})")
    p.add_argument("--out", required=True, help="output corpus file")

    p = add("align", cmd_align, "dump top-1 alignments and targets")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output JSON-lines file")

    p = add("train-cem", cmd_train_cem, "train a confidence estimation module")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=32, help="utterances per step")
    p.add_argument("--hidden", type=int, default=cem.DEFAULT_HIDDEN)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-lm", action="store_true", help="ignore the LM feature")

    p = add("score", cmd_score, "attach CEM confidences to a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--cem-model", required=True)
    p.add_argument("--out", required=True)

    p = add("calibrate", cmd_calibrate, "fit a PWLM on a (dev) corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--cem-model", help="score the corpus with this model first")
    p.add_argument("--scorer", choices=pipeline.SCORERS, default="softmax")
    p.add_argument("--level", choices=pipeline.LEVELS, default="token")
    p.add_argument("--bins", type=int, default=calibrate.DEFAULT_BINS)
    p.add_argument("--out", required=True, help="output PWLM file")

    p = add("eval", cmd_eval, "softmax vs CEM metrics, P-R and filter curves")
    p.add_argument("--corpus", required=True, help="evaluation corpus")
    p.add_argument("--dev", required=True, help="corpus the PWLMs are fitted on")
    p.add_argument("--cem-model", help="score both corpora with this model first")
    p.add_argument("--scorer", choices=pipeline.SCORERS, action="append")
    p.add_argument("--level", choices=pipeline.LEVELS, action="append")
    p.add_argument("--bins", type=int, default=calibrate.DEFAULT_BINS)
    p.add_argument("--thresholds", type=_thresholds,
                   default=list(pipeline.DEFAULT_THRESHOLDS), help="comma-separated, ascending")
    p.add_argument("--out", required=True, help="output directory")

    p = add("filter-curve", cmd_filter_curve, "WER of utterances above confidence thresholds")
    p.add_argument("--corpus", required=True)
    p.add_argument("--cem-model")
    p.add_argument("--scorer", choices=pipeline.SCORERS, default="softmax")
    p.add_argument("--by", choices=("token", "word"), default="token",
                   help="average tokens or words into the utterance confidence")
    p.add_argument("--thresholds", type=_thresholds,
                   default=list(pipeline.DEFAULT_THRESHOLDS), help="comma-separated, ascending")
    p.add_argument("--out", required=True, help="output curve file")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = max(logging.WARNING - 10 * (args.verbose + 1), logging.DEBUG)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(level)
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    log.info("resolved configuration: %s", json.dumps(resolved, sort_keys=True, default=str))
    try:
        args.func(args)
    except (OSError, ValueError) as exc:
        where = getattr(args, "corpus", None) or getattr(args, "out", None)
        log.error("%s failed (%s): %s", args.command, where, exc)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
