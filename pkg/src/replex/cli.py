"""``replex`` command line: train, eval, metrics, gencorpus, gradcurve.

Exit status: 0 success, 1 training aborted, 2 configuration error, 3 data error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

from . import loss_weighting as lw
from . import text_metrics as tm
from .config import FULL, PROFILES, ConfigError, RunConfig, build_config, dump_config
from .experiment import load_corpora, prepare, run
from .loss_weighting import Scheme
from .seq2seq import Attention
from .training import (Checkpoint, CheckpointError, TrainingAborted, Vocabulary, build_pairs,
                       format_log, generate_synthetic_corpus, write_corpus)
from .training.trainer import evaluate

EXIT_OK, EXIT_ABORT, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3

log = logging.getLogger("replex")


class DataError(Exception):
    pass


def _env_seed():
    raw = os.environ.get("REPLEX_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"REPLEX_SEED must be an integer, got {raw!r}") from None


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value config file (default: none)")
    p.add_argument("--profile", choices=sorted(PROFILES),
                   help="base profile; a config file may name one too (default: paper)")
    p.add_argument("--seed", type=int,
                   help=f"random seed; falls back to $REPLEX_SEED (default: {FULL.seed})")


def _add_train_flags(p: argparse.ArgumentParser):
    p.add_argument("--scheme", choices=[s.value for s in Scheme],
                   help=f"loss weighting scheme (default: {FULL.scheme})")
    p.add_argument("--gamma", type=float,
                   help=f"focusing exponent for fl/tfl (default: {FULL.gamma})")
    p.add_argument("--uniform-w", type=float,
                   help=f"constant weight for the uniform scheme (default: {FULL.uniform_w})")
    p.add_argument("--attention", choices=[a.value for a in Attention],
                   help=f"attention variant (default: {FULL.attention})")
    p.add_argument("--epochs", type=float, help=f"training epochs (default: {FULL.epochs})")
    p.add_argument("--valid-interval", type=float,
                   help=f"epochs between validations (default: {FULL.valid_interval})")
    p.add_argument("--out", help=f"output directory (default: {FULL.out})")


def _config_from(args) -> RunConfig:
    seed = args.seed if args.seed is not None else _env_seed()
    overrides = {
        "seed": seed,
        "scheme": getattr(args, "scheme", None),
        "gamma": getattr(args, "gamma", None),
        "uniform_w": getattr(args, "uniform_w", None),
        "attention": getattr(args, "attention", None),
        "epochs": getattr(args, "epochs", None),
        "valid_interval": getattr(args, "valid_interval", None),
        "out": getattr(args, "out", None),
    }
    return build_config(args.config, args.profile, overrides)


def _check_paths(cfg: RunConfig):
    for key in ("train_corpus", "valid_corpus"):
        path = getattr(cfg, key)
        if path and not Path(path).is_file():
            raise DataError(f"{key}: no such file: {path}")


def _prepare(cfg: RunConfig):
    _check_paths(cfg)
    try:
        return prepare(cfg)
    except (OSError, UnicodeDecodeError, ValueError) as exc:
        raise DataError(str(exc)) from None


def cmd_train(args) -> int:
    cfg = _config_from(args)
    data = _prepare(cfg)
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {out}: {exc.strerror}") from None
    (out / "config.cfg").write_text(dump_config(cfg), encoding="utf-8")
    log.info("%d train / %d valid pairs, vocabulary %d", len(data.train_pairs),
             len(data.valid_pairs), len(data.vocab))
    result = run(cfg, data)
    (out / "metrics.csv").write_text(format_log(result.log), encoding="utf-8")
    result.best.save(out / "best.ckpt")
    result.last.save(out / "last.ckpt")
    best = result.best
    print(f"best epoch={best.epoch:.2f} step={best.step} wl2={best.valid_wl2:.6f} "
          f"l_dimen={best.metrics['l_dimen']:.6f} bleu4={best.metrics['bleu4']:.6f}")
    print(f"wrote {out / 'best.ckpt'}, {out / 'last.ckpt'}, {out / 'metrics.csv'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        ckpt = Checkpoint.load(args.checkpoint)
    except (OSError, CheckpointError, ValueError) as exc:
        raise DataError(f"{args.checkpoint}: {exc}") from None
    if not ckpt.vocab:
        raise DataError(f"{args.checkpoint}: checkpoint carries no vocabulary")
    cfg = _config_from(args)
    if args.corpus:
        cfg.train_corpus = cfg.valid_corpus = args.corpus
    _check_paths(cfg)
    try:
        _, valid = load_corpora(cfg)
    except (OSError, UnicodeDecodeError, ValueError) as exc:
        raise DataError(str(exc)) from None
    # ids come from the checkpoint's vocabulary, not one rebuilt from the corpus
    pairs = build_pairs(valid, Vocabulary(ckpt.vocab), cfg.history_turns,
                        cfg.message_truncation, cfg.response_truncation)
    if not pairs:
        raise DataError("no evaluation pairs")
    report = evaluate(ckpt.to_model(), pairs, cfg.metric_configs(), cfg.response_truncation)
    print(tm.format_report(report))
    return EXIT_OK


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}")


def _read_utterances(path: str) -> list[list[str]]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    utts = [line.split() for line in lines if line.strip()]
    if not utts:
        raise DataError(f"{path}: no utterances")
    return utts


def cmd_metrics(args) -> int:
    try:
        alpha = args.alpha if args.alpha is not None else (1.0 / args.n,) * args.n
        dimen = tm.DimenConfig(args.n, alpha)
        beta = args.beta
        if beta is None:
            # linear ramp from 1 - 1/m down to 0; the 10-bin case is 0.9, 0.8, ..., 0.0
            beta = tuple(round(1.0 - (i + 1) / args.bins, 12) for i in range(args.bins))
        wl2_cfg = tm.Wl2Config(args.bins, beta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    hyps = _read_utterances(args.file)
    refs = _read_utterances(args.refs) if args.refs else None
    if refs is not None and len(refs) != len(hyps):
        raise DataError(f"{len(hyps)} hypotheses but {len(refs)} references")
    print(tm.format_report(tm.report(hyps, refs, dimen, wl2_cfg)))
    return EXIT_OK


def cmd_gencorpus(args) -> int:
    cfg = _config_from(args)
    corpus = generate_synthetic_corpus(cfg.synthetic_spec())
    try:
        write_corpus(corpus, args.output)
    except OSError as exc:
        raise DataError(f"cannot write {args.output}: {exc.strerror}") from None
    print(f"wrote {len(corpus)} dialogues to {args.output}")
    return EXIT_OK


def cmd_gradcurve(args) -> int:
    curves = lw.gradient_curves(gamma=args.gamma)
    try:
        fh = open(args.output, "w", newline="", encoding="utf-8") if args.output != "-" else sys.stdout
    except OSError as exc:
        raise DataError(f"cannot write {args.output}: {exc.strerror}") from None
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(lw.GRADCURVE_HEADER)
    for row in curves:
        writer.writerow([repr(float(v)) for v in row])
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="replex", description=__doc__.splitlines()[0])
    parser.add_argument("-q", "--quiet", action="store_true", help="only print warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and keep the least repetitive checkpoint")
    _add_run_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on the validation split or a corpus")
    p.add_argument("checkpoint")
    p.add_argument("--corpus", help="corpus or .tsv pair file to score (default: validation split)")
    _add_run_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("metrics", help="repetition metrics for a file of utterances")
    p.add_argument("file", help="one whitespace-tokenized utterance per line")
    p.add_argument("--refs", help="reference file, one line per utterance, adds BLEU-4")
    p.add_argument("--n", type=int, default=4, help="maximum n-gram order (default: 4)")
    p.add_argument("--alpha", type=_floats,
                   help="comma-separated n-gram weights (default: uniform, 0.25 each for n=4)")
    p.add_argument("--bins", type=int, default=10, help="histogram bins (default: 10)")
    p.add_argument("--beta", type=_floats,
                   help="comma-separated bin weights (default: 0.9, 0.8, ..., 0.0)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("gencorpus", help="write the synthetic hard-token corpus")
    p.add_argument("output")
    _add_run_flags(p)
    p.set_defaults(func=cmd_gencorpus)

    p = sub.add_parser("gradcurve", help="CSV of loss and gradient curves over p")
    p.add_argument("output", nargs="?", default="-", help="CSV path, '-' for stdout (default: -)")
    p.add_argument("--gamma", type=float, default=2.0, help="TFL focusing exponent (default: 2.0)")
    p.set_defaults(func=cmd_gradcurve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"replex: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"replex: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingAborted as exc:
        print(f"replex: training aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except BrokenPipeError:
        # downstream reader (e.g. head) closed early; not an error
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
