"""Command-line front end.

Subcommands: datagen, folds, train, eval, segment, report, gradcheck.
Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from .bleu import bleu_best_reference
from .bpe import bpe_encode, load_bpe
from .datagen import NOISE_SIGMA, gen_corpus, load_dataset, save_dataset
from .errors import ConfigError, DataError, NumericError
from .harness import CHUNKED, BLEU_NS, ExperimentConfig, config_hash, \
    fold_plan_json, load_config, make_folds, run_experiment, write_report
from .quantize import load_codebook, quantize
from .seq2seq import load_checkpoint, toy_gradient_check

GRADCHECK_TOL = 1e-4


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    defaults = ExperimentConfig()
    p.add_argument("--config", help="versioned JSON config to replay")
    p.add_argument("--variants",
                   help=f"comma list (default {','.join(defaults.variants)})")
    p.add_argument("--k", type=int, help="codebook size")
    p.add_argument("--bpe-vocab", type=int, dest="bpe_vocab")
    p.add_argument("--bpe-min-freq", type=int, dest="bpe_min_freq",
                   help="support floor for a BPE merge")
    p.add_argument("--hidden", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--dropout", type=float)
    p.add_argument("--clip-norm", type=float, dest="clip_norm")
    p.add_argument("--max-epochs", type=int, dest="max_epochs")
    p.add_argument("--patience", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dataset")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--global-segmentation", action="store_true", default=None,
                   dest="global_segmentation",
                   help="fit codebook/BPE once on all data instead of per fold")
    p.add_argument("--workers", type=int)
    p.add_argument("--max-decode-len", type=int, dest="max_decode_len")
    p.add_argument("--min-freq", type=int, dest="min_freq")


def _config_from_args(args) -> ExperimentConfig:
    base = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for f in dataclasses.fields(ExperimentConfig):
        val = getattr(args, f.name, None)
        if val is None:
            continue
        if f.name == "variants":
            val = tuple(v.strip() for v in val.split(",") if v.strip())
        overrides[f.name] = val
    return dataclasses.replace(base, **overrides)


def cmd_datagen(args) -> int:
    samples = gen_corpus(n_actions=args.actions,
                         captions_per_action=args.captions,
                         master_seed=args.seed,
                         noise_sigma=args.noise)
    save_dataset(samples, args.out)
    steps = [s.observations.shape[0] for s in samples]
    print(f"wrote {len(samples)} actions ({min(steps)}-{max(steps)} steps, "
          f"{args.captions} captions each) to {args.out}")
    return 0


def cmd_folds(args) -> int:
    plan = make_folds(args.actions, args.folds, args.seed)
    sys.stdout.write(fold_plan_json(plan))
    return 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    result = run_experiment(cfg)
    print(f"config {result.config_hash}")
    for variant in cfg.variants:
        cells = "  ".join(f"BLEU-{n} {result.table[variant][n]:6.2f}"
                          for n in BLEU_NS)
        print(f"{variant:<9} {cells}")
    print(f"artifacts in {cfg.out_dir}")
    return 0


def cmd_eval(args) -> int:
    model, meta = load_checkpoint(args.checkpoint)
    samples = load_dataset(args.dataset)
    if args.actions:
        wanted = {int(a) for a in args.actions.split(",")}
        samples = [s for s in samples if s.id in wanted]
        if not samples:
            raise DataError(f"no actions matching {sorted(wanted)}")
    seg = None
    if model.variant in CHUNKED:
        if not args.codebook or not args.bpe:
            raise ConfigError(
                f"variant {model.variant!r} needs --codebook and --bpe")
        codebook = load_codebook(args.codebook)
        bpe = load_bpe(args.bpe)
        seg = (codebook, bpe)
    scores = {n: [] for n in BLEU_NS}
    for s in samples:
        if seg is not None:
            labels = [int(x) for x in quantize(seg[0], s.observations)]
            inp = bpe_encode(seg[1], labels)
        else:
            inp = s.observations.astype(np.float32)
        tokens, _ = model.decode_greedy(inp, max_len=args.max_len)
        refs = [cap[:-1] for cap in s.captions]
        per = {n: bleu_best_reference(tokens, refs, n) for n in BLEU_NS}
        for n in BLEU_NS:
            scores[n].append(per[n])
        cells = "  ".join(f"BLEU-{n} {per[n]:6.2f}" for n in BLEU_NS)
        print(f"action {s.id:>3} {cells}  | {' '.join(tokens)}")
    means = "  ".join(f"BLEU-{n} {sum(scores[n]) / len(scores[n]):6.2f}"
                      for n in BLEU_NS)
    print(f"mean       {means}")
    return 0


def cmd_segment(args) -> int:
    codebook = load_codebook(args.codebook)
    bpe = load_bpe(args.bpe)
    samples = load_dataset(args.dataset)
    matches = [s for s in samples if s.id == args.action]
    if not matches:
        raise DataError(f"no action with id {args.action} in {args.dataset}")
    obs = matches[0].observations
    labels = [int(x) for x in quantize(codebook, obs)]
    chunks = bpe_encode(bpe, labels)
    print("labels: " + " ".join(str(x) for x in labels))
    print("chunks: " + " ".join(str(x) for x in chunks))
    print(f"compression {len(labels) / len(chunks):.2f}x "
          f"({len(labels)} -> {len(chunks)})")
    return 0


def cmd_report(args) -> int:
    path = write_report(args.out_dir)
    print(f"wrote {path}")
    return 0


def cmd_gradcheck(args) -> int:
    errs = toy_gradient_check(eps=args.eps)
    for variant, err in errs.items():
        print(f"{variant:<9} max rel err {err:.3e}")
    worst = max(errs.values())
    if not np.isfinite(worst) or worst >= args.tol:
        raise NumericError(
            f"gradient check failed: max rel err {worst:.3e} >= {args.tol}")
    print(f"ok (worst {worst:.3e} < {args.tol})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="actioncap",
        description="Caption generation from robot observation streams "
                    "via learned base action units.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate a synthetic caption corpus")
    p.add_argument("--out", required=True, help="JSONL path (.gz supported)")
    p.add_argument("--actions", type=int, default=50)
    p.add_argument("--captions", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=NOISE_SIGMA)
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("folds", help="print a cross-validation fold plan")
    p.add_argument("--actions", type=int, required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_folds)

    p = sub.add_parser("train", help="run the cross-validated experiment")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--codebook")
    p.add_argument("--bpe")
    p.add_argument("--actions", help="comma list of action ids (default all)")
    p.add_argument("--max-len", type=int, default=30, dest="max_len")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("segment",
                       help="quantize + chunk one action and print tokens")
    p.add_argument("--codebook", required=True)
    p.add_argument("--bpe", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--action", type=int, required=True)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("report", help="regenerate report.md from a bundle")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of all variants")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=GRADCHECK_TOL)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
