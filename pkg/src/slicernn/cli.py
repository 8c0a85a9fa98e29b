"""Command-line entry point: prepare / train / tune / eval / gradcheck / inspect.

Exit codes: 0 success, 1 usage, 2 I/O or malformed input file, 3 invalid
or inconsistent configuration, 4 numeric failure or divergence,
5 gradient check failure.  All randomness flows from --seed; with a fixed
seed every output file is byte-identical across runs (wall-clock timings
are printed but never written to files).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import corpus
from .config import CliConfig, load_config_file, merge_config
from .errors import (
    ArgumentError,
    CheckpointCorruptError,
    CheckpointVersionError,
    ConfigError,
    FormatError,
    LengthError,
    NumericError,
    StratificationError,
)
from .evalinspect import evaluate, hidden_dump
from .kernel import Rng, derive_seed
from .models import Dims, Hyper, gradient_check
from .trainer import (
    PRESETS,
    grid_search,
    load_checkpoint,
    load_prepared_dir,
    save_checkpoint,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4
EXIT_GRADCHECK = 5


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1 here
        raise _UsageError(message)


def _bool(value: str) -> bool:
    low = value.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {value!r}")


def _floats(value: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in value.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats: {value!r}")


def _add_common(p: argparse.ArgumentParser, tune: bool = False) -> None:
    p.add_argument("--config", type=Path, default=None,
                   help="TOML config file (flags override it)")
    p.add_argument("--seed", type=int, default=None, help="run seed (default 0)")
    p.add_argument("--arch", choices=("modified_rnn", "perstep_rnn", "gru"),
                   default=None, help="architecture (default modified_rnn)")
    p.add_argument("--classes", type=int, choices=(4, 5), default=None,
                   help="number of classes (default 5)")
    p.add_argument("--padded", type=_bool, default=None, metavar="{true,false}",
                   help="front zero-padded encoding (default true)")
    p.add_argument("--lr", type=float, default=None, help="learning rate (default 0.01)")
    p.add_argument("--l2", type=float, default=None, help="L2 weight (default 0.0)")
    p.add_argument("--keep-prob", type=float, default=None, dest="keep_prob",
                   help="dropout keep probability (default 1.0)")
    p.add_argument("--epochs", type=int, default=None, help="training epochs (default 7)")
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size",
                   help="reviews per batch (default 50)")
    p.add_argument("--steps", type=int, default=None,
                   help="tokens per epoch slice (default 8)")
    p.add_argument("--max-len", type=int, default=None, dest="max_len",
                   help="padded review length (default 88)")
    p.add_argument("--eval-every", type=int, default=None, dest="eval_every",
                   help="epochs between accuracy evaluations (default 1)")
    p.add_argument("--mask-pad-slices", type=_bool, default=None,
                   dest="mask_pad_slices", metavar="{true,false}",
                   help="exclude all-pad prediction points from the loss (default false)")
    p.add_argument("--truncation", choices=("per_slice", "full_sequence"),
                   default=None, help="BPTT truncation mode (default per_slice)")
    if tune:
        p.add_argument("--lr-grid", type=_floats, default=None, dest="lr_grid",
                       help="comma-separated learning rates")
        p.add_argument("--l2-grid", type=_floats, default=None, dest="l2_grid",
                       help="comma-separated L2 weights")
        p.add_argument("--keep-grid", type=_floats, default=None, dest="keep_grid",
                       help="comma-separated keep probabilities")
        p.add_argument("--jobs", type=int, default=None,
                       help="parallel grid workers (default 1)")


_CFG_FIELD_NAMES = (
    "seed", "arch", "classes", "padded", "lr", "l2", "keep_prob", "epochs",
    "batch_size", "steps", "max_len", "eval_every", "mask_pad_slices",
    "truncation", "min_tokens", "max_tokens", "min_freq", "resample",
    "n_target", "ratios", "lr_grid", "l2_grid", "keep_grid", "jobs",
)


def _config_from(args) -> CliConfig:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {
        name: getattr(args, name)
        for name in _CFG_FIELD_NAMES
        if hasattr(args, name)
    }
    return merge_config(file_values, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slicernn",
                     description="Epoch-slice RNN / GRU review-score classifiers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="ingest a reviews CSV into a prepared dataset",
                       parents=[], description="Parse, tokenize, length-filter, "
                       "resample, split, build the vocabulary, and encode.")
    p.add_argument("csv", type=Path, help="input reviews CSV (Score,Text columns)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--min-tokens", type=int, default=None, dest="min_tokens",
                   help="length filter lower bound (default 75)")
    p.add_argument("--max-tokens", type=int, default=None, dest="max_tokens",
                   help="length filter upper bound (default 87)")
    p.add_argument("--resample", choices=("none", "drop_top", "subsample"),
                   default=None, help="skew correction (default none)")
    p.add_argument("--n-target", type=int, default=None, dest="n_target",
                   help="subsample target per class 4/5 (default 4000)")
    p.add_argument("--min-freq", type=int, default=None, dest="min_freq",
                   help="vocabulary frequency cutoff (default 1)")
    p.add_argument("--ratios", type=_floats, default=None,
                   help="train,val,test split ratios (default 0.8,0.1,0.1)")
    _add_common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one model on a prepared dataset")
    p.add_argument("data", type=Path, help="prepared dataset directory")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--preset", choices=sorted(PRESETS), default=None,
                   help="named optimal setting (overrides arch/classes/lr/l2/keep)")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="grid-search lr, L2 and keep probability")
    p.add_argument("data", type=Path, help="prepared dataset directory")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _add_common(p, tune=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a prepared split")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("data", type=Path, help="prepared dataset directory")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", type=Path, default=None,
                   help="write the confusion matrix CSV here")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck",
                       help="check hand-derived gradients against finite differences")
    p.add_argument("--eps", type=float, default=1e-5, help="finite-difference step")
    p.add_argument("--tol", type=float, default=1e-5, help="max relative error")
    p.add_argument("--vocab-size", type=int, default=20, dest="vocab_size")
    p.add_argument("--embed-dim", type=int, default=6, dest="embed_dim_gc")
    p.add_argument("--hidden-dim", type=int, default=8, dest="hidden_dim_gc")
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--slices", type=int, default=2)
    p.add_argument("--instance-seed", type=int, default=23, dest="instance_seed",
                   help="seed for the random instance; the default keeps every "
                   "checked coordinate large enough that central differences "
                   "at eps=1e-5 are not roundoff-dominated")
    _add_common(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("inspect", help="dump per-class mean EOS hidden states")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("data", type=Path, help="prepared dataset directory")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--epoch-tag", default="final", dest="epoch_tag",
                   help="tag recorded in the dump (default final)")
    p.add_argument("--out", type=Path, required=True, help="output CSV path")
    _add_common(p)
    p.set_defaults(func=cmd_inspect)

    return parser


def cmd_prepare(args) -> int:
    cfg = _config_from(args)
    reviews, report = corpus.parse_reviews_csv(args.csv)
    print(f"rows read: {report.rows_read}  skipped: {report.rows_skipped}")
    for problem in report.problems[:10]:
        print(f"  {problem}", file=sys.stderr)
    filtered = corpus.filter_by_length(reviews, cfg.min_tokens, cfg.max_tokens)
    print(f"kept after length filter [{cfg.min_tokens},{cfg.max_tokens}]: "
          f"{len(filtered)}")
    if cfg.resample == "drop_top":
        resampled = corpus.resample_drop_top(filtered)
    elif cfg.resample == "subsample":
        resampled = corpus.resample_subsample(
            filtered, cfg.n_target, Rng(derive_seed(cfg.seed, 10)))
    else:
        resampled = filtered
    hist = corpus.class_histogram(resampled)
    print("class histogram: " + " ".join(
        f"{c}:{hist.counts[c]}" for c in sorted(hist.counts)))
    train_r, val_r, test_r = corpus.split(
        resampled, cfg.ratios, Rng(derive_seed(cfg.seed, 11)))
    vocab = corpus.build_vocab(
        [corpus.tokenize(r.text) for r in train_r], cfg.min_freq)

    def encode(r):
        if cfg.padded:
            return corpus.encode_pad(r, vocab, cfg.max_len)
        return corpus.encode_unpadded(r, vocab)

    args.out.mkdir(parents=True, exist_ok=True)
    corpus.write_prepared(args.out / "train.tsv", [encode(r) for r in train_r])
    corpus.write_prepared(args.out / "val.tsv", [encode(r) for r in val_r])
    corpus.write_prepared(args.out / "test.tsv", [encode(r) for r in test_r])
    corpus.write_vocab(args.out / "vocab.txt", vocab)
    corpus.write_histogram_csv(args.out / "histogram.csv", hist)
    print(f"split sizes: train={len(train_r)} val={len(val_r)} test={len(test_r)}")
    print(f"vocabulary size: {len(vocab)}")
    print(f"wrote prepared dataset to {args.out}")
    return EXIT_OK


def _apply_preset(cfg: CliConfig, preset: str | None) -> CliConfig:
    if preset is None:
        return cfg
    values = PRESETS[preset]
    cfg.arch = values["arch"]
    cfg.classes = values["num_classes"]
    cfg.lr = values["lr"]
    cfg.l2 = values["l2"]
    cfg.keep_prob = values["keep_prob"]
    if cfg.classes == 4:
        cfg.resample = "drop_top"
    return cfg


def cmd_train(args) -> int:
    cfg = _apply_preset(_config_from(args), args.preset)
    data = load_prepared_dir(args.data)
    result = train(cfg.train_config(), data, log=True)
    args.out.mkdir(parents=True, exist_ok=True)
    result.metrics.to_csv(args.out / "metrics.csv")
    save_checkpoint(result.snapshots["epoch0"], args.out / "checkpoint-epoch0.ckpt")
    save_checkpoint(result.snapshots["final"], args.out / "checkpoint-final.ckpt")
    print(f"wrote metrics and checkpoints to {args.out}")
    if result.diverged:
        print("training diverged (non-finite loss)", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = _config_from(args)
    data = load_prepared_dir(args.data)
    table = grid_search(cfg.train_config(), cfg.lr_grid, cfg.l2_grid,
                        cfg.keep_grid, data, jobs=cfg.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    table.to_csv(args.out / "tuning.csv")
    best = table.rows[0]
    print(f"best: lr={best.lr} l2={best.l2} keep_prob={best.keep_prob} "
          f"val_acc={best.val_acc:.4f} (epoch {best.best_epoch})")
    print(f"wrote {args.out / 'tuning.csv'}")
    return EXIT_OK


def _select_split(data, name):
    return {"train": data.train, "val": data.val, "test": data.test}[name]


def cmd_eval(args) -> int:
    cfg = _config_from(args)
    params = load_checkpoint(args.checkpoint)
    data = load_prepared_dir(args.data)
    if len(data.vocab) != params.dims.vocab_size:
        raise ConfigError(
            f"checkpoint vocab size {params.dims.vocab_size} does not match "
            f"dataset vocab size {len(data.vocab)}"
        )
    hyper = cfg.train_config().hyper
    report = evaluate(params, _select_split(data, args.split), hyper)
    print(report.summary())
    print("per-class accuracy: " +
          " ".join(f"{v:.4f}" for v in report.per_class))
    if args.out is not None:
        report.to_csv(args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = _config_from(args)
    dims = Dims(
        vocab_size=args.vocab_size,
        embed_dim=args.embed_dim_gc,
        hidden_dim=args.hidden_dim_gc,
        num_classes=cfg.classes,
        steps=cfg.steps,
    )
    hyper = Hyper(lr=cfg.lr, l2=cfg.l2, keep_prob=1.0, seed=cfg.seed,
                  mask_pad_slices=cfg.mask_pad_slices, truncation=cfg.truncation)
    report = gradient_check(cfg.arch, dims, hyper, Rng(args.instance_seed),
                            eps=args.eps, tol=args.tol,
                            batch=args.batch, n_slices=args.slices)
    print(report)
    return EXIT_OK if report.passed else EXIT_GRADCHECK


def cmd_inspect(args) -> int:
    cfg = _config_from(args)
    params = load_checkpoint(args.checkpoint)
    data = load_prepared_dir(args.data)
    hyper = cfg.train_config().hyper
    dump = hidden_dump(params, _select_split(data, args.split), hyper,
                       args.epoch_tag)
    dump.to_csv(args.out)
    print(f"wrote {args.out} (classes: "
          + " ".join(str(int(c)) for c in dump.counts) + " reviews)")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, CheckpointCorruptError, CheckpointVersionError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ArgumentError, StratificationError, LengthError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
