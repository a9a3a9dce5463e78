"""Command-line entry point.

Subcommands: train, evaluate, predict, transfer, embed, cluster,
gradcheck. Exit codes: 0 success, 1 usage error, 2 data error,
3 numeric failure.

Heavy imports happen after --threads is known so that `--threads 1` can
pin the BLAS thread pools (environment variables must be set before
numpy loads); single-threaded runs are bitwise reproducible from their
manifest.
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _apply_thread_limit(argv: list[str]) -> None:
    """Pin BLAS pools when --threads is given (flag or config file).
    Must run before numpy is imported anywhere in this process."""
    threads = 0
    config_path = None
    for i, arg in enumerate(argv):
        if arg == "--threads" and i + 1 < len(argv):
            threads = int(argv[i + 1]) if argv[i + 1].isdigit() else 0
        elif arg.startswith("--threads="):
            tail = arg.split("=", 1)[1]
            threads = int(tail) if tail.isdigit() else 0
        elif arg == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif arg.startswith("--config="):
            config_path = arg.split("=", 1)[1]
    if threads == 0 and config_path and os.path.exists(config_path):
        import configparser

        parser = configparser.ConfigParser()
        try:
            parser.read(config_path, encoding="utf-8")
            threads = parser.getint("run", "threads", fallback=0)
        except (configparser.Error, ValueError):
            pass
    if threads > 0:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(threads)


def _build_parser() -> _Parser:
    parser = _Parser(prog="charnet",
                     description="Character-level document classification")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(p, with_train=False):
        p.add_argument("--config", help="INI config file (flags override it)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="run seed")
        p.add_argument("--threads", type=int,
                       help="BLAS thread cap; 1 gives bitwise-reproducible runs")
        p.add_argument("--max-chars", type=int, dest="max_chars")
        p.add_argument("--max-sentences", type=int, dest="max_sentences")
        if with_train:
            p.add_argument("--data", help="training dataset path")
            p.add_argument("--format", dest="data_format",
                           choices=["csv", "jsonl"], help="dataset format")
            p.add_argument("--val", dest="val_path", help="validation dataset path")
            p.add_argument("--epochs", type=int)
            p.add_argument("--batch-size", type=int, dest="batch_size")
            p.add_argument("--learning-rate", type=float, dest="learning_rate")
            p.add_argument("--balance", type=int, dest="balance_per_class",
                           help="balanced samples per class before training")

    p = sub.add_parser("train", help="train a classifier from scratch")
    common(p, with_train=True)
    p.add_argument("--scale", type=float, help="width multiplier in (0, 1]")
    p.add_argument("--head", choices=["sigmoid", "softmax"])

    p = sub.add_parser("evaluate", help="metrics of a checkpoint on a dataset")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--format", dest="data_format", choices=["csv", "jsonl"])
    p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("predict", help="per-class probabilities for documents")
    common(p)
    p.add_argument("--checkpoint", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--text", help="classify one document given inline")
    src.add_argument("--input", help="dataset file of documents")
    p.add_argument("--format", dest="data_format", choices=["csv", "jsonl"])

    p = sub.add_parser("transfer", help="widen a checkpoint to a new label space")
    common(p, with_train=True)
    p.add_argument("--from", dest="source", required=True,
                   help="source checkpoint")
    p.add_argument("--classes", type=int, required=True,
                   help="new number of classes")
    p.add_argument("--freeze", default="encoder",
                   help="comma-separated block-name prefixes; '' for none")

    p = sub.add_parser("embed", help="extract document feature vectors")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--format", dest="data_format", choices=["csv", "jsonl"])

    p = sub.add_parser("cluster", help="t-SNE map and silhouette of embeddings")
    common(p)
    p.add_argument("--embeddings", help="embeddings CSV from `charnet embed`")
    p.add_argument("--checkpoint", help="extract embeddings from this checkpoint")
    p.add_argument("--data", help="dataset to embed (with --checkpoint)")
    p.add_argument("--format", dest="data_format", choices=["csv", "jsonl"])
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--learning-rate", type=float, dest="tsne_lr", default=200.0)

    p = sub.add_parser("gradcheck", help="finite-difference check of the "
                                         "full stack's gradients")
    common(p)
    p.add_argument("--scale", type=float, default=0.05)
    p.add_argument("--draws", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-3)
    return parser


def _merge_config(args) -> "RunConfig":
    from .config import RunConfig, load_config

    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        "out": "outdir", "seed": "seed", "threads": "threads",
        "max_chars": "max_chars", "max_sentences": "max_sentences",
        "data": "train_path", "data_format": "data_format",
        "val_path": "val_path", "epochs": "epochs", "batch_size": "batch_size",
        "learning_rate": "learning_rate", "scale": "scale", "head": "head",
        "balance_per_class": "balance_per_class",
    }
    for arg_name, cfg_name in overrides.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            setattr(cfg, cfg_name, value)
    return cfg


def _prepare_outdir(cfg, argv) -> str:
    from .config import write_manifest

    os.makedirs(cfg.outdir, exist_ok=True)
    if cfg.train_path:
        cfg.train_path = os.path.abspath(cfg.train_path)
    if cfg.val_path:
        cfg.val_path = os.path.abspath(cfg.val_path)
    write_manifest(cfg, os.path.join(cfg.outdir, "manifest.cfg"), argv)
    return cfg.outdir


def _load_labeled(path, fmt, balance=None, seed=0):
    from .data import balance_sample, load_dataset

    data = load_dataset(path, fmt)
    if balance:
        data = balance_sample(data, balance, seed)
    return data


def _split_train_val(data, fraction: float, seed: int):
    from .data import LabeledDataset
    from .rng import RngStream

    if fraction <= 0 or len(data) < 2:
        return data, None
    order = RngStream(seed).child("split").permutation(len(data))
    n_val = max(1, int(round(len(data) * fraction)))
    val_idx = set(order[:n_val].tolist())
    train = [r for i, r in enumerate(data.records) if i not in val_idx]
    val = [data.records[i] for i in sorted(val_idx)]
    return (LabeledDataset(train, list(data.label_vocab)),
            LabeledDataset(val, list(data.label_vocab)))


def _hyperparams(cfg):
    from .training import Hyperparams

    return Hyperparams(
        learning_rate=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2,
        epsilon=cfg.epsilon, batch_size=cfg.batch_size, epochs=cfg.epochs,
        seed=cfg.seed, early_stop_patience=cfg.early_stop_patience)


def _emit_training_outputs(outdir, model, history, val_set):
    from .checkpoint import save_checkpoint
    from .metrics import evaluate
    from .reports import (format_metrics_text, plot_convergence, plot_roc,
                          write_history_csv, write_metrics_csv, write_roc_csv)

    save_checkpoint(model, os.path.join(outdir, "checkpoint.ckpt"))
    write_history_csv(history, os.path.join(outdir, "history.csv"))
    plot_convergence(history, os.path.join(outdir, "convergence.svg"))
    if val_set is not None and len(val_set):
        metrics = evaluate(model, val_set)
        write_metrics_csv(metrics, os.path.join(outdir, "metrics.csv"))
        write_roc_csv(metrics.roc_points, os.path.join(outdir, "roc.csv"))
        plot_roc(metrics.roc_points, metrics.auc, os.path.join(outdir, "roc.svg"))
        print(format_metrics_text(metrics), end="")


def _cmd_train(args, argv) -> int:
    from .encoding import EncodingConfig
    from .model import Model, build_default_spec
    from .training import train

    cfg = _merge_config(args)
    data = _load_labeled(cfg.train_path, cfg.data_format,
                         cfg.balance_per_class, cfg.seed)
    if cfg.val_path:
        val_set = _load_labeled(cfg.val_path, cfg.data_format)
        train_set = data
    else:
        train_set, val_set = _split_train_val(data, cfg.val_fraction, cfg.seed)
    outdir = _prepare_outdir(cfg, argv)
    encoding = EncodingConfig(cfg.max_chars, cfg.max_sentences, cfg.lowercase)
    spec = build_default_spec(max(2, len(data.label_vocab)), encoding,
                              cfg.scale, cfg.head)
    model = Model.initialize(spec, cfg.seed)
    model, history = train(model, train_set, val_set, _hyperparams(cfg))
    _emit_training_outputs(outdir, model, history, val_set)
    print(f"trained {len(train_set)} docs for {len(history)} epochs; "
          f"artifacts in {outdir}")
    return EXIT_OK


def _cmd_evaluate(args, argv) -> int:
    from .checkpoint import load_checkpoint
    from .metrics import evaluate
    from .reports import (format_metrics_text, plot_roc, write_metrics_csv,
                          write_roc_csv)

    cfg = _merge_config(args)
    model = load_checkpoint(args.checkpoint)
    data = _load_labeled(args.data, cfg.data_format)
    outdir = _prepare_outdir(cfg, argv)
    metrics = evaluate(model, data, args.threshold)
    write_metrics_csv(metrics, os.path.join(outdir, "metrics.csv"))
    write_roc_csv(metrics.roc_points, os.path.join(outdir, "roc.csv"))
    plot_roc(metrics.roc_points, metrics.auc, os.path.join(outdir, "roc.svg"))
    print(format_metrics_text(metrics), end="")
    return EXIT_OK


def _read_texts(path, fmt):
    """Documents (id, text) from a dataset file; labels optional."""
    import csv as _csv
    import json as _json

    from .errors import DataError

    if not os.path.exists(path):
        raise DataError(f"input file not found: {path}")
    texts = []
    if fmt == "csv":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = _csv.DictReader(fh)
            if reader.fieldnames is None or "text" not in reader.fieldnames:
                raise DataError(f"{path}: expected a header with a 'text' column")
            for row in reader:
                texts.append(row["text"])
    elif fmt == "jsonl":
        with open(path, "r", encoding="utf-8") as fh:
            for line_num, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = _json.loads(line)
                except _json.JSONDecodeError as exc:
                    raise DataError(f"{path}: line {line_num}: {exc}") from exc
                texts.append(str(obj.get("text", "")))
    else:
        raise DataError(f"unknown input format {fmt!r}")
    return texts


def _cmd_predict(args, argv) -> int:
    import numpy as np

    from .checkpoint import load_checkpoint
    from .model import predict_probs

    cfg = _merge_config(args)
    model = load_checkpoint(args.checkpoint)
    if args.out:  # predictions go to stdout; manifest only on request
        _prepare_outdir(cfg, argv)
    if args.text is not None:
        texts = [args.text]
    else:
        texts = _read_texts(args.input, cfg.data_format)
    enc = model.spec.encoding
    if texts:
        grids = np.stack([model.encode_text(t) for t in texts])
    else:
        grids = np.zeros((0, enc.max_sentences, enc.max_chars), dtype=np.int16)
    probs = predict_probs(model, grids)
    labels = model.label_vocab or [f"class{i}" for i in range(model.spec.n_classes)]
    out = sys.stdout
    out.write("id," + ",".join(labels) + "\n")
    for i, row in enumerate(probs):
        out.write(str(i) + "," + ",".join(format(p, ".9g") for p in row) + "\n")
    return EXIT_OK


def _cmd_transfer(args, argv) -> int:
    from .checkpoint import load_checkpoint, save_checkpoint
    from .transfer import FreezeSpec, fine_tune, freeze, replace_head

    cfg = _merge_config(args)
    source = load_checkpoint(args.source)
    model = replace_head(source, args.classes, cfg.seed)
    mask = (freeze(model, FreezeSpec.parse(args.freeze))
            if args.freeze.strip() else frozenset())
    outdir = _prepare_outdir(cfg, argv)
    if cfg.train_path:
        data = _load_labeled(cfg.train_path, cfg.data_format,
                             cfg.balance_per_class, cfg.seed)
        if cfg.val_path:
            val_set = _load_labeled(cfg.val_path, cfg.data_format)
            train_set = data
        else:
            train_set, val_set = _split_train_val(data, cfg.val_fraction, cfg.seed)
        model, history = fine_tune(model, mask, train_set, _hyperparams(cfg),
                                   val_set)
        _emit_training_outputs(outdir, model, history, val_set)
        print(f"fine-tuned on {len(train_set)} docs for {len(history)} epochs "
              f"({len(mask)} frozen blocks); artifacts in {outdir}")
    else:
        save_checkpoint(model, os.path.join(outdir, "checkpoint.ckpt"))
        print(f"wrote {args.classes}-class checkpoint (head reinitialized, "
              f"no fine-tuning data given) to {outdir}")
    return EXIT_OK


def _cmd_embed(args, argv) -> int:
    from .checkpoint import load_checkpoint
    from .embedding import extract_embeddings
    from .reports import write_embeddings_csv

    cfg = _merge_config(args)
    model = load_checkpoint(args.checkpoint)
    data = _load_labeled(args.data, cfg.data_format)
    outdir = _prepare_outdir(cfg, argv)
    embeddings = extract_embeddings(model, data)
    label_names = model.label_vocab or data.label_vocab
    write_embeddings_csv(embeddings, label_names,
                         os.path.join(outdir, "embeddings.csv"))
    print(f"wrote {len(embeddings)} x {embeddings.matrix.shape[1]} embeddings "
          f"to {outdir}/embeddings.csv")
    return EXIT_OK


def _read_embeddings_csv(path):
    import csv as _csv

    import numpy as np

    from .embedding import EmbeddingSet
    from .errors import DataError

    if not os.path.exists(path):
        raise DataError(f"embeddings file not found: {path}")
    ids, labels, rows = [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["id", "label"]:
            raise DataError(f"{path}: expected header id,label,f0,...")
        for row in reader:
            ids.append(row[0])
            labels.append(row[1])
            rows.append([float(v) for v in row[2:]])
    matrix = np.asarray(rows, dtype=np.float32)
    named = sorted(set(l for l in labels if l))
    label_ids = [named.index(l) if l else -1 for l in labels] if named else None
    return EmbeddingSet(matrix, label_ids, ids), (labels if named else None)


def _cmd_cluster(args, argv) -> int:
    from .embedding import extract_embeddings, silhouette
    from .errors import DataError
    from .reports import plot_scatter, write_coords_csv
    from .tsne import TsneConfig, tsne

    cfg = _merge_config(args)
    if args.embeddings:
        embeddings, label_names = _read_embeddings_csv(args.embeddings)
    elif args.checkpoint and args.data:
        from .checkpoint import load_checkpoint

        model = load_checkpoint(args.checkpoint)
        data = _load_labeled(args.data, cfg.data_format)
        embeddings = extract_embeddings(model, data)
        vocab = model.label_vocab or data.label_vocab
        label_names = [vocab[l] if 0 <= l < len(vocab) else ""
                       for l in embeddings.labels]
    else:
        raise DataError("cluster needs --embeddings or --checkpoint with --data")
    outdir = _prepare_outdir(cfg, argv)
    tsne_cfg = TsneConfig(perplexity=args.perplexity, iterations=args.iterations,
                          learning_rate=args.tsne_lr, seed=cfg.seed)
    coords = tsne(embeddings, tsne_cfg)
    write_coords_csv(embeddings.ids, coords, label_names,
                     os.path.join(outdir, "coords.csv"))
    plot_scatter(coords, label_names, os.path.join(outdir, "scatter.svg"))
    if label_names and len(set(label_names)) > 1:
        score = silhouette(coords, label_names)
        print(f"silhouette over {len(coords)} points: {score:.4f}")
    else:
        print(f"embedded {len(coords)} unlabeled points")
    print(f"artifacts in {outdir}")
    return EXIT_OK


def _cmd_gradcheck(args, argv) -> int:
    from .encoding import EncodingConfig
    from .gradcheck import end_to_end_grad_check

    cfg = _merge_config(args)
    if args.out:
        _prepare_outdir(cfg, argv)
    encoding = EncodingConfig(
        max_chars=args.max_chars or 10,
        max_sentences=args.max_sentences or 2,
    )
    worst = end_to_end_grad_check(scale=args.scale, encoding=encoding,
                                  draws=args.draws, seed=cfg.seed)
    print(f"max relative error over {args.draws} draws: {worst:.3e} "
          f"(tolerance {args.tolerance:g})")
    return EXIT_OK if worst < args.tolerance else EXIT_NUMERIC


_COMMANDS = {
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "transfer": _cmd_transfer,
    "embed": _cmd_embed,
    "cluster": _cmd_cluster,
    "gradcheck": _cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _apply_thread_limit(argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    from .errors import CheckpointError, DataError, NumericError, ShapeError

    try:
        return _COMMANDS[args.command](args, argv)
    except (DataError, CheckpointError, ShapeError) as exc:
        print(f"charnet {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"charnet {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
