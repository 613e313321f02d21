"""Command-line entry point: build-vocab, train, evaluate, retrieve.

Option precedence is flags > config file (--config, JSON) > built-in
defaults. Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import evaluation
from .cca import CcaModel
from .corpus import (
    CATEGORICAL_ATTRIBUTES,
    Corpus,
    attribute_labels,
    build_label_maps,
    parse_metadata,
    read_split_manifests,
    split_corpus,
    write_split_manifests,
)
from .embedding import AmdModel, CmlModel
from .errors import ArtmatchError
from .text import TextEncoder, Vocabulary, build_comment_vocab, build_title_vocab

DEFAULTS = {
    "model": "cml",
    "arch": "bow",
    "dim": 128,
    "margin": 0.1,
    "alpha": 0.01,
    "lr": 1e-4,
    "batch": 32,
    "epochs": 100,
    "seed": 0,
    "attribute": "type",
    "vocab_cap": None,
    "min_count": 10,
    "split": "test",
    "trials": 1000,
    "k": 10,
    "patience": 20,
    "model_selection": "val_mr",
    "negatives_per_positive": 1,
}


class Settings:
    """Flag / config-file / default resolution."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = {}
        if getattr(args, "config", None):
            with open(args.config, encoding="utf-8") as fh:
                self.config = json.load(fh)

    def get(self, key: str):
        value = getattr(self.args, key, None)
        if value is not None:
            return value
        if key in self.config:
            return self.config[key]
        return DEFAULTS.get(key)


def _load_corpus_and_splits(settings: Settings) -> dict[str, Corpus]:
    metadata = settings.get("metadata")
    corpus, diagnostics = parse_metadata(Path(metadata).read_bytes())
    if diagnostics.rejected:
        shown = ", ".join(str(r) for r in diagnostics.rejected_rows[:10])
        if len(diagnostics.rejected_rows) > 10:
            shown += ", ..."
        print(
            f"note: rejected {diagnostics.rejected} metadata row(s) with empty "
            f"comment/title (rows {shown})",
            file=sys.stderr,
        )
    splits_dir = settings.get("splits")
    if splits_dir:
        return read_split_manifests(corpus, splits_dir)
    train, val, test = split_corpus(corpus, seed=int(settings.get("seed")))
    return {"train": train, "val": val, "test": test}


def _load_encoder(settings: Settings, train: Corpus) -> TextEncoder:
    """Vocabularies from --vocabs dir when present, else built from train."""
    encoder = TextEncoder(
        min_count=int(settings.get("min_count")),
        cap=None if settings.get("vocab_cap") is None else int(settings.get("vocab_cap")),
    )
    vocab_dir = settings.get("vocabs")
    if vocab_dir:
        vocab_dir = Path(vocab_dir)
        encoder.comment_vocab_ = Vocabulary.load(vocab_dir / "comment_vocab.txt")
        encoder.title_vocab_ = Vocabulary.load(vocab_dir / "title_vocab.txt")
    else:
        encoder.fit(train)
    return encoder


def _load_store(settings: Settings):
    from .features import load_feature_file

    return load_feature_file(settings.get("features"))


def _feature_matrix(store, corpus: Corpus) -> np.ndarray:
    return store.matrix([s.image_ref for s in corpus])


def _validation_problems(settings: Settings, command: str, need_features: bool | None = None) -> list[str]:
    problems = []

    def need_path(key):
        value = settings.get(key)
        if not value:
            problems.append(f"--{key} is required")
        elif not Path(value).exists():
            problems.append(f"--{key} path does not exist: {value}")

    need_path("metadata")
    if need_features is None:
        need_features = command in ("train", "evaluate", "retrieve")
    if need_features:
        need_path("features")
    if command == "train":
        model = settings.get("model")
        if model not in ("cca", "cml", "amd"):
            problems.append(f"--model must be cca, cml, or amd (got {model!r})")
        if settings.get("arch") not in ("bow", "mlp"):
            problems.append(f"--arch must be bow or mlp (got {settings.get('arch')!r})")
        if int(settings.get("dim")) < 1:
            problems.append("--dim must be positive")
        if not 0.0 <= float(settings.get("margin")) < 1.0:
            problems.append("--margin must lie in [0, 1)")
        if not 0.0 <= float(settings.get("alpha")) < 0.5:
            problems.append("--alpha must lie in [0, 0.5)")
        if int(settings.get("batch")) < 2:
            problems.append("--batch must be >= 2")
        if int(settings.get("epochs")) < 1:
            problems.append("--epochs must be >= 1")
        if model == "amd" and settings.get("attribute") not in CATEGORICAL_ATTRIBUTES:
            problems.append(
                f"--attribute must be one of {CATEGORICAL_ATTRIBUTES} "
                f"(got {settings.get('attribute')!r})"
            )
    return problems


def cmd_build_vocab(args) -> int:
    settings = Settings(args)
    problems = _validation_problems(settings, "build-vocab")
    if problems:
        print("\n".join(problems), file=sys.stderr)
        return 2
    splits = _load_corpus_and_splits(settings)
    train = splits["train"]
    cap = settings.get("vocab_cap")
    comment_vocab = build_comment_vocab(
        train, min_count=int(settings.get("min_count")),
        cap=None if cap is None else int(cap),
    )
    title_vocab = build_title_vocab(train)
    out = Path(settings.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    comment_vocab.save(out / "comment_vocab.txt")
    title_vocab.save(out / "title_vocab.txt")
    if settings.get("splits") is None:
        write_split_manifests(splits, out / "splits")
    print(f"comment vocabulary: {len(comment_vocab)} terms")
    print(f"title vocabulary: {len(title_vocab)} terms")
    return 0


def cmd_train(args) -> int:
    settings = Settings(args)
    problems = _validation_problems(settings, "train")
    if problems:
        print("\n".join(problems), file=sys.stderr)
        return 2

    splits = _load_corpus_and_splits(settings)
    train, val = splits["train"], splits["val"]
    encoder = _load_encoder(settings, train)
    store = _load_store(settings)
    Y_train = encoder.transform(train)
    X_train = _feature_matrix(store, train)
    validation = None
    if len(val) > 0:
        validation = (_feature_matrix(store, val), encoder.transform(val))

    model_kind = settings.get("model")
    patience = settings.get("patience")
    if patience is not None:
        patience = int(patience)
        if patience <= 0:
            patience = None
    common = dict(
        dim=int(settings.get("dim")),
        margin=float(settings.get("margin")),
        lr=float(settings.get("lr")),
        batch_size=int(settings.get("batch")),
        epochs=int(settings.get("epochs")),
        seed=int(settings.get("seed")),
        arch=settings.get("arch"),
        comment_dim=encoder.comment_dim_ if settings.get("arch") == "mlp" else None,
        patience=patience,
        model_selection=settings.get("model_selection"),
        negatives_per_positive=int(settings.get("negatives_per_positive")),
    )
    if model_kind == "cca":
        model = CcaModel(n_components=int(settings.get("dim")))
        model.fit(X_train, Y_train)
        history = []
    elif model_kind == "cml":
        model = CmlModel(**common)
        model.fit(X_train, Y_train, validation=validation)
        history = model.history_
    else:
        attribute = settings.get("attribute")
        label_map = build_label_maps(train, attribute)
        labels = attribute_labels(train, attribute, label_map)
        model = AmdModel(alpha=float(settings.get("alpha")), **common)
        model.fit(X_train, Y_train, labels=labels, validation=validation)
        history = model.history_

    out = Path(settings.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    ckpt.save_model(model, out / "checkpoint.amck")
    ckpt.write_history(history, out / "history.csv")
    encoder.comment_vocab_.save(out / "comment_vocab.txt")
    encoder.title_vocab_.save(out / "title_vocab.txt")
    if settings.get("splits") is None:
        write_split_manifests(splits, out / "splits")
    if history:
        print(
            f"trained {model_kind} for {len(history)} epoch(s); "
            f"kept epoch {model.best_epoch_}"
        )
    else:
        print(f"fitted {model_kind} on {len(train)} pairs")
    print(f"checkpoint: {out / 'checkpoint.amck'}")
    return 0


def _project_split(model, X: np.ndarray, Y: np.ndarray):
    if isinstance(model, CcaModel):
        return model.transform(Y=Y), model.transform(X=X)
    return model.project_texts(Y), model.project_images(X)


def cmd_evaluate(args) -> int:
    settings = Settings(args)
    problems = _validation_problems(
        settings, "evaluate", need_features=not args.random_baseline
    )
    if not args.random_baseline and not settings.get("checkpoint"):
        problems.append("--checkpoint is required unless --random-baseline is given")
    if problems:
        print("\n".join(problems), file=sys.stderr)
        return 2

    splits = _load_corpus_and_splits(settings)
    part = splits[settings.get("split")]
    if args.random_baseline:
        reports = evaluation.random_baseline(
            n=len(part), trials=int(settings.get("trials")), seed=int(settings.get("seed"))
        )
        name = "random"
        pool_report = None
        if settings.get("pool"):
            rng = np.random.default_rng(int(settings.get("seed")))
            scores = rng.random((len(part), len(part)))
            pool_report = _run_pool(settings, part, scores)
    else:
        model = ckpt.load_model(settings.get("checkpoint"))
        vocab_dir = settings.get("vocabs") or str(Path(settings.get("checkpoint")).parent)
        settings.config["vocabs"] = vocab_dir
        encoder = _load_encoder(settings, splits["train"])
        Y = encoder.transform(part)
        X = _feature_matrix(_load_store(settings), part)
        p_text, p_vis = _project_split(model, X, Y)
        scores = evaluation.score_all(p_text, p_vis)
        reports = evaluation.evaluate_scores(scores)
        name = type(model).__name__.replace("Model", "").lower()
        pool_report = _run_pool(settings, part, scores) if settings.get("pool") else None

    print(evaluation.report_table(name, reports))
    if pool_report is not None:
        print(
            f"pool task ({pool_report.level}): accuracy {pool_report.accuracy:.3f} "
            f"over {pool_report.n_answered} queries ({pool_report.n_skipped} skipped)"
        )
        for type_value, acc in pool_report.per_type.items():
            print(f"  {type_value}: {acc:.3f}")
    out = settings.get("out")
    if out:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(
            evaluation.report_csv(reports, pool_report), encoding="utf-8"
        )
        print(f"report: {out / 'report.csv'}")
    return 0


def _run_pool(settings: Settings, part: Corpus, scores: np.ndarray):
    task = evaluation.PoolTask(
        level=settings.get("pool"),
        n_queries=int(settings.get("pool_queries") or 100),
        seed=int(settings.get("seed")),
    )
    type_values = [s.attributes.type_ for s in part]
    return evaluation.pool_eval(scores, type_values, task)


def cmd_retrieve(args) -> int:
    settings = Settings(args)
    problems = _validation_problems(settings, "retrieve")
    if not settings.get("checkpoint"):
        problems.append("--checkpoint is required")
    if bool(args.query) == bool(args.image_id):
        problems.append("exactly one of --query or --image-id is required")
    if args.query is not None and not args.query.strip():
        problems.append("--query must be non-empty text")
    if problems:
        print("\n".join(problems), file=sys.stderr)
        return 2

    splits = _load_corpus_and_splits(settings)
    part = splits[settings.get("split")]
    model = ckpt.load_model(settings.get("checkpoint"))
    vocab_dir = settings.get("vocabs") or str(Path(settings.get("checkpoint")).parent)
    settings.config["vocabs"] = vocab_dir
    encoder = _load_encoder(settings, splits["train"])
    k = min(int(settings.get("k")), len(part))

    store = _load_store(settings)
    if args.query:
        encoded = encoder.encode_sample(args.query, args.title or "")
        if encoded.nnz == 0:
            print(
                "warning: query has no in-vocabulary tokens; the encoded query "
                "is the zero vector and scores carry no signal",
                file=sys.stderr,
            )
        Y = encoded.to_dense()[None, :]
        X = _feature_matrix(store, part)
        p_text, p_vis = _project_split(model, X, Y)
        scores = (p_text @ p_vis.T)[0]
        ids = [s.id for s in part]
    else:
        ids = [s.id for s in part]
        if args.image_id not in set(s.image_ref for s in part) and args.image_id not in ids:
            print(f"image id {args.image_id!r} not found in split", file=sys.stderr)
            return 1
        X = _feature_matrix(store, part)
        Y = encoder.transform(part)
        p_text, p_vis = _project_split(model, X, Y)
        row = [i for i, s in enumerate(part) if s.id == args.image_id or s.image_ref == args.image_id][0]
        scores = (p_text @ p_vis[row : row + 1].T)[:, 0]

    order = np.argsort(-scores, kind="stable")[:k]
    for i in order:
        print(f"{ids[int(i)]},{scores[int(i)]:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="artmatch",
        description="Cross-modal retrieval between paintings and artistic texts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--metadata", help="metadata CSV path")
        p.add_argument("--splits", help="directory of train/val/test id manifests")
        p.add_argument("--config", help="JSON config file (flags take precedence)")
        p.add_argument("--seed", type=int, help="random seed (default 0)")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("build-vocab", help="build comment/title vocabularies")
    common(p)
    p.add_argument("--vocab-cap", dest="vocab_cap", type=int, help="cap comment vocabulary size")
    p.add_argument("--min-count", dest="min_count", type=int, help="comment document-frequency floor (default 10)")
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("train", help="train a retrieval model")
    common(p)
    p.add_argument("--features", help="SEMF feature file")
    p.add_argument("--vocabs", help="directory with comment_vocab.txt/title_vocab.txt")
    p.add_argument("--vocab-cap", dest="vocab_cap", type=int)
    p.add_argument("--min-count", dest="min_count", type=int)
    p.add_argument("--model", choices=["cca", "cml", "amd"])
    p.add_argument("--arch", choices=["bow", "mlp"])
    p.add_argument("--attribute", help="AMD attribute: type, school, timeframe, or author")
    p.add_argument("--dim", type=int, help="joint space dimension (default 128)")
    p.add_argument("--margin", type=float, help="cosine margin (default 0.1)")
    p.add_argument("--alpha", type=float, help="AMD classifier weight (default 0.01)")
    p.add_argument("--lr", type=float, help="learning rate (default 1e-4)")
    p.add_argument("--batch", type=int, help="mini-batch size (default 32)")
    p.add_argument("--epochs", type=int, help="training epochs (default 100)")
    p.add_argument("--patience", type=int, help="early-stop patience in epochs; <= 0 disables (default 20)")
    p.add_argument("--model-selection", dest="model_selection", choices=["val_mr", "last_epoch"], help="which epoch's weights to keep (default val_mr)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="rank a split and report R@K / median rank")
    common(p)
    p.add_argument("--features", help="SEMF feature file")
    p.add_argument("--vocabs")
    p.add_argument("--checkpoint", help="model checkpoint path")
    p.add_argument("--random-baseline", action="store_true", help="evaluate a uniform-random scorer instead of a checkpoint")
    p.add_argument("--trials", type=int, help="random-baseline trials (default 1000)")
    p.add_argument("--split", choices=["train", "val", "test"])
    p.add_argument("--pool", choices=["easy", "difficult"], help="also run the 10-image pool task")
    p.add_argument("--pool-queries", dest="pool_queries", type=int, help="pool task query count (default 100)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("retrieve", help="rank gallery items for a query")
    common(p)
    p.add_argument("--features")
    p.add_argument("--vocabs")
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=["train", "val", "test"])
    p.add_argument("--query", help="free text to search with")
    p.add_argument("--title", help="optional title text appended to the query encoding")
    p.add_argument("--image-id", dest="image_id", help="image id for image-to-text retrieval")
    p.add_argument("-k", type=int, help="list length (default 10)")
    p.set_defaults(func=cmd_retrieve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ArtmatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
