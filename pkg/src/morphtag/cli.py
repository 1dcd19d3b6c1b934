"""Command-line interface: ``morphtag {train,tag,evaluate,stats,experiment}``.

Exit codes: 0 success, 2 usage or configuration error, 3 data or alignment
error, 4 numeric divergence during training.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from .config import TrainConfig, coerce_field
from .corpus import (ConlluError, build_schema, build_vocab, corpus_stats, format_feats,
                     load_vectors, read_conllu)
from .evaluation import (AlignmentError, evaluate, stability_summary, table2_header,
                         table2_row)
from .training import (ModelFormatError, TrainingDiverged, load_model, save_model, train,
                       write_epoch_log)

DATA_DIR_ENV = "MORPHTAG_DATA_DIR"
PATH_KEYS = ("train_path", "dev_path", "test_path", "vectors_path", "model_path", "log_path")
CONFIG_KEYS = tuple(f.name for f in fields(TrainConfig)) + PATH_KEYS

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ config


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        if key not in CONFIG_KEYS:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def parse_overrides(tokens: list[str]) -> dict[str, str]:
    out = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--"):
            raise UsageError(f"unexpected argument {tok!r}")
        key, sep, value = tok[2:].partition("=")
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise UsageError(f"unknown option --{key}")
        if not sep:
            try:
                value = next(it)
            except StopIteration:
                raise UsageError(f"--{key} needs a value") from None
        out[key] = value
    return out


def resolve_path(value: str | None) -> Path | None:
    if not value:
        return None
    path = Path(value).expanduser()
    base = os.environ.get(DATA_DIR_ENV)
    if not path.is_absolute() and base:
        path = Path(base) / path
    return path


def build_run(raw: dict[str, str]) -> tuple[TrainConfig, dict[str, Path | None]]:
    cfg_kwargs = {}
    for key, value in raw.items():
        if key in PATH_KEYS:
            continue
        try:
            cfg_kwargs[key] = coerce_field(key, value)
        except ValueError as exc:
            raise UsageError(f"bad value for {key}: {exc}") from None
    try:
        config = TrainConfig(**cfg_kwargs).resolved()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    paths = {k: resolve_path(raw.get(k)) for k in PATH_KEYS}
    return config, paths


def load_run(config_path: str, extra: list[str]) -> tuple[TrainConfig, dict[str, Path | None]]:
    try:
        text = Path(config_path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {config_path}: {exc.strerror}") from None
    raw = parse_config_text(text)
    raw.update(parse_overrides(extra))
    return build_run(raw)


def _require(paths: dict, key: str) -> Path:
    path = paths.get(key)
    if path is None:
        raise UsageError(f"{key} is not set")
    if key != "model_path" and not path.exists():
        raise UsageError(f"{key} does not exist: {path}")
    return path


def _read(path: Path, split: str):
    try:
        return read_conllu(path, split)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


# ---------------------------------------------------------------- commands


def _train_one(config: TrainConfig, paths: dict, model_path: Path, log_path: Path):
    train_c = _read(_require(paths, "train_path"), "train")
    dev_c = _read(_require(paths, "dev_path"), "dev") if paths.get("dev_path") else train_c
    schema, vocab = build_schema(train_c), build_vocab(train_c)
    vectors = None
    if paths.get("vectors_path"):
        vectors = load_vectors(_require(paths, "vectors_path"), config.word_dim,
                               keep=vocab.words[1:])
    result = train(config, train_c, dev_c, schema, vocab, vectors)
    result.model.metadata["paths"] = {k: str(v) for k, v in paths.items() if v is not None}
    save_model(result.model, model_path)
    header = {"config": config.to_dict()}
    write_epoch_log(log_path, [header] + result.epochs)
    return result


def cmd_train(args, extra) -> int:
    config, paths = load_run(args.config, extra)
    model_path = _require(paths, "model_path")
    log_path = paths.get("log_path") or model_path.with_name(model_path.name + ".log.jsonl")
    result = _train_one(config, paths, model_path, log_path)
    print(f"trained {config.decoder_kind.value} for {len(result.epochs)} epochs; "
          f"best dev accuracy {result.state.best_dev_accuracy:.4f}; model -> {model_path}")
    return EXIT_OK


def tag_conllu_text(text: str, model) -> str:
    """Replace UPOS and FEATS of every word line with the model's predictions."""
    from .corpus import parse_conllu

    corpus = parse_conllu(text, "input")
    predictions = [p for sent in model.predict(list(corpus.sentences)) for p in sent]
    out = []
    k = 0
    for line in text.splitlines():
        cols = line.split("\t")
        if line and not line.startswith("#") and len(cols) == 10 and cols[0].isdigit():
            pred = predictions[k]
            k += 1
            cols[3] = pred.pos
            cols[5] = format_feats(pred.feats)
            line = "\t".join(cols)
        out.append(line)
    return "\n".join(out) + "\n"


def cmd_tag(args, extra) -> int:
    if extra:
        raise UsageError(f"unexpected arguments {extra}")
    model = load_model(args.model)
    text = Path(args.input).read_text(encoding="utf-8")
    tagged = tag_conllu_text(text, model)
    if args.output == "-":
        sys.stdout.write(tagged)
    else:
        Path(args.output).write_text(tagged, encoding="utf-8")
    return EXIT_OK


def cmd_evaluate(args, extra) -> int:
    if extra:
        raise UsageError(f"unexpected arguments {extra}")
    model = load_model(args.model)
    gold = _read(Path(args.gold), "gold")
    pred = _read(Path(args.pred), "pred")
    report = evaluate(gold, pred, model.schema, model.vocab)
    row = table2_row(args.dataset, {model.decoder_kind.value: report})
    if args.json:
        Path(args.json).write_text(report.to_json() + "\n", encoding="utf-8")
    if args.tsv:
        Path(args.tsv).write_text(table2_header() + "\n" + row + "\n", encoding="utf-8")
    if not args.json and not args.tsv:
        print(report.to_json())
        print(table2_header())
        print(row)
    return EXIT_OK


def cmd_stats(args, extra) -> int:
    if extra:
        raise UsageError(f"unexpected arguments {extra}")
    train_c = _read(Path(args.train), "train")
    test_c = _read(Path(args.test), "test")
    schema, vocab = build_schema(train_c), build_vocab(train_c)
    vectors = None
    if args.vectors:
        vectors = load_vectors(args.vectors, keep=vocab.words[1:])
    stats = corpus_stats(train_c, test_c, schema, vocab, vectors)
    tsv = stats.tsv_header() + "\n" + stats.tsv_row(args.dataset) + "\n"
    if args.tsv:
        Path(args.tsv).write_text(tsv, encoding="utf-8")
    if args.json:
        Path(args.json).write_text(stats.to_json() + "\n", encoding="utf-8")
    if not args.tsv and not args.json:
        sys.stdout.write(tsv)
        print(stats.to_json())
    return EXIT_OK


def cmd_experiment(args, extra) -> int:
    if len(args.seeds) < 2:
        raise UsageError("experiment needs at least two seeds")
    base, paths = load_run(args.config, extra)
    model_path = _require(paths, "model_path")
    eval_key = "test_path" if paths.get("test_path") else "dev_path"
    gold = _read(_require(paths, eval_key), "test")
    reports = []
    for seed in args.seeds:
        config = TrainConfig.from_dict({**base.to_dict(), "seed": seed}).resolved()
        seeded = model_path.with_name(f"{model_path.name}.seed{seed}")
        result = _train_one(config, paths, seeded, seeded.with_name(seeded.name + ".log.jsonl"))
        report = evaluate(gold, result.model.tag(gold), result.model.schema, result.model.vocab)
        reports.append(report)
        print(f"seed {seed}\t" + "\t".join(f"{k}={v}" for k, v in report.metrics().items()),
              flush=True)
    summary = stability_summary(reports)
    lines = ["metric\tmean\tstd"] + [f"{k}\t{m:.6f}\t{s:.6f}" for k, (m, s) in summary.items()]
    table = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return EXIT_OK


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="morphtag", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a tagger from a config file; --key value overrides")
    p.add_argument("config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tag", help="tag a CoNLL-U file")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("evaluate", help="score predictions against gold CoNLL-U")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--model", required=True, help="model supplying tagset and vocabulary")
    p.add_argument("--dataset", default="")
    p.add_argument("--json")
    p.add_argument("--tsv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="descriptive statistics of a train/test pair")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--vectors")
    p.add_argument("--dataset", default="")
    p.add_argument("--json")
    p.add_argument("--tsv")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("experiment", help="train and evaluate with several seeds")
    p.add_argument("config")
    p.add_argument("--seeds", type=int, nargs="+", required=True)
    p.add_argument("--output")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, extra)
    except UsageError as exc:
        print(f"morphtag: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConlluError, AlignmentError, ModelFormatError) as exc:
        print(f"morphtag: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"morphtag: error: {exc.filename}: no such file", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"morphtag: error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
