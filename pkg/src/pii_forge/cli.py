"""Command-line entry point.

Subcommands cover the end-to-end workflow: infobox extraction, automatic
annotation, corpus statistics and splits, central/federated training,
four-scheme evaluation, the review service and gold export. Every run prints
its fully resolved configuration to stderr; exit codes are 0 on success, 1 on
usage errors, 2 on data errors. The PII_FORGE_SEED environment variable sets
the default seed, and --config overlays defaults from an INI file (flags take
precedence).
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from pathlib import Path

from . import fedsim, infobox, nereval, review_service, synthbio, tagger
from .annotator import AnnotationConfig, AnnotationStats, annotate_page, load_candidate_sidecar
from .corpus import Corpus, corpus_stats, read_conll, split_corpus, write_conll
from .errors import DataError, UsageError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_train_flags(parser, defaults=tagger.TrainConfig()):
    parser.add_argument("--lr", type=float, default=defaults.learning_rate)
    parser.add_argument("--batch-size", type=int, default=defaults.batch_size)
    parser.add_argument("--max-tokens", type=int, default=defaults.max_sentence_tokens)
    parser.add_argument("--epochs", type=int, default=defaults.epochs)
    parser.add_argument("--feature-dim", type=int, default=tagger.DEFAULT_FEATURE_DIM)
    parser.add_argument("--hash-seed", type=int, default=tagger.DEFAULT_HASH_SEED)


def build_parser() -> _Parser:
    parser = _Parser(prog="pii-forge", description=__doc__)
    parser.add_argument("--config", help="INI file with a [pii-forge] defaults section")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infobox", parents=[], help="parse saved HTML pages into records")
    p.add_argument("--pages", required=True, help="HTML file or directory of .html files")
    p.add_argument("--out", required=True, help="output records JSONL")

    p = sub.add_parser("annotate", help="locate record phrases in page text")
    p.add_argument("--pages", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True, help="output CoNLL corpus")
    p.add_argument("--stats", help="optional stats JSON path")
    p.add_argument("--fuzzy-threshold", type=float, default=0.6)
    p.add_argument("--keep-empty", action="store_true")
    p.add_argument("--candidates", help="candidate sidecar JSONL (replaces the heuristic)")

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--json", dest="json_out")

    p = sub.add_parser("split", help="page-granular train/validation/test split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-prefix", required=True)

    p = sub.add_parser("train", help="central tagger training")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True, help="output model path")
    p.add_argument("--loss-csv")
    p.add_argument("--seed", type=int, default=None)
    _add_train_flags(p)

    p = sub.add_parser("fedtrain", help="central or federated training run")
    p.add_argument("--scenario", choices=[s.value for s in fedsim.Scenario], required=True)
    p.add_argument("--train", dest="train_corpus", required=True)
    p.add_argument("--test", dest="test_corpus", required=True)
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--compress", choices=["none", "16", "8"], default="none")
    p.add_argument("--model", help="output model path")
    p.add_argument("--loss-csv")
    p.add_argument("--eval-json")
    p.add_argument("--seed", type=int, default=None)
    _add_train_flags(p)

    p = sub.add_parser("sweep", help="worker-count sweep over fed-central training")
    p.add_argument("--train", dest="train_corpus", required=True)
    p.add_argument("--test", dest="test_corpus", required=True)
    p.add_argument("--shards", type=int, default=10)
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=10)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--seed", type=int, default=None)
    _add_train_flags(p)

    p = sub.add_parser("evaluate", help="four-scheme NER scoring")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--json", dest="json_out")

    p = sub.add_parser("review", help="human review service")
    review_sub = p.add_subparsers(dest="review_command", required=True)
    serve = review_sub.add_parser("serve", help="run the review HTTP service")
    serve.add_argument("--corpus", required=True, help="machine-annotated CoNLL corpus")
    serve.add_argument("--records", required=True, help="records JSONL")
    serve.add_argument("--log", required=True, help="append-only decision log")
    serve.add_argument("--port", type=int, default=8571)

    p = sub.add_parser("export-gold", help="render reviewed decisions to CoNLL")
    p.add_argument("--corpus", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--all", action="store_true", help="include pending sentences")

    p = sub.add_parser("make-fixture", help="write synthetic biography pages")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--prefix", default="page")
    p.add_argument("--gold", help="also write the true-label corpus here")

    return parser


def _apply_config_file(parser: _Parser, argv: list[str]) -> None:
    probe = _Parser(add_help=False)
    probe.add_argument("--config")
    try:
        known, _ = probe.parse_known_args(argv)
    except UsageError:
        return
    if not known.config:
        return
    ini = configparser.ConfigParser()
    if not ini.read(known.config):
        raise DataError(f"config file not found: {known.config}")
    if not ini.has_section("pii-forge"):
        raise DataError(f"config file {known.config} has no [pii-forge] section")
    defaults = {}
    for key, value in ini.items("pii-forge"):
        dest = key.replace("-", "_")
        if value.lower() in ("true", "false"):
            defaults[dest] = value.lower() == "true"
        else:
            for cast in (int, float):
                try:
                    defaults[dest] = cast(value)
                    break
                except ValueError:
                    continue
            else:
                defaults[dest] = value
    for action in parser._subparsers._group_actions:
        for sub in action.choices.values():
            sub.set_defaults(**{k: v for k, v in defaults.items()})


def _resolve_seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("PII_FORGE_SEED")
    if env is not None:
        return int(env)
    return 0


def _print_config(args) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "config"}
    print(f"resolved-config: {json.dumps(resolved, default=str)}", file=sys.stderr)


def _page_files(pages_arg: str) -> list[Path]:
    root = Path(pages_arg)
    if root.is_dir():
        files = sorted(root.glob("*.html"))
        if not files:
            raise DataError(f"no .html files under {root}")
        return files
    if root.is_file():
        return [root]
    raise DataError(f"pages path not found: {root}")


def _train_config(args) -> tagger.TrainConfig:
    return tagger.TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_sentence_tokens=args.max_tokens,
        epochs=args.epochs,
        seed=_resolve_seed(args),
    )


def _model_for(args) -> tagger.TaggerModel:
    return tagger.TaggerModel.create(args.feature_dim, args.hash_seed)


# --------------------------------------------------------------------------
# subcommand implementations
# --------------------------------------------------------------------------


def cmd_infobox(args) -> int:
    records = []
    skipped = 0
    for path in _page_files(args.pages):
        html = path.read_text(encoding="utf-8")
        try:
            raw = infobox.parse_infobox(html, path.stem)
        except infobox.NoInfoboxError:
            skipped += 1
            print(f"skipping {path.name}: no infobox", file=sys.stderr)
            continue
        records.append(infobox.normalize_keys(raw))
    infobox.write_records(records, args.out)
    print(f"wrote {len(records)} records to {args.out} ({skipped} pages skipped)")
    return 0


def cmd_annotate(args) -> int:
    records = {r.page_id: r for r in infobox.read_records(args.records)}
    config = AnnotationConfig(
        fuzzy_threshold=args.fuzzy_threshold, keep_empty_sentences=args.keep_empty
    )
    sidecar = load_candidate_sidecar(args.candidates) if args.candidates else None
    sentences = []
    totals = AnnotationStats()
    for path in _page_files(args.pages):
        record = records.get(path.stem)
        if record is None:
            print(f"skipping {path.name}: no record", file=sys.stderr)
            continue
        text = infobox.extract_page_text(path.read_text(encoding="utf-8"))
        page_sentences, stats = annotate_page(text, record, config, sidecar)
        sentences.extend(page_sentences)
        totals.merge(stats)
    corpus = Corpus("annotated", sentences)
    write_conll(corpus, args.out)
    if args.stats:
        Path(args.stats).write_text(json.dumps(totals.to_dict(), indent=2) + "\n")
    print(
        f"wrote {len(corpus)} sentences to {args.out} "
        f"({totals.sentences_kept}/{totals.sentences_total} kept)"
    )
    return 0


def cmd_stats(args) -> int:
    stats = corpus_stats(read_conll(args.corpus))
    payload = json.dumps(stats.to_dict(), indent=2)
    if args.json_out:
        Path(args.json_out).write_text(payload + "\n")
    print(payload)
    return 0


def cmd_split(args) -> int:
    try:
        ratios = tuple(float(r) for r in args.ratios.split(","))
    except ValueError:
        raise DataError(f"bad --ratios value: {args.ratios!r}") from None
    corpus = read_conll(args.corpus)
    parts = split_corpus(corpus, ratios, _resolve_seed(args))
    for part, suffix in zip(parts, ("train", "validation", "test")):
        path = f"{args.out_prefix}.{suffix}.conll"
        write_conll(part, path)
        print(f"{path}: {len(part)} sentences, {len(part.page_ids())} pages")
    return 0


def cmd_train(args) -> int:
    corpus = read_conll(args.corpus)
    model, log = tagger.train(_model_for(args), corpus, _train_config(args))
    tagger.save_model(model, args.model)
    if args.loss_csv:
        fedsim.write_loss_csv(log, args.loss_csv)
    print(f"trained on {len(corpus)} sentences; model digest {tagger.model_digest(model)}")
    return 0


def cmd_fedtrain(args) -> int:
    seed = _resolve_seed(args)
    config = fedsim.FedRunConfig(
        scenario=fedsim.Scenario(args.scenario),
        n_workers=args.workers,
        compression_bits=None if args.compress == "none" else int(args.compress),
        train=_train_config(args),
        seed=seed,
    )
    train_corpus = read_conll(args.train_corpus)
    test_corpus = read_conll(args.test_corpus)
    model, log, report = fedsim.run(config, train_corpus, test_corpus, _model_for(args))
    if args.model:
        tagger.save_model(model, args.model)
    if args.loss_csv:
        fedsim.write_loss_csv(log, args.loss_csv)
    if args.eval_json:
        Path(args.eval_json).write_text(report.to_json() + "\n")
    print(report.format_table())
    return 0


def cmd_sweep(args) -> int:
    base = fedsim.FedRunConfig(
        scenario=fedsim.Scenario.FED_CENTRAL,
        train=_train_config(args),
        seed=_resolve_seed(args),
    )
    result = fedsim.sweep_workers(
        read_conll(args.train_corpus),
        read_conll(args.test_corpus),
        base,
        total_shards=args.shards,
        k_values=range(args.k_min, args.k_max + 1),
        repetitions=args.reps,
        model=_model_for(args),
    )
    result.write_csv(args.out)
    for row in result.rows:
        if row.scheme is nereval.Scheme.EXACT:
            print(f"k={row.n_workers}: exact f1 {row.mean_f1:.4f} ± {row.std_f1:.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    report = nereval.full_report(read_conll(args.pred), read_conll(args.gold))
    if args.json_out:
        Path(args.json_out).write_text(report.to_json() + "\n")
    print(report.format_table())
    return 0


def cmd_review_serve(args) -> int:
    corpus = read_conll(args.corpus)
    records = infobox.read_records(args.records)
    review_service.serve(corpus, records, args.log, args.port)
    return 0


def cmd_export_gold(args) -> int:
    corpus = read_conll(args.corpus)
    state = review_service.replay_decisions(
        corpus, review_service.read_decision_log(args.log)
    )
    gold = review_service.export_gold(state, corpus, only_done=not args.all)
    write_conll(gold, args.out)
    print(f"wrote {len(gold)} sentences to {args.out}")
    return 0


def cmd_make_fixture(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pages = synthbio.generate_pages(args.count, _resolve_seed(args), args.prefix)
    for page in pages:
        (out / f"{page.page_id}.html").write_text(page.html, encoding="utf-8")
    if args.gold:
        write_conll(synthbio.gold_corpus(pages, "gold"), args.gold)
    print(f"wrote {len(pages)} pages to {out}")
    return 0


_COMMANDS = {
    "infobox": cmd_infobox,
    "annotate": cmd_annotate,
    "stats": cmd_stats,
    "split": cmd_split,
    "train": cmd_train,
    "fedtrain": cmd_fedtrain,
    "sweep": cmd_sweep,
    "evaluate": cmd_evaluate,
    "export-gold": cmd_export_gold,
    "make-fixture": cmd_make_fixture,
}


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        _print_config(args)
        if args.command == "review":
            if args.review_command == "serve":
                return cmd_review_serve(args)
            raise UsageError(f"unknown review subcommand {args.review_command!r}")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> int:
    return dispatch(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
