"""Subcommand CLI wiring the pipeline end to end through persisted artifacts.

Stages communicate only via files, never shared memory, so every stage is
re-runnable and pure given its manifest:

    fetch      -> raw_abstracts.jsonl
    label      -> labeled.jsonl
    clean      -> clean.jsonl, clean_report.json
    featurize  -> features.csv, splits.json
    train-base -> base_model.json, probabilities.csv
    stack      -> stack_model.json, stack_matrix.csv, oof_probabilities.csv,
                  cv_scores.json
    eval       -> eval_report.json, eval_row.csv (report printed)

Exit codes: 0 ok, 1 usage/config, 2 data or protocol error, 3 I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path

import numpy as np

from . import base_learner, cleaning, features, gbdt, ingest, labeling, metrics, stacker
from .errors import (
    ConfigError,
    DataError,
    FetchError,
    PiostackError,
)
from .manifest import RunManifest, load_config

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3

OOF_MODEL_NAME = "stacker-oof"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this CLI reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int(config: dict[str, str], key: str) -> int:
    try:
        return int(config[key])
    except ValueError as exc:
        raise ConfigError(f"config {key}={config[key]!r} is not an integer") from exc


def _float(config: dict[str, str], key: str) -> float:
    try:
        return float(config[key])
    except ValueError as exc:
        raise ConfigError(f"config {key}={config[key]!r} is not a number") from exc


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _read_sequences(path: str | Path) -> list[labeling.LabeledSequence]:
    with open(path, encoding="utf-8") as fh:
        return labeling.read_labeled_sequences(fh)


def _targets_by_id(records) -> dict[str, tuple[int, int, int]]:
    return {r.seq_id: r.labels.as_tuple() for r in records}


def _split_protocol(config: dict[str, str]) -> stacker.SplitProtocol:
    return stacker.SplitProtocol(
        base_fraction=_float(config, "stack.base_fraction"),
        stack_folds=_int(config, "stack.folds"),
        seed=_int(config, "seed"),
    )


def _gbdt_config(config: dict[str, str]) -> gbdt.GbdtConfig:
    return gbdt.GbdtConfig(
        num_rounds=_int(config, "stack.num_rounds"),
        learning_rate=_float(config, "stack.learning_rate"),
        max_depth=_int(config, "stack.max_depth"),
        max_bins=_int(config, "stack.max_bins"),
        reg_lambda=_float(config, "stack.lambda"),
        min_gain=_float(config, "stack.min_gain"),
        max_leaves=_int(config, "stack.max_leaves"),
    )


def _clean_config(config: dict[str, str]) -> cleaning.CleanConfig:
    return cleaning.CleanConfig(
        min_words=_int(config, "clean.min_words"),
        max_words=_int(config, "clean.max_words"),
        english_stopword_ratio_threshold=_float(config, "clean.english_threshold"),
    )


def _train_config(config: dict[str, str]) -> base_learner.TrainConfig:
    return base_learner.TrainConfig(
        learning_rate=_float(config, "base.learning_rate"),
        epochs=_int(config, "base.epochs"),
        batch_size=_int(config, "base.batch_size"),
        seed=_int(config, "seed"),
        l2=_float(config, "base.l2"),
    )


# -- subcommands -----------------------------------------------------------


def cmd_fetch(args, config) -> int:
    out = _out_dir(args)
    target = out / "raw_abstracts.jsonl"
    manifest = RunManifest(stage="fetch", seed=_int(config, "seed"), config=config)

    if args.from_xml:
        abstracts: list[ingest.RawAbstract] = []
        skipped = 0
        for path in args.from_xml:
            result = ingest.parse_pubmed_xml(Path(path).read_bytes())
            abstracts.extend(result.abstracts)
            skipped += result.skipped_no_abstract
            manifest.add_input(Path(path).name, path)
        with open(target, "w", encoding="utf-8") as fh:
            fetched = ingest.write_raw_abstracts(abstracts, fh)
        print(f"fetched={fetched} skipped={skipped} pages={len(args.from_xml)}")
    else:
        cutoff = date.fromisoformat(args.date_cutoff) if args.date_cutoff else None
        spec = ingest.SearchSpec(
            query_terms=args.query or "",
            date_cutoff=cutoff,
            page_size=args.page_size,
        )
        with open(target, "w", encoding="utf-8") as fh:
            summary = ingest.fetch_corpus(
                spec, sink=lambda a: fh.write(ingest.abstract_to_json(a) + "\n")
            )
        print(
            f"fetched={summary.fetched} skipped={summary.skipped} "
            f"pages={summary.pages} retries={summary.retries}"
        )
    manifest.add_output("raw_abstracts", target)
    manifest.write(out)
    return EXIT_OK


def cmd_label(args, config) -> int:
    out = _out_dir(args)
    heading_map = (
        labeling.HeadingMap.from_file(args.heading_map)
        if args.heading_map
        else labeling.default_heading_map()
    )
    with open(args.input, encoding="utf-8") as fh:
        abstracts = ingest.read_raw_abstracts(fh)
    sequences, summary = labeling.label_corpus(abstracts, heading_map)
    target = out / "labeled.jsonl"
    with open(target, "w", encoding="utf-8") as fh:
        labeling.write_labeled_sequences(sequences, fh)
    census_path = out / "heading_census.json"
    census = labeling.heading_census(abstracts, heading_map)
    census_path.write_text(json.dumps(census, indent=2, sort_keys=True) + "\n",
                           encoding="utf-8")

    histogram = labeling.category_histogram(sequences)
    print(
        f"labeled={summary.labeled} skipped_unstructured={summary.skipped_unstructured} "
        f"sequences={summary.sequences}"
    )
    print("categories: " + " ".join(f"{k}={histogram[k]}" for k in labeling.CATEGORY_ORDER))

    manifest = RunManifest(stage="label", seed=_int(config, "seed"), config=config)
    manifest.add_input("raw_abstracts", args.input)
    if args.heading_map:
        manifest.add_input("heading_map", args.heading_map)
    manifest.add_output("labeled", target)
    manifest.add_output("heading_census", census_path)
    manifest.write(out)
    return EXIT_OK


def cmd_clean(args, config) -> int:
    out = _out_dir(args)
    records = _read_sequences(args.input)
    kept, report = cleaning.clean_dataset(records, _clean_config(config))
    target = out / "clean.jsonl"
    with open(target, "w", encoding="utf-8") as fh:
        labeling.write_labeled_sequences(kept, fh)
    report_path = out / "clean_report.json"
    report_path.write_text(
        json.dumps({"kept": len(kept), "dropped": report.as_dict()}, indent=2, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
    print(f"kept={len(kept)} " + " ".join(f"{k}={v}" for k, v in report.as_dict().items()))

    manifest = RunManifest(stage="clean", seed=_int(config, "seed"), config=config)
    manifest.add_input("labeled", args.input)
    manifest.add_output("clean", target)
    manifest.add_output("clean_report", report_path)
    manifest.write(out)
    return EXIT_OK


def cmd_featurize(args, config) -> int:
    out = _out_dir(args)
    records = _read_sequences(args.input)
    ids = [r.seq_id for r in records]
    by_id = {r.seq_id: r for r in records}

    if args.splits:
        assignment = stacker.SplitAssignment.from_json(Path(args.splits).read_text(encoding="utf-8"))
        known = set(ids)
        missing = [i for i in assignment.base_ids + assignment.stack_ids if i not in known]
        if missing:
            raise DataError(f"splits file references unknown ids (e.g. {missing[:3]})")
    else:
        assignment = stacker.split_base_stack(ids, _split_protocol(config))

    patterns = features.DEFAULT_QIEF_PATTERNS
    if args.qief_patterns:
        patterns = features.parse_qief_patterns(
            Path(args.qief_patterns).read_text(encoding="utf-8")
        )
    compiled = features.compile_qief_patterns(patterns)

    # idf statistics come from the base split only: stack instances must
    # not influence any statistic their meta-model consumes.
    stats = features.fit_tfidf(
        [features.tokenize(by_id[i].text) for i in assignment.base_ids]
    )
    vectors = features.featurize_dataset(records, stats, compiled)

    feat_path = out / "features.csv"
    with open(feat_path, "w", encoding="utf-8") as fh:
        features.write_feature_file(vectors, fh)
    splits_path = out / "splits.json"
    splits_path.write_text(assignment.to_json() + "\n", encoding="utf-8")
    print(f"featurized={len(vectors)} base={len(assignment.base_ids)} "
          f"stack={len(assignment.stack_ids)}")

    manifest = RunManifest(stage="featurize", seed=_int(config, "seed"), config=config)
    manifest.add_input("clean", args.input)
    if args.splits:
        manifest.add_input("splits_in", args.splits)
    if args.qief_patterns:
        manifest.add_input("qief_patterns", args.qief_patterns)
    manifest.add_output("features", feat_path)
    manifest.add_output("splits", splits_path)
    manifest.write(out)
    return EXIT_OK


def _load_feature_matrix(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        vectors = features.read_feature_file(fh)
    ids = [v.seq_id for v in vectors]
    matrix = np.array([v.values() for v in vectors], dtype=np.float64)
    return ids, matrix


def cmd_train_base(args, config) -> int:
    out = _out_dir(args)
    records = _read_sequences(args.input)
    targets = _targets_by_id(records)
    assignment = stacker.SplitAssignment.from_json(Path(args.splits).read_text(encoding="utf-8"))

    if args.vectors:
        vec_ids, matrix = base_learner.read_vectors_file(open(args.vectors, encoding="utf-8"))
        source_path = args.vectors
    else:
        vec_ids, matrix = _load_feature_matrix(args.features)
        source_path = args.features
    row_of = {iid: k for k, iid in enumerate(vec_ids)}
    missing = [i for i in assignment.base_ids if i not in row_of]
    if missing:
        raise DataError(f"no input vectors for base ids (e.g. {missing[:3]})")
    unknown = [i for i in vec_ids if i not in targets]
    if unknown:
        raise DataError(f"vectors reference ids missing from the dataset (e.g. {unknown[:3]})")

    H_base = matrix[[row_of[i] for i in assignment.base_ids]]
    T_base = np.array([targets[i] for i in assignment.base_ids], dtype=np.float64)
    head = base_learner.train((H_base, T_base), _train_config(config))
    print(
        f"trained on {len(assignment.base_ids)} instances; "
        f"loss {head.loss_history[0]:.4f} -> {head.loss_history[-1]:.4f}"
    )

    model_path = out / "base_model.json"
    model_path.write_text(base_learner.head_to_json(head, args.model_name) + "\n",
                          encoding="utf-8")
    prob_path = out / "probabilities.csv"
    probs = base_learner.predict(head, matrix, vec_ids, args.model_name)
    with open(prob_path, "w", encoding="utf-8") as fh:
        base_learner.write_probability_file(probs, fh)

    manifest = RunManifest(stage="train-base", seed=_int(config, "seed"), config=config)
    manifest.add_input("clean", args.input)
    manifest.add_input("splits", args.splits)
    manifest.add_input("vectors", source_path)
    manifest.add_output("base_model", model_path)
    manifest.add_output("probabilities", prob_path)
    manifest.write(out)
    return EXIT_OK


def cmd_stack(args, config) -> int:
    out = _out_dir(args)
    records = _read_sequences(args.input)
    targets = _targets_by_id(records)
    assignment = stacker.SplitAssignment.from_json(Path(args.splits).read_text(encoding="utf-8"))

    feat_ids, matrix = _load_feature_matrix(args.features)
    text_feats = {iid: tuple(row) for iid, row in zip(feat_ids, matrix.tolist())}

    prob_maps: dict[str, dict[str, tuple[float, float, float]]] = {}
    model_order: list[str] = []
    for path in args.probabilities:
        with open(path, encoding="utf-8") as fh:
            for record in base_learner.read_probability_file(fh):
                if record.model_name not in prob_maps:
                    prob_maps[record.model_name] = {}
                    model_order.append(record.model_name)
                prob_maps[record.model_name][record.instance_id] = record.p

    instances = stacker.build_stack_instances(
        assignment.stack_ids, prob_maps, text_feats, targets, model_order
    )
    columns = stacker.stack_feature_columns(model_order)
    result = stacker.fit_stacked(instances, assignment, _gbdt_config(config), columns)

    matrix_path = out / "stack_matrix.csv"
    with open(matrix_path, "w", encoding="utf-8") as fh:
        stacker.write_stack_matrix(instances, model_order, fh)
    model_path = out / "stack_model.json"
    model_path.write_text(result.model.to_json() + "\n", encoding="utf-8")
    oof_path = out / "oof_probabilities.csv"
    oof_records = [
        base_learner.BaseProbabilities(instance_id=iid, model_name=OOF_MODEL_NAME, p=tuple(row))
        for iid, row in zip(result.oof_ids, result.oof_probabilities.tolist())
    ]
    with open(oof_path, "w", encoding="utf-8") as fh:
        base_learner.write_probability_file(oof_records, fh)
    scores_path = out / "cv_scores.json"
    scores_path.write_text(
        json.dumps(
            {"per_fold_macro_auc": result.cv_scores, "mean_macro_auc": result.mean_cv_score},
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(
        "cv macro ROC_AUC per fold: "
        + " ".join(f"{s:.4f}" for s in result.cv_scores)
        + f" (mean {result.mean_cv_score:.4f})"
    )

    manifest = RunManifest(stage="stack", seed=_int(config, "seed"), config=config)
    manifest.add_input("clean", args.input)
    manifest.add_input("features", args.features)
    manifest.add_input("splits", args.splits)
    for k, path in enumerate(args.probabilities):
        manifest.add_input(f"probabilities_{k}", path)
    manifest.add_output("stack_model", model_path)
    manifest.add_output("stack_matrix", matrix_path)
    manifest.add_output("oof_probabilities", oof_path)
    manifest.add_output("cv_scores", scores_path)
    manifest.write(out)
    return EXIT_OK


def cmd_eval(args, config) -> int:
    out = _out_dir(args)
    threshold = args.threshold if args.threshold is not None else _float(config, "eval.threshold")
    manifest = RunManifest(stage="eval", seed=_int(config, "seed"), config=config)

    if args.stack_model:
        model = stacker.StackedModel.from_json(Path(args.stack_model).read_text(encoding="utf-8"))
        with open(args.stack_matrix, encoding="utf-8") as fh:
            instances, columns = stacker.read_stack_matrix(fh)
        if columns != model.feature_columns:
            raise DataError(
                f"stack matrix columns {columns} do not match model columns "
                f"{model.feature_columns}"
            )
        X = np.array([inst.x for inst in instances], dtype=np.float64)
        T = np.array([inst.t for inst in instances], dtype=np.float64)
        probs = stacker.predict_stacked(model, X)
        manifest.add_input("stack_model", args.stack_model)
        manifest.add_input("stack_matrix", args.stack_matrix)
    else:
        with open(args.probabilities, encoding="utf-8") as fh:
            rows = base_learner.read_probability_file(fh)
        model_names = sorted({r.model_name for r in rows})
        wanted = args.model
        if wanted is None:
            if len(model_names) > 1:
                raise ConfigError(
                    f"probability file contains several models {model_names}; pass --model"
                )
            wanted = model_names[0]
        rows = [r for r in rows if r.model_name == wanted]
        if not rows:
            raise DataError(f"no rows for model {wanted!r}")
        records = _read_sequences(args.targets)
        targets = _targets_by_id(records)
        missing = [r.instance_id for r in rows if r.instance_id not in targets]
        if missing:
            raise DataError(f"no targets for instance ids (e.g. {missing[:3]})")
        probs = np.array([r.p for r in rows], dtype=np.float64)
        T = np.array([targets[r.instance_id] for r in rows], dtype=np.float64)
        manifest.add_input("probabilities", args.probabilities)
        manifest.add_input("targets", args.targets)

    report = metrics.build_report(probs, T, threshold)
    print(report.to_text())

    report_path = out / "eval_report.json"
    report_path.write_text(report.to_json() + "\n", encoding="utf-8")
    row_path = out / "eval_row.csv"
    row_path.write_text(metrics.EvalReport.ROW_HEADER + "\n" + report.to_row() + "\n",
                        encoding="utf-8")
    manifest.add_output("eval_report", report_path)
    manifest.add_output("eval_row", row_path)
    manifest.write(out)
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="piostack", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--dump-heading-map", action="store_true",
                        help="print the embedded heading map and exit")
    parser.add_argument("--dump-qief-patterns", action="store_true",
                        help="print the embedded QIEF detector patterns and exit")
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="key=value config file layered over defaults")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("fetch", help="fetch structured abstracts from PubMed")
    common(p)
    p.add_argument("--query", default="", help="free-text query terms")
    p.add_argument("--page-size", type=int, default=1000)
    p.add_argument("--date-cutoff", help="publication date cutoff YYYY-MM-DD")
    p.add_argument("--from-xml", nargs="+",
                   help="parse local PubmedArticleSet XML files instead of the network")

    p = sub.add_parser("label", help="map section headings to P/I/O labels")
    common(p)
    p.add_argument("--input", required=True, help="raw_abstracts.jsonl")
    p.add_argument("--heading-map", help="heading map file (default: embedded map)")

    p = sub.add_parser("clean", help="normalize, language-check, length-filter, dedup")
    common(p)
    p.add_argument("--input", required=True, help="labeled.jsonl")

    p = sub.add_parser("featurize", help="compute avg TF-IDF and QIEF features")
    common(p)
    p.add_argument("--input", required=True, help="clean.jsonl")
    p.add_argument("--splits", help="existing splits.json (default: derive from seed)")
    p.add_argument("--qief-patterns", help="QIEF pattern file overriding the defaults")

    p = sub.add_parser("train-base", help="train the linear base learner on the base split")
    common(p)
    p.add_argument("--input", required=True, help="clean.jsonl")
    p.add_argument("--splits", required=True, help="splits.json")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--features", help="features.csv from featurize")
    group.add_argument("--vectors", help="externally supplied fixed vectors (id,f0,...)")
    p.add_argument("--model-name", default="linear")

    p = sub.add_parser("stack", help="fit the cross-validated boosted-tree stacker")
    common(p)
    p.add_argument("--input", required=True, help="clean.jsonl")
    p.add_argument("--features", required=True, help="features.csv")
    p.add_argument("--splits", required=True, help="splits.json")
    p.add_argument("--probabilities", nargs="+", required=True,
                   help="one or more probability interchange files")

    p = sub.add_parser("eval", help="score predictions against targets")
    common(p)
    p.add_argument("--probabilities", help="probability interchange file to score")
    p.add_argument("--targets", help="labeled/clean jsonl with true labels")
    p.add_argument("--model", help="model name to select from the probability file")
    p.add_argument("--stack-model", help="saved stack_model.json to re-run")
    p.add_argument("--stack-matrix", help="stack_matrix.csv for --stack-model")
    p.add_argument("--threshold", type=float, help="decision threshold (default from config)")
    return parser


_HANDLERS = {
    "fetch": cmd_fetch,
    "label": cmd_label,
    "clean": cmd_clean,
    "featurize": cmd_featurize,
    "train-base": cmd_train_base,
    "stack": cmd_stack,
    "eval": cmd_eval,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.dump_heading_map:
        sys.stdout.write(labeling.DEFAULT_HEADING_MAP_TEXT)
        return EXIT_OK
    if args.dump_qief_patterns:
        sys.stdout.write(features.dump_qief_patterns())
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    if args.command == "eval":
        if bool(args.stack_model) != bool(args.stack_matrix):
            parser.error("--stack-model and --stack-matrix go together")
        if not args.stack_model and not (args.probabilities and args.targets):
            parser.error("eval needs --probabilities and --targets, or --stack-model")

    try:
        config = load_config(args.config, seed_override=args.seed)
        return _HANDLERS[args.command](args, config)
    except ConfigError as exc:
        print(f"piostack {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FetchError as exc:
        print(f"piostack {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except DataError as exc:
        print(f"piostack {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PiostackError as exc:
        print(f"piostack {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"piostack {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
