"""Command-line entry point: ``xlsap <command> [flags]``.

Exit status is 0 on success, 1 on a usage error and 2 on a data error
(missing or malformed input, numeric failure).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from xlsap import bitext, umls
from xlsap.benchmark import TitleCuiMap, build_benchmark, format_stats, read_occurrences
from xlsap.core import (
    TrainConfig,
    atomic_write_text,
    format_records,
    load_config,
    read_records,
    validate_records,
    write_config,
    write_records,
)
from xlsap.encoder import init_params, load_checkpoint, save_checkpoint
from xlsap.linker import EvalReport, build_index, evaluate, format_test_set, read_test_dir
from xlsap.sap import train, train_sequential
from xlsap.synthetic import make_corpus

logger = logging.getLogger("xlsap")

BASE_VARIANTS = ("init", "en_syn", "all_syn")

# Retuned for the n-gram encoder on the synthetic corpus; see README.
DESK_CONFIG = TrainConfig(batch_size=128, learning_rate=2.0, epochs=20)
DESK_BITEXT_CONFIG = TrainConfig(batch_size=128, learning_rate=2.0, epochs=5)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _langs(value: str) -> list[str]:
    langs = [x.strip() for x in value.split(",") if x.strip()]
    if not langs:
        raise argparse.ArgumentTypeError("expected a comma-separated list of language codes")
    return langs


def _variants(value: str) -> list[str]:
    names = _langs(value)
    unknown = sorted(set(names) - set(BASE_VARIANTS))
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown variant(s): {', '.join(unknown)}; choose from {', '.join(BASE_VARIANTS)}")
    return names


def _config(args) -> TrainConfig:
    config = load_config(args.config) if getattr(args, "config", None) else TrainConfig()
    if getattr(args, "seed", None) is not None:
        config = config.replace(seed=args.seed)
    return config


def _require_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def cmd_ingest_umls(args) -> None:
    report = umls.IngestReport()
    with _require_file(args.inp, "RRF file").open(encoding="utf-8", errors="replace") as fh:
        records = umls.extract_synonyms(fh, args.langs, report)
    write_records(records, args.out)
    logger.info(
        "%d lines, %d kept, %d malformed, %d duplicates, %d filtered",
        report.lines, report.kept, report.malformed, report.duplicates, report.filtered,
    )
    sys.stdout.write(umls.language_stats(records).format())


def cmd_ingest_bitext(args) -> None:
    if len(args.langs) != 2:
        raise UsageError("--langs must name exactly two languages: SRC,TGT")
    src, tgt = args.langs
    with _require_file(args.inp, "translation file").open(encoding="utf-8") as fh:
        if args.format == "muse":
            pairs = bitext.parse_word_translations(fh, src, tgt)
            records = bitext.pairs_to_records(pairs, bitext.MUSE_TAG)
        else:
            pairs = bitext.parse_title_pairs(fh, src, tgt)
            records = bitext.pairs_to_records(pairs, bitext.TITLE_TAG)
    write_records(records, args.out)
    logger.info("%d translation pairs -> %d records", len(pairs), len(records))


def _load_training(paths: Sequence[Path], config: TrainConfig):
    records = []
    for path in paths:
        records.extend(read_records(_require_file(path, "record file")))
    return validate_records(records, config.max_name_chars)


def cmd_train(args) -> None:
    config = _config(args)
    data = _load_training(args.data, config)
    stage2 = _load_training(args.bitext, config) if args.bitext else []
    stage2_config = load_config(args.bitext_config).replace(seed=config.seed) if args.bitext_config else None
    logger.info("training on %d records (+%d in the second stage)", len(data), len(stage2))
    result = train_sequential(data, stage2, config, stage2_config=stage2_config)
    save_checkpoint(result.params, args.out, config)
    if args.trace:
        atomic_write_text(args.trace, result.trace_csv())
    logger.info("wrote %s after %d steps", args.out, len(result.trace))


def _load_eval(args):
    tests = read_test_dir(args.tests)
    ontology = validate_records(read_records(_require_file(args.ontology, "ontology")))
    return ontology, tests


def cmd_evaluate(args) -> None:
    params, _ = load_checkpoint(_require_file(args.model, "model"))
    ontology, tests = _load_eval(args)
    report = evaluate(params, build_index(params, ontology), tests)
    _emit(report.to_json(), args.out)


def _emit(text: str, out: Path | None) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def cmd_build_benchmark(args) -> None:
    occurrences = read_occurrences(_require_file(args.inp, "occurrence file"))
    title_map = TitleCuiMap.read(_require_file(args.titles, "title map"))
    built = build_benchmark(occurrences, title_map, args.n, args.seed or 0, args.langs)
    args.out.mkdir(parents=True, exist_ok=True)
    for lang, examples in built.test_sets.items():
        atomic_write_text(args.out / f"{lang}.tsv", format_test_set(examples))
    atomic_write_text(args.out / "stats.tsv", format_stats(built.stats))
    sys.stdout.write(format_stats(built.stats))


def cmd_stats(args) -> None:
    records = read_records(_require_file(args.inp, "record file"))
    if args.langs:
        records = [r for r in records if r.lang in set(args.langs)]
    sys.stdout.write(umls.language_stats(records).format())


def format_comparison(rows: Sequence[tuple[str, EvalReport]]) -> str:
    """Rows are variants; columns are P@1/P@5 per language (in percent) and the average."""
    langs = [m.lang for m in rows[0][1].languages] if rows else []
    header = ["variant"] + [f"{lang}@{k}" for lang in langs for k in (1, 5)] + ["avg@1", "avg@5"]
    lines = ["\t".join(header)]
    for name, report in rows:
        cells = [name]
        for lang in langs:
            m = report.get(lang)
            cells += [f"{100 * m.p_at_1:.1f}", f"{100 * m.p_at_5:.1f}"]
        cells += [f"{100 * report.avg_p_at_1:.1f}", f"{100 * report.avg_p_at_5:.1f}"]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def run_transfer_experiment(
    synonyms,
    ontology,
    tests,
    variants: Sequence[str],
    config: TrainConfig,
    bitext_records=(),
    bitext_config: TrainConfig | None = None,
    bitext_tag: str = "bitext",
    english: str = "en",
) -> list[tuple[str, EvalReport]]:
    """Train each requested variant and evaluate all of them on one index.

    ``en_syn`` trains on English synonyms only, ``all_syn`` on every
    language; with bitext, each trained variant gets a ``<variant>+<tag>``
    row that continues training on the translation records.
    """
    unknown = set(variants) - set(BASE_VARIANTS)
    if unknown:
        raise UsageError(f"unknown variant(s): {', '.join(sorted(unknown))}")
    subsets = {"en_syn": [r for r in synonyms if r.lang == english], "all_syn": list(synonyms)}
    rows = []
    for variant in variants:
        if variant == "init":
            runs = [("init", init_params(config))]
        else:
            runs = [(variant, train(subsets[variant], config).params)]
            if bitext_records:
                seq = train_sequential(
                    subsets[variant], bitext_records, config, stage2_config=bitext_config
                )
                runs.append((f"{variant}+{bitext_tag}", seq.params))
        for name, params in runs:
            report = evaluate(params, build_index(params, ontology), tests)
            logger.info("%s: avg P@1 %.3f", name, report.avg_p_at_1)
            rows.append((name, report))
    return rows


def cmd_transfer(args) -> None:
    config = _config(args)
    synonyms = _load_training(args.data, config)
    ontology, tests = _load_eval(args)
    bitext_records = _load_training(args.bitext, config) if args.bitext else []
    bitext_config = load_config(args.bitext_config).replace(seed=config.seed) if args.bitext_config else None
    if tests and args.exclude_english:
        tests = {lang: exs for lang, exs in tests.items() if lang != "en"}
    rows = run_transfer_experiment(
        synonyms, ontology, tests, args.variants, config, bitext_records, bitext_config, args.bitext_tag
    )
    _emit(format_comparison(rows), args.out)


def cmd_make_synthetic(args) -> None:
    corpus = make_corpus(args.seed or 0, n_concepts=args.n)
    out = args.out
    write_records(corpus.train, out / "synonyms.tsv")
    write_records(corpus.ontology, out / "ontology.tsv")
    for lang, examples in corpus.tests.items():
        atomic_write_text(out / "tests" / f"{lang}.tsv", format_test_set(examples))
    atomic_write_text(out / "bitext.tsv", format_records(bitext.pairs_to_records(corpus.bitext)))
    write_config(DESK_CONFIG.replace(seed=args.seed or 0), out / "desk.cfg")
    write_config(DESK_BITEXT_CONFIG.replace(seed=args.seed or 0), out / "desk_bitext.cfg")
    logger.info("wrote synthetic corpus with %d concepts to %s", args.n, out)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="xlsap", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest-umls", help="MRCONSO.RRF -> canonical record TSV")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--langs", type=_langs, help="comma-separated ISO 639-1 codes to keep")
    p.set_defaults(func=cmd_ingest_umls)

    p = sub.add_parser("ingest-bitext", help="translation pairs -> pseudo-labelled records")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--langs", type=_langs, required=True, help="SRC,TGT")
    p.add_argument("--format", choices=("muse", "wt"), required=True)
    p.set_defaults(func=cmd_ingest_bitext)

    p = sub.add_parser("train", help="self-alignment pretraining")
    p.add_argument("--data", type=Path, nargs="+", required=True)
    p.add_argument("--bitext", type=Path, nargs="+", help="second-stage records")
    p.add_argument("--bitext-config", type=Path)
    p.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--trace", type=Path, help="write step,loss,n_triplets CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="Precision@1/@5 per language")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--ontology", type=Path, required=True)
    p.add_argument("--tests", type=Path, required=True, help="directory of <lang>.tsv files")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("build-benchmark", help="mention occurrences -> per-language test sets")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--titles", type=Path, required=True, help="title<TAB>cui[<TAB>lang] map")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--langs", type=_langs)
    p.set_defaults(func=cmd_build_benchmark)

    p = sub.add_parser("stats", help="per-language counts of a record TSV")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--langs", type=_langs)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("transfer", help="compare training variants on shared test sets")
    p.add_argument("--data", type=Path, nargs="+", required=True)
    p.add_argument("--ontology", type=Path, required=True)
    p.add_argument("--tests", type=Path, required=True)
    p.add_argument("--variants", type=_variants, default=["en_syn", "all_syn"])
    p.add_argument("--bitext", type=Path, nargs="+")
    p.add_argument("--bitext-config", type=Path)
    p.add_argument("--bitext-tag", default="bitext")
    p.add_argument("--exclude-english", action="store_true")
    p.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("make-synthetic", help="write a synthetic multilingual corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--n", type=int, default=500, help="number of concepts")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_make_synthetic)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"xlsap: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"xlsap: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
