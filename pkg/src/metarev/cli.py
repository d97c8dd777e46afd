"""Command-line interface.

Settings come from built-in defaults, then an optional ``key = value``
config file, then command-line flags. Exit codes: 0 success, 2 bad
configuration or input, 3 backend failure, 4 partial failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Optional, Sequence

from metarev import analysis
from metarev.errors import BackendError, MetarevError
from metarev.gateway import Gateway, RateLimiter, RecordingBackend, RemoteBackend, ReplayBackend
from metarev.pipeline import GenerationStrategy, evaluate_run, extract_sample, generate_meta_review, map_ordered
from metarev.store import (
    RunRecord,
    document_index,
    judgements_by_doc,
    load_annotations,
    load_corpus,
    load_judgements,
    read_json_lines,
    save_corpus,
    save_judgements,
    save_run,
    write_json_lines,
)

log = logging.getLogger("metarev")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_PARTIAL = 4

MODES = ("remote", "record", "replay")


class ConfigError(MetarevError):
    pass


@dataclass
class RunConfig:
    corpus: Optional[str] = None
    model_id: Optional[str] = None
    base_url: str = "https://api.openai.com/v1"
    temperature: float = 0.0
    max_tokens: int = 2048
    concurrency: int = 4
    requests_per_minute: Optional[float] = None
    threshold: float = 2.0
    stem: bool = False
    strategy: str = GenerationStrategy.NAIVE.value
    min_year: Optional[int] = None
    fixtures_dir: Optional[str] = None
    mode: str = "remote"
    runs_dir: str = "runs"
    strict: bool = False
    context_budget: Optional[int] = None
    max_retries: int = 5

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}")
        if self.mode in ("replay", "record") and not self.fixtures_dir:
            raise ConfigError(f"{self.mode} mode requires a fixtures directory")
        if self.mode == "replay" and not Path(self.fixtures_dir).is_dir():
            raise ConfigError(f"fixtures directory not found: {self.fixtures_dir}")
        if self.threshold <= 0:
            raise ConfigError("threshold must be > 0")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        try:
            GenerationStrategy(self.strategy)
        except ValueError:
            raise ConfigError(f"unknown strategy {self.strategy!r}") from None

    def snapshot(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(name: str, value: str) -> Any:
    kinds = {f.name: f.type for f in fields(RunConfig)}
    kind = str(kinds[name])
    if value.strip().lower() in ("", "none", "null") and "Optional" in kind:
        return None
    if "bool" in kind:
        lowered = value.strip().lower()
        if lowered in _BOOL_TRUE:
            return True
        if lowered in _BOOL_FALSE:
            return False
        raise ConfigError(f"{name}: not a boolean: {value!r}")
    try:
        if "int" in kind:
            return int(value)
        if "float" in kind:
            return float(value)
    except ValueError:
        raise ConfigError(f"{name}: bad value {value!r}") from None
    return value


def read_config_file(path: str | Path) -> dict[str, Any]:
    known = {f.name for f in fields(RunConfig)}
    aliases = {"model": "model_id", "fixtures": "fixtures_dir", "rpm": "requests_per_minute"}
    values: dict[str, Any] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for line_no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = aliases.get(key.replace("-", "_"), key.replace("-", "_"))
        if key not in known:
            raise ConfigError(f"{path}:{line_no}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return values


def build_config(args: argparse.Namespace) -> RunConfig:
    values: dict[str, Any] = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    config = RunConfig(**values)
    config.validate()
    return config


def build_gateway(config: RunConfig) -> Gateway:
    if not config.model_id:
        raise ConfigError("a model id is required (--model or model_id in the config file)")
    if config.mode == "replay":
        backend = ReplayBackend(config.fixtures_dir)
    else:
        remote = RemoteBackend(
            config.base_url,
            max_retries=config.max_retries,
            limiter=RateLimiter(config.concurrency, config.requests_per_minute),
        )
        backend = RecordingBackend(remote, config.fixtures_dir) if config.mode == "record" else remote
    return Gateway(backend, config.model_id, config.temperature, config.max_tokens)


def _load_samples(config: RunConfig):
    if not config.corpus:
        raise ConfigError("a corpus path is required (--corpus)")
    return load_corpus(config.corpus, min_year=config.min_year)


def _finish(record: RunRecord, config: RunConfig) -> Path:
    record.finish()
    path = save_run(record, config.runs_dir)
    print(f"run record: {path}", file=sys.stderr)
    return path


def _status(entries) -> int:
    failed = [e for e in entries if e.error]
    if not failed:
        return EXIT_OK
    print(f"{len(failed)} of {len(entries)} sample(s) failed", file=sys.stderr)
    if len(failed) == len(entries) and any("Backend" in e.error or "ReplayMiss" in e.error for e in failed):
        return EXIT_BACKEND
    return EXIT_PARTIAL


def cmd_ingest(args: argparse.Namespace) -> int:
    config = build_config(args)
    samples = _load_samples(config)
    if args.out:
        save_corpus(samples, args.out)
    n_docs = sum(len(s.source_documents) for s in samples)
    print(f"{len(samples)} sample(s), {n_docs} source document(s)")
    return EXIT_OK


def cmd_extract(args: argparse.Namespace) -> int:
    config = build_config(args)
    samples = _load_samples(config)
    gateway = build_gateway(config)
    record = RunRecord({"command": "extract", **config.snapshot()})
    results = map_ordered(lambda s: extract_sample(s, gateway, config.strict), samples, config.concurrency)
    all_records = []
    for records, entry in results:
        record.append(entry)
        all_records.extend(records)
    save_judgements(all_records, args.out)
    print(f"{len(all_records)} judgement(s) from {len(samples)} sample(s) -> {args.out}")
    _finish(record, config)
    return _status(record.entries)


def cmd_generate(args: argparse.Namespace) -> int:
    config = build_config(args)
    samples = _load_samples(config)
    gateway = build_gateway(config)
    strategy = GenerationStrategy(config.strategy)
    record = RunRecord({"command": "generate", **config.snapshot()})
    results = map_ordered(
        lambda s: generate_meta_review(s, strategy, gateway, config.context_budget, config.strict),
        samples,
        config.concurrency,
    )
    out = []
    for sample, (text, entry) in zip(samples, results):
        record.append(entry)
        if text is not None:
            out.append(
                {"paper_id": sample.paper_id, "strategy": strategy.value, "text": text, "run_id": record.run_id}
            )
    write_json_lines(args.out, out)
    print(f"{len(out)} meta-review(s) generated with {strategy.value} -> {args.out}")
    _finish(record, config)
    return _status(record.entries)


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = build_config(args)
    samples = _load_samples(config)
    gateway = build_gateway(config)
    generated = {r["paper_id"]: r["text"] for r in read_json_lines(args.generated)}
    source = reference = None
    if args.judgements:
        by_doc = judgements_by_doc(load_judgements(args.judgements))
        source = {s.paper_id: [j for d in s.source_documents for j in by_doc.get(d.doc_id, [])] for s in samples}
        reference = {s.paper_id: by_doc.get(s.meta_review.doc_id, []) for s in samples}
    if args.reference_annotations:
        annotations = load_annotations(args.reference_annotations, document_index(samples))
        by_doc: dict[str, list] = {}
        for a in annotations:
            by_doc.setdefault(a.doc_id, []).extend(a.judgements)
        reference = {s.paper_id: by_doc.get(s.meta_review.doc_id, []) for s in samples}
    record = RunRecord({"command": "evaluate", "generated": args.generated, **config.snapshot()})
    table = evaluate_run(
        samples,
        generated,
        gateway,
        source_judgements=source,
        reference_judgements=reference,
        stem=config.stem,
        strict=config.strict,
        concurrency=config.concurrency,
    )
    for entry in table.entries:
        record.append(entry)
    records = table.to_records()
    if args.out:
        write_json_lines(args.out, records)
    print(analysis.render_scores(records))
    summary = table.summary()
    excluded = {k: v for k, v in summary["excluded"].items() if v}
    if excluded:
        print("exclusions: " + ", ".join(f"{k}={v}" for k, v in excluded.items()))
    _finish(record, config)
    status = _status(table.entries)
    return status if status != EXIT_OK or not excluded else EXIT_PARTIAL


def cmd_agreement(args: argparse.Namespace) -> int:
    config = build_config(args)
    samples = _load_samples(config)
    index = document_index(samples)
    rows = analysis.agreement_report(
        samples,
        load_annotations(args.annotations_a, index),
        load_annotations(args.annotations_b, index),
        threshold=config.threshold,
        stem=config.stem,
    )
    if args.out:
        write_json_lines(args.out, rows)
    print(analysis.render_agreement(rows))
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    config = build_config(args)
    samples = _load_samples(config)
    rows = analysis.analysis_report(samples, load_judgements(args.judgements))
    if args.out:
        write_json_lines(args.out, rows)
    print(analysis.render_analysis(rows))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    records = read_json_lines(args.report)
    if not records:
        print("(empty report)")
    elif "section" in records[0]:
        print(analysis.render_analysis(records))
    elif "component" in records[0]:
        print(analysis.render_agreement(records))
    elif "paper_id" in records[0] or records[0].get("summary"):
        print(analysis.render_scores(records))
    else:
        raise ConfigError(f"unrecognized report file {args.report}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--corpus", help="corpus file (one JSON record per line)")
    common.add_argument("--model", dest="model_id")
    common.add_argument("--base-url", dest="base_url")
    common.add_argument("--temperature", type=float)
    common.add_argument("--max-tokens", dest="max_tokens", type=int)
    common.add_argument("--concurrency", type=int)
    common.add_argument("--rpm", dest="requests_per_minute", type=float, help="requests per minute")
    common.add_argument("--threshold", type=float, help="alignment threshold on the ROUGE f1 sum")
    common.add_argument("--stem", action="store_const", const=True, help="Porter-stem tokens for ROUGE")
    common.add_argument("--strategy", choices=[s.value for s in GenerationStrategy])
    common.add_argument("--min-year", dest="min_year", type=int)
    common.add_argument("--fixtures", dest="fixtures_dir")
    common.add_argument("--mode", choices=MODES)
    common.add_argument("--runs-dir", dest="runs_dir")
    common.add_argument("--strict", action="store_const", const=True, help="retry unparseable output once")
    common.add_argument("--context-budget", dest="context_budget", type=int, help="max prompt characters for documents")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="metarev", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="validate and normalize a corpus")
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", parents=[common], help="extract judgements from every document")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("generate", parents=[common], help="generate meta-reviews")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", parents=[common], help="score generated meta-reviews")
    p.add_argument("--generated", required=True)
    p.add_argument("--judgements", help="judgement file to use instead of re-extracting")
    p.add_argument("--reference-annotations", help="human annotations preferred for the reference meta-review")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("agreement", parents=[common], help="inter-annotator agreement")
    p.add_argument("--annotations-a", required=True)
    p.add_argument("--annotations-b", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("analyze", parents=[common], help="facet frequency, review consistency, voting")
    p.add_argument("--judgements", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="render a saved report file")
    p.add_argument("report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (MetarevError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
