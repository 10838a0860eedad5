"""Command-line front end.

Exit codes: 0 success, 2 missing input (message names the path), 3 record or
argument validation failure (message names the first offending record).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import pipeline
from .config import PipelineConfig, apply_overrides, load_config
from .corpus import CorpusError
from .evaluation import format_metrics
from .pipeline import MissingInputError


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file (flat key: value)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable; wins over the file)")
    parser.add_argument("--emit-config", action="store_true",
                        help="print the fully resolved config and exit")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flatqa",
        description="Flatten heterogeneous sources into a passage corpus, "
                    "retrieve over it, build retriever training data, and "
                    "evaluate answers.")
    _add_common(parser)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("flatten-kb", help="pack KB relations into passages")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--token-limit", type=int)

    p = sub.add_parser("flatten-tables", help="chunk tables into passages")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--token-limit", type=int)
    p.add_argument("--mode", choices=["simple", "template"])

    p = sub.add_parser("import-html-tables", help="parse tables out of HTML pages")
    p.add_argument("--input", required=True, help="an .html file or a directory of them")
    p.add_argument("--output", required=True)

    p = sub.add_parser("build-index", help="build a dense or bm25 index")
    p.add_argument("kind", choices=["dense", "bm25", "joint"])
    p.add_argument("--corpus", action="append", required=True,
                   help="corpus JSONL (repeatable; joint indexes them together)")
    p.add_argument("--output", required=True)

    p = sub.add_parser("retrieve", help="run retrieval for a question file")
    p.add_argument("mode", choices=["joint", "quota"])
    p.add_argument("--index", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--kb-passages", help="where to write per-question KB passages "
                                         "(quota mode)")

    p = sub.add_parser("tune-quota", help="pick the KB quota by dev-set recall")
    p.add_argument("--index", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--corpus", action="append", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--quotas", default="0,5,10,20,30,50",
                   help="comma-separated candidate quotas")

    p = sub.add_parser("build-trainset", help="build positives and BM25 negatives")
    p.add_argument("--questions", required=True)
    p.add_argument("--corpus", action="append", required=True)
    p.add_argument("--bm25", required=True)
    p.add_argument("--tables", help="tables JSONL for answer-aware row sampling")
    p.add_argument("--output", required=True)

    p = sub.add_parser("mine-negatives", help="refresh negatives round by round")
    p.add_argument("--samples", required=True)
    p.add_argument("--corpus", action="append", required=True)
    p.add_argument("--bm25", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("mix", help="mix datasets with upsampling")
    p.add_argument("--stream", action="append", required=True, metavar="TAG:PATH:FACTOR")
    p.add_argument("--output", required=True)

    p = sub.add_parser("read", help="produce answers from retrieval results")
    p.add_argument("--results", required=True)
    p.add_argument("--corpus", action="append", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--contexts", type=int, help="contexts per question")

    p = sub.add_parser("eval", help="score retrievals or answers")
    eval_sub = p.add_subparsers(dest="metric", required=True)

    pe = eval_sub.add_parser("recall")
    pe.add_argument("--results", required=True)
    pe.add_argument("--questions", required=True)
    pe.add_argument("--corpus", action="append", required=True)
    pe.add_argument("--output")

    pe = eval_sub.add_parser("em")
    pe.add_argument("--predictions", required=True)
    pe.add_argument("--questions", required=True)
    pe.add_argument("--output")

    pe = eval_sub.add_parser("attribution")
    pe.add_argument("--results-a", required=True, help="baseline retrievals")
    pe.add_argument("--results-b", required=True, help="candidate retrievals")
    pe.add_argument("--predictions-a", required=True)
    pe.add_argument("--predictions-b", required=True)
    pe.add_argument("--questions", required=True)
    pe.add_argument("--corpus", action="append", required=True)
    pe.add_argument("--output")

    sub.add_parser("e2e", help="run the whole pipeline from the config")

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--index", help="dense index to serve /retrieve from")

    return parser


def _parse_streams(raw: list[str]) -> list[tuple[str, str, int]]:
    streams = []
    for item in raw:
        parts = item.split(":")
        if len(parts) != 3 or not parts[0] or not parts[1]:
            raise ValueError(f"stream {item!r} is not TAG:PATH:FACTOR")
        tag, path, factor_s = parts
        try:
            factor = int(factor_s)
        except ValueError as exc:
            raise ValueError(f"stream {item!r}: factor {factor_s!r} "
                             f"is not an integer") from exc
        streams.append((tag, path, factor))
    return streams


def _dispatch(args: argparse.Namespace, cfg: PipelineConfig) -> dict | None:
    cmd = args.command
    if cmd == "flatten-kb":
        return pipeline.cmd_flatten_kb(args.input, args.output,
                                       args.token_limit or cfg.token_limit)
    if cmd == "flatten-tables":
        return pipeline.cmd_flatten_tables(args.input, args.output,
                                           args.token_limit or cfg.token_limit,
                                           args.mode or cfg.table_mode)
    if cmd == "import-html-tables":
        return pipeline.cmd_import_html_tables(args.input, args.output)
    if cmd == "build-index":
        return pipeline.cmd_build_index(args.kind, args.corpus, args.output, cfg)
    if cmd == "retrieve":
        return pipeline.cmd_retrieve(args.mode, cfg, args.index, args.questions,
                                     args.output, args.kb_passages)
    if cmd == "tune-quota":
        quotas = [int(x) for x in args.quotas.split(",") if x.strip()]
        return pipeline.cmd_tune_quota(cfg, args.index, args.questions,
                                       args.corpus, args.output, quotas)
    if cmd == "build-trainset":
        return pipeline.cmd_build_trainset(cfg, args.questions, args.corpus,
                                           args.bm25, args.output, args.tables)
    if cmd == "mine-negatives":
        return pipeline.cmd_mine_negatives(cfg, args.samples, args.corpus,
                                           args.bm25, args.output)
    if cmd == "mix":
        return pipeline.cmd_mix(_parse_streams(args.stream), args.output, cfg.seed)
    if cmd == "read":
        return pipeline.cmd_read(cfg, args.results, args.corpus, args.questions,
                                 args.output, args.contexts)
    if cmd == "eval":
        if args.metric == "recall":
            metrics = pipeline.cmd_eval_recall(args.results, args.questions,
                                               args.corpus, args.output)
            print(format_metrics(metrics))
            return None
        if args.metric == "em":
            metrics = pipeline.cmd_eval_em(args.predictions, args.questions,
                                           args.output)
            print(format_metrics(metrics))
            return None
        return pipeline.cmd_eval_attribution(
            args.results_a, args.results_b, args.predictions_a,
            args.predictions_b, args.questions, args.corpus, args.output)
    if cmd == "e2e":
        return pipeline.cmd_e2e(cfg)
    if cmd == "serve":
        import uvicorn

        from .dense import DenseIndex
        from .fusion import QuotaPolicy
        from .service import ServiceState, create_app

        state = ServiceState(embedder=pipeline.make_embedder(cfg))
        if args.index:
            state.index = DenseIndex.load(args.index)
        if cfg.kb_path:
            state.kb_retriever = pipeline.make_kb_retriever(cfg, state.embedder)
            state.policy = QuotaPolicy(k_total=cfg.k_total, kb_quota=cfg.kb_quota)
        uvicorn.run(create_app(state), host=args.host, port=args.port)
        return None
    raise ValueError(f"unknown command {cmd!r}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)

    try:
        cfg = load_config(args.config) if args.config else PipelineConfig()
        cfg = apply_overrides(cfg, args.set)
        if args.emit_config:
            print(cfg.to_yaml(), end="")
            return 0
        if not args.command:
            parser.print_help()
            return 3
        stats = _dispatch(args, cfg)
        if stats is not None:
            print(json.dumps(stats, sort_keys=True))
        return 0
    except (MissingInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CorpusError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
