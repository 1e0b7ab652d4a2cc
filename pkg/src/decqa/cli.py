"""Command-line entry point.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 backend error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
from pathlib import Path
from typing import Sequence

from .config import AppConfig
from .evaluation import evaluate
from .fixtures import generate_world
from .gateway import GatewayError, LLMGateway, OpenAICompatibleBackend, ScriptedBackend
from .keywords import build_ek_dataset
from .pipeline import DECPipeline, RunAborted
from .prompts import PromptCatalog, TemplateError
from .records import RunRecord, load_dataset, load_runs, write_jsonl
from .retrieval import BM25Retriever, CorpusError, RemoteRetriever, RetrievalError, read_corpus

logger = logging.getLogger("decqa")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--scripted", metavar="SCRIPT", help="answer model calls from a JSON Lines script")
    p.add_argument("--corpus", help="corpus JSON Lines {id, title, text}")
    p.add_argument("--top-n", type=int, help="documents retrieved per step (default 10)")
    p.add_argument("--backup-k", type=int, help="relevance backups kept per step (default 2)")
    p.add_argument("--max-chain", type=int, help="maximum sub-questions per chain (default 6)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="decqa", description="Multi-hop QA with decomposed reasoning chains and keyword-enhanced recall.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("index", help="build and persist a BM25 index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")

    p = sub.add_parser("run", help="answer one question and print its run record")
    p.add_argument("question")
    p.add_argument("--id", default="cli", help="question id recorded in the run record")
    _add_pipeline_flags(p)

    p = sub.add_parser("batch", help="answer every question of a dataset (resumable)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--parallelism", type=int, default=1)
    _add_pipeline_flags(p)

    p = sub.add_parser("build-ek-data", help="emit keyword-extraction training data from run records")
    p.add_argument("--runs", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--corpus", help="corpus holding the gold documents")
    p.add_argument("--config")

    p = sub.add_parser("eval", help="score run records against a dataset")
    p.add_argument("--runs", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--with-judge", action="store_true", help="add LLM-judged semantic accuracy")
    p.add_argument("--with-answerability", action="store_true", help="add answerability confusion metrics")
    p.add_argument("--parallelism", type=int, default=4)
    p.add_argument("--config")
    p.add_argument("--scripted", metavar="SCRIPT")

    fx = sub.add_parser("fixtures", help=argparse.SUPPRESS)
    fx_sub = fx.add_subparsers(dest="fixtures_command", parser_class=_Parser)
    fx_sub.required = True
    g = fx_sub.add_parser("generate")
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--n-questions", type=int, default=20)
    g.add_argument("--hops", type=int, choices=(2, 3), default=2)
    g.add_argument("--n-unanswerable", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")
    # Hide the subcommand from the top-level listing.
    sub._choices_actions = [a for a in sub._choices_actions if a.dest != "fixtures"]
    return parser


def _load_config(args) -> AppConfig:
    try:
        return _merge_config(args)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _merge_config(args) -> AppConfig:
    cfg = AppConfig.load(args.config) if getattr(args, "config", None) else AppConfig()
    retrieval, orchestrator = {}, {}
    if getattr(args, "top_n", None) is not None:
        retrieval["top_n"] = args.top_n
    if getattr(args, "backup_k", None) is not None:
        retrieval["backup_k"] = args.backup_k
    if getattr(args, "max_chain", None) is not None:
        orchestrator["max_chain_length"] = args.max_chain
    data = cfg.resolved()
    data["retrieval"].update(retrieval)
    data["orchestrator"].update(orchestrator)
    if getattr(args, "scripted", None):
        data["paths"]["script"] = args.scripted
    if getattr(args, "corpus", None):
        data["paths"]["corpus"] = args.corpus
    return AppConfig.model_validate(data)


def _gateway(cfg: AppConfig) -> LLMGateway:
    catalog = PromptCatalog.from_file(cfg.paths.prompts) if cfg.paths.prompts else PromptCatalog()
    g = cfg.gateway
    if cfg.paths.script:
        try:
            backend = ScriptedBackend.from_jsonl(cfg.paths.script)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot load script: {exc}") from None
    elif g.base_url:
        backend = OpenAICompatibleBackend(g.base_url, g.api_key_env, g.timeout, g.max_in_flight)
    else:
        raise UsageError("no model backend: pass --scripted or set gateway.base_url in --config")
    models = {"main": g.models.main}
    if g.models.ek:
        models["ek"] = g.models.ek
    if g.models.judge:
        models["judge"] = g.models.judge
    return LLMGateway(backend, catalog, models, g.temperature, g.max_output_tokens)


def _retriever(cfg: AppConfig):
    r = cfg.retrieval
    cache = cfg.paths.index_cache
    if r.mode == "local" and cache and Path(cache).exists():
        return BM25Retriever.load(cache)
    if not cfg.paths.corpus:
        raise UsageError("no corpus: pass --corpus or set paths.corpus in --config")
    docs = read_corpus(cfg.paths.corpus)
    if r.mode == "remote":
        if not r.remote_url:
            raise UsageError("retrieval.mode is 'remote' but retrieval.remote_url is not set")
        return RemoteRetriever(r.remote_url, top_n=r.top_n).fit(docs)
    est = BM25Retriever(k1=r.k1, b=r.b, top_n=r.top_n).fit(docs)
    if cache:
        est.save(cache)
    return est


def _pipeline(cfg: AppConfig) -> DECPipeline:
    o = cfg.orchestrator
    pipe = DECPipeline(
        gateway=_gateway(cfg),
        retriever=_retriever(cfg),
        top_n=cfg.retrieval.top_n,
        backup_k=cfg.retrieval.backup_k,
        max_chain_length=o.max_chain_length,
        unanswerable_token=o.unanswerable_token,
        rewrite_first_step=o.rewrite_first_step,
        config_digest=cfg.digest(),
    )
    return pipe.fit()


def format_trace(record: RunRecord) -> str:
    lines = [f"question [{record.question.id}]: {record.question.text}"]
    if record.chain is not None:
        lines.append("chain:")
        lines.extend(f"  {s.index}. {s.text}" for s in record.chain.subs)
    for s in record.steps:
        lines.append(f"step {s.index}: {s.sub_question}")
        lines.append(f"  rewritten: {s.rewritten.text}")
        lines.append(f"  keywords:  {'; '.join(s.keywords.keywords) or '(none)'}")
        lines.append(f"  documents: {', '.join(s.candidate_doc_ids) or '(none)'}")
        lines.append(f"  answer:    {s.sub_answer}")
    lines.append(f"final answer: {record.final_answer} (answerable={record.predicted_answerable})")
    lines.append(f"#SQA={record.sqa_count} tokens={record.total_tokens[0]}+{record.total_tokens[1]}")
    if record.flags:
        lines.append(f"flags: {', '.join(record.flags)}")
    if record.error:
        lines.append(f"error: {record.error}")
    return "\n".join(lines)


def cmd_index(args) -> int:
    cfg = _load_config(args)
    docs = read_corpus(args.corpus)
    if not docs:
        logger.warning("corpus %s is empty; writing an empty index", args.corpus)
    est = BM25Retriever(k1=cfg.retrieval.k1, b=cfg.retrieval.b, top_n=cfg.retrieval.top_n).fit(docs)
    est.save(args.out)
    print(f"indexed {est.n_docs_} documents, {len(est.postings_)} terms -> {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_run(args) -> int:
    if not args.config and not args.scripted:
        raise UsageError("run needs --config or --scripted")
    pipe = _pipeline(_load_config(args))
    try:
        record = pipe.run({"id": args.id, "question": args.question})
        status = EXIT_OK
    except RunAborted as exc:
        record, status = exc.record, EXIT_BACKEND
    print(record.to_json())
    print(format_trace(record), file=sys.stderr)
    return status


def cmd_batch(args) -> int:
    if not args.config and not args.scripted:
        raise UsageError("batch needs --config or --scripted")
    dataset = load_dataset(args.dataset)
    out = Path(args.out)
    done: dict[str, RunRecord] = {}
    if out.exists():
        wanted = {d.id for d in dataset}
        for r in load_runs(out, strict=False):
            if r.complete and r.question.id in wanted:
                done[r.question.id] = r
    todo = [d for d in dataset if d.id not in done]
    logger.info("%d questions, %d already complete, %d to run", len(dataset), len(done), len(todo))
    pipe = _pipeline(_load_config(args))

    lock = threading.Lock()
    with open(out, "a", encoding="utf-8") as fh:
        def persist(record: RunRecord) -> None:
            with lock:
                fh.write(record.to_json() + "\n")
                fh.flush()

        new = pipe.run_batch(todo, parallelism=args.parallelism, callback=persist)
    done.update((r.question.id, r) for r in new)
    write_jsonl(out, (done[d.id].to_dict() for d in dataset))
    failed = sum(1 for r in new if not r.complete)
    print(f"{len(new)} run, {len(dataset) - len(todo)} skipped, {failed} failed -> {out}", file=sys.stderr)
    return EXIT_OK


def cmd_build_ek_data(args) -> int:
    cfg = _load_config(args)
    runs = load_runs(args.runs)
    dataset = load_dataset(args.dataset)
    if not cfg.paths.corpus:
        raise UsageError("build-ek-data needs --corpus (or paths.corpus) to resolve gold documents")
    documents = {d.id: d for d in read_corpus(cfg.paths.corpus)}
    catalog = PromptCatalog.from_file(cfg.paths.prompts) if cfg.paths.prompts else PromptCatalog()
    examples, stats = build_ek_dataset(runs, dataset, documents, catalog)
    write_jsonl(args.out, (e.to_dict() for e in examples))
    print(
        f"pairs seen: {stats.pairs_seen}, emitted: {stats.emitted}, runs skipped (no gold): {stats.skipped_runs}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    for path in (args.runs, args.dataset):
        if not Path(path).exists():
            raise DataError(f"no such file: {path}")
    runs = load_runs(args.runs)
    dataset = load_dataset(args.dataset)
    judge = _gateway(_load_config(args)) if args.with_judge else None
    report = evaluate(runs, dataset, judge=judge, with_answerability=args.with_answerability, parallelism=args.parallelism)
    payload = json.dumps(report.to_dict(), ensure_ascii=False, sort_keys=True, indent=2)
    if args.out:
        Path(args.out).write_text(payload + "\n", encoding="utf-8")
    else:
        print(payload)
    print(report.format_table())
    return EXIT_OK


def cmd_fixtures(args) -> int:
    world = generate_world(args.seed, args.n_questions, args.hops, args.n_unanswerable)
    paths = world.write(args.out)
    print(
        f"{len(world.questions)} questions, {len(world.corpus)} documents, {len(world.script)} script entries "
        f"-> {paths['corpus'].parent}",
        file=sys.stderr,
    )
    return EXIT_OK


COMMANDS = {
    "index": cmd_index,
    "run": cmd_run,
    "batch": cmd_batch,
    "build-ek-data": cmd_build_ek_data,
    "eval": cmd_eval,
    "fixtures": cmd_fixtures,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, TemplateError) as exc:
        print(f"decqa: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CorpusError, ValueError, OSError) as exc:
        print(f"decqa: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (GatewayError, RetrievalError) as exc:
        print(f"decqa: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
