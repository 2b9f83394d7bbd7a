"""Command-line front end.

Subcommand groups mirror the pipeline stages: `kb` (knowledge store),
`ctx` (corpus extraction), `prompt` (cell inspection), `run`/`report`
(matrix execution and tables), and `bench` (benchmark construction).
A provider config with provider_id "mock" wires the deterministic mock
backend so everything can be exercised offline.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .benchkit import read_cwe_file, sanitize_case, synthesize_knowledge, SanitizationError
from .context import (
    CorpusIndex,
    ParseDiagnostics,
    parse_functions,
    build_call_graph,
    write_function_index,
    write_graph_file,
    read_function_index,
    read_graph_file,
)
from .gateway import HttpBackend, LlmGateway, MockBackend, ProviderConfig
from .knowledge import (
    EmbedMode,
    HashEmbedder,
    KnowledgeBase,
    RetrievalMode,
    RetrievedKnowledge,
    summarize_case_functionality,
)
from .lexer import Language
from .prompts import KnowledgeMode, PromptScheme, Scheme, assemble
from .reporting import render_csv, render_text, report
from .runner import (
    RunLog,
    RunnerOptions,
    TargetCase,
    TrialRunner,
    load_cases,
    matrix_from_config,
    plan,
    save_cases,
)


def _load_provider(path: str) -> tuple[ProviderConfig, dict]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return ProviderConfig.from_file(path), raw


def _gateway_for(config: ProviderConfig, raw: dict, cache_dir: str | None = None) -> LlmGateway:
    if config.provider_id == "mock":
        backend = MockBackend(default_response=raw.get("default_response", "No. Reason: offline mock backend."))
    else:
        backend = HttpBackend(config)
    return LlmGateway({config.provider_id: backend}, cache_dir=cache_dir)


def _source_files(root: str, language: Language) -> list[Path]:
    suffixes = {
        Language.SOLIDITY: (".sol",),
        Language.JAVA: (".java",),
        Language.CPP: (".c", ".cc", ".cpp", ".cxx", ".h", ".hpp"),
    }[language]
    path = Path(root)
    if path.is_file():
        return [path]
    return sorted(p for p in path.rglob("*") if p.suffix in suffixes)


def cmd_kb_ingest(args) -> int:
    kb = KnowledgeBase(args.store)
    report_text = Path(args.report).read_text(encoding="utf-8")
    code = Path(args.code).read_text(encoding="utf-8") if args.code else ""
    item = kb.ingest_report(report_text, code, args.lang)
    print(item.id)
    return 0


def cmd_kb_summarize(args) -> int:
    kb = KnowledgeBase(args.store)
    config, raw = _load_provider(args.provider)
    gateway = _gateway_for(config, raw)
    handle = config.handle()
    failures = 0
    for item in list(kb.items.values()):
        if args.item and item.id != args.item:
            continue
        if item.summarized:
            continue
        try:
            kb.summarize_item(item, handle, gateway)
            print(f"{item.id}: summarized")
        except Exception as exc:  # noqa: BLE001 - per-item isolation
            failures += 1
            print(f"{item.id}: FAILED ({exc})", file=sys.stderr)
    return 1 if failures else 0


def cmd_kb_embed(args) -> int:
    kb = KnowledgeBase(args.store)
    embedder = HashEmbedder(dimension=args.dimension, salt=args.salt)
    store = kb.embed_items(embedder, EmbedMode(args.mode))
    print(f"embedded {len(store)} items at dimension {store.dimension}")
    return 0


def cmd_kb_query(args) -> int:
    kb = KnowledgeBase(args.store)
    embedder = HashEmbedder(dimension=args.dimension, salt=args.salt)
    for mode in EmbedMode:
        if mode in kb.stores:
            kb.embedders[mode] = embedder
    code = Path(args.code_file).read_text(encoding="utf-8")
    case = TargetCase(
        id="query",
        language=Language(args.lang),
        code=code,
        ground_truth_vulnerable=False,
        functionality_summary=args.summary,
    )
    results = kb.retrieve_for_case(case, RetrievalMode(args.mode), k=args.k)
    for r in results:
        print(json.dumps({"rank": r.rank, "id": r.item_id, "score": r.score, "payload": r.payload}))
    return 0


def cmd_ctx_extract(args) -> int:
    language = Language(args.lang)
    diagnostics = ParseDiagnostics()
    functions = parse_functions(_source_files(args.src, language), language, diagnostics)
    graph = build_call_graph(functions, diagnostics)
    write_graph_file(graph, args.out)
    functions_out = args.functions_out or (str(args.out) + ".functions")
    write_function_index(functions, functions_out)
    print(f"{len(functions)} functions, {len(graph.edges)} edges -> {args.out}")
    for path, message in diagnostics.file_errors:
        print(f"parse error: {path}: {message}", file=sys.stderr)
    if diagnostics.unresolved_calls:
        print(f"unresolved calls dropped: {diagnostics.unresolved_calls}", file=sys.stderr)
    return 0


def cmd_prompt_render(args) -> int:
    mode_name, scheme_name, ctx_name = args.cell.split(",")
    scheme = PromptScheme(
        KnowledgeMode(mode_name),
        Scheme.COT if scheme_name == "cot" else Scheme.RAW,
        ctx_name in ("ctx", "with", "true"),
    )
    cases = {c.id: c for c in load_cases(args.case_file)}
    case = cases[args.case]
    knowledge = None
    if scheme.knowledge_mode is not KnowledgeMode.NONE:
        payload = args.knowledge_text or ""
        knowledge = RetrievedKnowledge(
            item_id="inline",
            rank=1,
            score=0.0,
            mode=RetrievalMode.RAW if scheme.knowledge_mode is KnowledgeMode.RAW else RetrievalMode.SUMMARIZED,
            payload=payload,
        )
    context = None
    if scheme.include_context:
        from .context import ContextBundle, context_for_case

        if args.graph:
            graph = read_graph_file(args.graph)
            functions = read_function_index(args.functions) if args.functions else []
            context = context_for_case(case, graph, functions, args.budget)
        else:
            context = ContextBundle()
    bundle = assemble(case, scheme, knowledge=knowledge, context=context, tools_supported=args.tools)
    print(f"# fingerprint: {bundle.fingerprint}")
    print(bundle.user_text)
    return 0


def cmd_run(args) -> int:
    config = json.loads(Path(args.matrix).read_text(encoding="utf-8"))
    cases = load_cases(config["cases"])
    matrix = matrix_from_config(config, cases)
    specs = plan(matrix)

    provider, raw = _load_provider(args.model)
    gateway = _gateway_for(provider, raw, cache_dir=args.cache)
    model = provider.handle(seed=config.get("seed"))

    kb = None
    if config.get("knowledge_store"):
        kb = KnowledgeBase(config["knowledge_store"])
        embedder = HashEmbedder(
            dimension=int(config.get("embedder", {}).get("dimension", 16)),
            salt=config.get("embedder", {}).get("salt", ""),
        )
        for mode in EmbedMode:
            if mode in kb.stores:
                kb.embedders[mode] = embedder

    graph = None
    functions: list = []
    corpus = None
    if config.get("corpus_src"):
        language = Language(config.get("corpus_lang", "solidity"))
        files = _source_files(config["corpus_src"], language)
        functions = parse_functions(files, language)
        graph = build_call_graph(functions)
        corpus = CorpusIndex.from_files(files, language)

    annotator = None
    if args.annotator:
        annotator_cfg, annotator_raw = _load_provider(args.annotator)
        annotator = annotator_cfg.handle()
        if annotator_cfg.provider_id not in gateway.backends:
            extra = _gateway_for(annotator_cfg, annotator_raw)
            gateway.backends[annotator_cfg.provider_id] = extra.backends[annotator_cfg.provider_id]

    # Summarized-mode retrieval queries with the case's cached functionality
    # summary; fill missing ones up front so the manifest pins them.
    if kb is not None and "summarized" in config.get("knowledge_modes", ["none", "raw", "summarized"]):
        summarizer = annotator or model
        for case in cases:
            if not case.functionality_summary:
                summarize_case_functionality(case, summarizer, gateway)

    runner = TrialRunner(
        gateway,
        knowledge_base=kb,
        call_graph=graph,
        functions=functions,
        corpus=corpus,
        annotator=annotator,
        options=RunnerOptions(context_budget_tokens=int(config.get("context_budget_tokens", 2000))),
    )
    run_log = RunLog(args.out)
    records = runner.execute(specs, model, cases, run_log=run_log, matrix_config=config)
    errors = sum(1 for r in records if r.error)
    print(f"executed {len(records)} trials ({errors} errors) -> {run_log.records_path}")
    return 0


def cmd_report(args) -> int:
    run_log = RunLog(args.runs)
    records = run_log.load_records()
    table = report(records, args.group_by.split(","), baseline=args.baseline)
    print(render_csv(table) if args.csv else render_text(table))
    return 0


def cmd_bench_synth(args) -> int:
    provider, raw = _load_provider(args.provider)
    gateway = _gateway_for(provider, raw)
    handle = provider.handle()
    kb = KnowledgeBase(args.out) if args.out else None
    total = 0
    skipped = 0
    for entry in read_cwe_file(args.cwe):
        if entry.language != Language(args.lang):
            continue
        result = synthesize_knowledge(entry, handle, gateway, n=args.n, kb=kb)
        total += len(result.items)
        skipped += result.skipped
        print(f"{entry.cwe_id}: {len(result.items)} items, {result.skipped} skipped")
    print(f"total: {total} items, {skipped} skipped")
    return 0


def cmd_bench_sanitize(args) -> int:
    provider, raw = _load_provider(args.provider)
    gateway = _gateway_for(provider, raw)
    handle = provider.handle()
    cases = load_cases(args.cases)
    sanitized = []
    failures = 0
    for case in cases:
        try:
            new_case, mapping = sanitize_case(case, handle, gateway)
            sanitized.append(new_case)
            print(f"{case.id}: {len(mapping.renames)} renames")
        except SanitizationError as exc:
            failures += 1
            sanitized.append(case)
            print(f"{case.id}: REJECTED ({exc})", file=sys.stderr)
    save_cases(sanitized, args.out)
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vulneval", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    kb = sub.add_parser("kb", help="knowledge store operations").add_subparsers(dest="kb_command", required=True)
    p = kb.add_parser("ingest", help="add one report+code pair to the store")
    p.add_argument("--store", required=True)
    p.add_argument("--lang", required=True, choices=[l.value for l in Language])
    p.add_argument("--report", required=True)
    p.add_argument("--code")
    p.set_defaults(fn=cmd_kb_ingest)

    p = kb.add_parser("summarize", help="fill functionality/key-concept summaries")
    p.add_argument("--store", required=True)
    p.add_argument("--provider", required=True)
    p.add_argument("--item")
    p.set_defaults(fn=cmd_kb_summarize)

    p = kb.add_parser("embed", help="build a vector store")
    p.add_argument("--store", required=True)
    p.add_argument("--mode", required=True, choices=[m.value for m in EmbedMode])
    p.add_argument("--dimension", type=int, default=16)
    p.add_argument("--salt", default="")
    p.set_defaults(fn=cmd_kb_embed)

    p = kb.add_parser("query", help="top-k retrieval for a code file")
    p.add_argument("--store", required=True)
    p.add_argument("--mode", required=True, choices=[m.value for m in RetrievalMode])
    p.add_argument("-k", type=int, default=3)
    p.add_argument("--lang", default="solidity", choices=[l.value for l in Language])
    p.add_argument("--code-file", required=True)
    p.add_argument("--summary", help="functionality summary (required for summarized mode)")
    p.add_argument("--dimension", type=int, default=16)
    p.add_argument("--salt", default="")
    p.set_defaults(fn=cmd_kb_query)

    ctx = sub.add_parser("ctx", help="corpus extraction").add_subparsers(dest="ctx_command", required=True)
    p = ctx.add_parser("extract", help="parse sources and write the call graph")
    p.add_argument("--lang", required=True, choices=[l.value for l in Language])
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--functions-out")
    p.set_defaults(fn=cmd_ctx_extract)

    prompt = sub.add_parser("prompt", help="prompt inspection").add_subparsers(dest="prompt_command", required=True)
    p = prompt.add_parser("render", help="emit the bundle for one grid cell")
    p.add_argument("--cell", required=True, help="mode,scheme,ctx e.g. summarized,cot,ctx")
    p.add_argument("--case-file", required=True)
    p.add_argument("--case", required=True)
    p.add_argument("--knowledge-text")
    p.add_argument("--graph")
    p.add_argument("--functions")
    p.add_argument("--budget", type=int, default=2000)
    p.add_argument("--tools", action="store_true")
    p.set_defaults(fn=cmd_prompt_render)

    p = sub.add_parser("run", help="execute a scenario matrix")
    p.add_argument("--matrix", required=True)
    p.add_argument("--model", required=True, help="provider config file")
    p.add_argument("--annotator", help="provider config for the annotation model")
    p.add_argument("--out", required=True)
    p.add_argument("--cache")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("report", help="grouped result tables")
    p.add_argument("--runs", required=True)
    p.add_argument("--group-by", default="knowledge,context")
    p.add_argument("--baseline")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(fn=cmd_report)

    bench = sub.add_parser("bench", help="benchmark construction").add_subparsers(dest="bench_command", required=True)
    p = bench.add_parser("synth", help="synthesize knowledge items from CWE entries")
    p.add_argument("--cwe", required=True)
    p.add_argument("--lang", required=True, choices=[l.value for l in Language])
    p.add_argument("-n", type=int, default=10)
    p.add_argument("--provider", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_bench_synth)

    p = bench.add_parser("sanitize", help="rename identifiers in test cases")
    p.add_argument("--cases", required=True)
    p.add_argument("--provider", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_bench_sanitize)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
