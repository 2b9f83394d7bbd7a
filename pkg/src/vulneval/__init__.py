"""Controlled evaluation harness for LLM vulnerability reasoning.

The pipeline decouples what a model knows on its own from what external
aids contribute: retrieved vulnerability knowledge (raw reports or
summarized root causes), supplemented code context (report-linked
functions and direct callees), prompt scheme (plain ask vs
chain-of-thought), and instruction following (structured verdict
extraction). Trials over the scenario matrix are scored with a five-way
taxonomy whose wrong-type category counts against both precision and
recall.
"""

from .annotate import (
    AnnotatedOutcome,
    Category,
    ExtractionMethod,
    Verdict,
    classify,
    extract_verdict,
    match_type,
)
from .benchkit import CweEntry, SanitizationMap, sanitize_case, synthesize_knowledge
from .context import (
    CallGraph,
    ContextBundle,
    CorpusIndex,
    FunctionRecord,
    build_call_graph,
    context_for_case,
    parse_functions,
    tool_lookup,
)
from .gateway import (
    ChatExchange,
    HttpBackend,
    LlmGateway,
    LlmHandle,
    MockBackend,
    ProviderConfig,
    ToolRegistry,
)
from .knowledge import (
    EmbedMode,
    HashEmbedder,
    KnowledgeBase,
    KnowledgeItem,
    RetrievalMode,
    RetrievedKnowledge,
    VectorStore,
    embed_items,
    retrieve,
)
from .lexer import Language
from .metrics import Counts, MetricsReport, compute_metrics, read_counts_table
from .prompts import KnowledgeMode, PromptBundle, PromptScheme, Scheme, all_cells, assemble
from .reporting import ReportTable, render_csv, render_text, report
from .runner import (
    RunLog,
    ScenarioMatrix,
    TargetCase,
    TrialRecord,
    TrialRunner,
    TrialSpec,
    load_cases,
    plan,
    save_cases,
)

__all__ = [
    "AnnotatedOutcome",
    "CallGraph",
    "Category",
    "ChatExchange",
    "ContextBundle",
    "CorpusIndex",
    "Counts",
    "CweEntry",
    "EmbedMode",
    "ExtractionMethod",
    "FunctionRecord",
    "HashEmbedder",
    "HttpBackend",
    "KnowledgeBase",
    "KnowledgeItem",
    "KnowledgeMode",
    "Language",
    "LlmGateway",
    "LlmHandle",
    "MetricsReport",
    "MockBackend",
    "PromptBundle",
    "PromptScheme",
    "ProviderConfig",
    "ReportTable",
    "RetrievalMode",
    "RetrievedKnowledge",
    "RunLog",
    "SanitizationMap",
    "ScenarioMatrix",
    "Scheme",
    "TargetCase",
    "ToolRegistry",
    "TrialRecord",
    "TrialRunner",
    "TrialSpec",
    "VectorStore",
    "Verdict",
    "all_cells",
    "assemble",
    "build_call_graph",
    "classify",
    "compute_metrics",
    "context_for_case",
    "embed_items",
    "extract_verdict",
    "load_cases",
    "match_type",
    "parse_functions",
    "plan",
    "read_counts_table",
    "render_csv",
    "render_text",
    "report",
    "retrieve",
    "sanitize_case",
    "save_cases",
    "synthesize_knowledge",
    "tool_lookup",
]
