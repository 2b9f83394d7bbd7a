"""Scenario matrix planning and resumable trial execution.

A scenario is one (case, knowledge mode, context flag, scheme) cell. Each
cell expands to trials: ranked modes contribute one trial per retrieval
rank 1..k, while the no-knowledge cell contributes a single trial that is
executed `none_repeats` times for fairness with the ranked modes (one
recorded outcome per repeat, same prompt each time). Records append to
the run log as they finish, so an interrupted run resumes by skipping
every (trial key, repeat) already persisted.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

from . import prompts
from .annotate import UnparseableVerdictError, classify, extract_verdict, match_type
from .context import (
    CallGraph,
    ContextBundle,
    CorpusIndex,
    FunctionRecord,
    context_for_case,
    tool_lookup,
)
from .gateway import LlmGateway, LlmHandle, ToolRegistry, ToolRoundCapError, TransportError
from .knowledge import KnowledgeBase, PreconditionError, RetrievalMode, RetrievedKnowledge
from .lexer import Language
from .prompts import KnowledgeMode, PromptScheme, Scheme

DEFAULT_CONTEXT_BUDGET_TOKENS = 2000


@dataclass
class TargetCase:
    id: str
    language: Language
    code: str
    ground_truth_vulnerable: bool
    ground_truth_type: str | None = None
    report_functions: list[str] = field(default_factory=list)
    functionality_summary: str | None = None
    project: str = ""
    period: str = ""

    def __post_init__(self) -> None:
        self.language = Language(self.language)
        if not self.code or not self.code.strip():
            raise ValueError(f"case {self.id}: code must be non-empty")
        if self.ground_truth_vulnerable and not self.ground_truth_type:
            raise ValueError(f"case {self.id}: vulnerable cases need a ground_truth_type")
        if not self.ground_truth_vulnerable and self.ground_truth_type:
            raise ValueError(f"case {self.id}: non-vulnerable cases must not carry a type")

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "language": self.language.value,
            "code": self.code,
            "ground_truth_vulnerable": self.ground_truth_vulnerable,
            "ground_truth_type": self.ground_truth_type,
            "report_functions": list(self.report_functions),
            "functionality_summary": self.functionality_summary,
            "project": self.project,
            "period": self.period,
        }

    @classmethod
    def from_record(cls, row: dict) -> "TargetCase":
        return cls(
            id=row["id"],
            language=Language(row["language"]),
            code=row["code"],
            ground_truth_vulnerable=bool(row["ground_truth_vulnerable"]),
            ground_truth_type=row.get("ground_truth_type"),
            report_functions=list(row.get("report_functions", ())),
            functionality_summary=row.get("functionality_summary"),
            project=row.get("project", ""),
            period=row.get("period", ""),
        )


def load_cases(path: str | Path) -> list[TargetCase]:
    cases = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            cases.append(TargetCase.from_record(json.loads(line)))
    return cases


def save_cases(cases: Iterable[TargetCase], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for case in cases:
            fh.write(json.dumps(case.to_record(), ensure_ascii=False) + "\n")


CONTEXT_LABELS = {True: "with", False: "without"}
CONTEXT_FROM_LABEL = {v: k for k, v in CONTEXT_LABELS.items()}


@dataclass
class ScenarioMatrix:
    cases: list[TargetCase]
    knowledge_modes: tuple[KnowledgeMode, ...] = (KnowledgeMode.NONE, KnowledgeMode.RAW, KnowledgeMode.SUMMARIZED)
    contexts: tuple[bool, ...] = (True, False)
    schemes: tuple[Scheme, ...] = (Scheme.RAW, Scheme.COT)
    k: int = 3
    none_repeats: int = 3

    def validate(self) -> None:
        if not self.cases:
            raise ValueError("matrix has no cases")
        if not self.knowledge_modes or not self.contexts or not self.schemes:
            raise ValueError("matrix has an empty dimension")
        if len({c.id for c in self.cases}) != len(self.cases):
            raise ValueError("duplicate case ids in matrix")
        if len(set(self.knowledge_modes)) != len(self.knowledge_modes):
            raise ValueError("duplicate knowledge modes")
        if len(set(self.contexts)) != len(self.contexts) or len(set(self.schemes)) != len(self.schemes):
            raise ValueError("duplicate context or scheme entries")
        if self.k < 1 or self.none_repeats < 1:
            raise ValueError("k and none_repeats must be >= 1")

    @property
    def scenario_count(self) -> int:
        return len(self.cases) * len(self.knowledge_modes) * len(self.contexts) * len(self.schemes)


@dataclass(frozen=True)
class TrialSpec:
    case_id: str
    knowledge_mode: KnowledgeMode
    rank: int
    include_context: bool
    scheme: Scheme
    repeats: int = 1

    def key(self, model_id: str) -> tuple:
        return (self.case_id, self.knowledge_mode.value, self.rank, CONTEXT_LABELS[self.include_context], self.scheme.value, model_id)


def plan(matrix: ScenarioMatrix) -> list[TrialSpec]:
    """Deterministic trial enumeration for a matrix.

    Ranked knowledge modes expand to ranks 1..k; the none mode plans one
    trial per cell carrying `none_repeats` executions, so a full 294-case
    matrix yields 294x7x2x2 = 8,232 trials at k=3.
    """
    matrix.validate()
    specs: list[TrialSpec] = []
    for case in matrix.cases:
        for mode in matrix.knowledge_modes:
            for include_context in matrix.contexts:
                for scheme in matrix.schemes:
                    if mode is KnowledgeMode.NONE:
                        specs.append(
                            TrialSpec(case.id, mode, 0, include_context, scheme, repeats=matrix.none_repeats)
                        )
                    else:
                        specs.extend(
                            TrialSpec(case.id, mode, rank, include_context, scheme)
                            for rank in range(1, matrix.k + 1)
                        )
    return specs


@dataclass
class TrialRecord:
    case_id: str
    language: str
    knowledge_mode: str
    rank: int
    repeat: int
    include_context: bool
    scheme: str
    model_id: str
    fingerprint: str = ""
    says_vulnerable: bool | None = None
    claimed_type: str | None = None
    reason: str = ""
    extraction_method: str | None = None
    category: str | None = None
    type_match: bool | None = None
    error: str | None = None
    error_detail: str | None = None
    started_at: str = ""
    finished_at: str = ""
    prompt_tokens: int = 0
    completion_tokens: int = 0
    cached: bool = False

    def key(self) -> tuple:
        return (
            self.case_id,
            self.knowledge_mode,
            self.rank,
            CONTEXT_LABELS[self.include_context],
            self.scheme,
            self.model_id,
        )

    def to_record(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}

    @classmethod
    def from_record(cls, row: dict) -> "TrialRecord":
        return cls(**row)

    def comparable(self) -> dict:
        row = self.to_record()
        row.pop("started_at")
        row.pop("finished_at")
        return row


class RunAbortError(RuntimeError):
    pass


class RunManifestMismatch(RuntimeError):
    pass


def _templates_hash() -> str:
    blob = "\x1f".join(
        [
            prompts.PREFIX_OWN_KNOWLEDGE,
            prompts.PREFIX_RAW_KNOWLEDGE,
            prompts.PREFIX_SUMMARIZED_KNOWLEDGE,
            prompts.OUTPUT_RESULT,
            prompts.SCHEME_RAW_TOOLS,
            prompts.SCHEME_COT,
            prompts.TARGET_CODE_HEADING,
            prompts.CONTEXT_HEADING,
        ]
    )
    return hashlib.sha256(blob.encode()).hexdigest()


def corpus_hash(cases: Iterable[TargetCase]) -> str:
    digest = hashlib.sha256()
    for case in sorted(cases, key=lambda c: c.id):
        digest.update(
            f"{case.id}\x1f{case.code}\x1f{case.ground_truth_vulnerable}"
            f"\x1f{case.ground_truth_type}\x1f{case.functionality_summary}".encode()
        )
    return digest.hexdigest()


def store_hashes(kb: KnowledgeBase | None) -> dict[str, str]:
    if kb is None:
        return {}
    out = {}
    for mode, store in sorted(kb.stores.items(), key=lambda kv: kv[0].value):
        digest = hashlib.sha256()
        for i, item_id in enumerate(store.ids):
            digest.update(item_id.encode())
            digest.update(store.matrix[i].tobytes())
        out[mode.value] = digest.hexdigest()
    return out


class RunLog:
    """Append-only record log plus the manifest that pins its inputs."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.records_path = self.directory / "records.jsonl"
        self.manifest_path = self.directory / "manifest.json"

    def load_records(self) -> list[TrialRecord]:
        records = []
        if self.records_path.exists():
            for line in self.records_path.read_text(encoding="utf-8").splitlines():
                line = line.strip()
                if line:
                    records.append(TrialRecord.from_record(json.loads(line)))
        return records

    def append(self, record: TrialRecord) -> None:
        with open(self.records_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record.to_record(), ensure_ascii=False) + "\n")
            fh.flush()

    def read_manifest(self) -> dict | None:
        if self.manifest_path.exists():
            return json.loads(self.manifest_path.read_text(encoding="utf-8"))
        return None

    def write_manifest(self, manifest: dict) -> None:
        self.manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")


def build_tool_registry(corpus: CorpusIndex) -> ToolRegistry:
    """The three context-lookup tools, exposed with callable schemas."""
    registry = ToolRegistry()
    registry.register(
        "getFunctionDefinition",
        "Return the source of the named function from the corpus.",
        {"name": {"type": "string", "description": "Function name to look up."}},
        lambda name: tool_lookup("function_definition", name, corpus),
    )
    registry.register(
        "getClassInheritance",
        "Return the parent types of the named class or contract.",
        {"name": {"type": "string", "description": "Class or contract name."}},
        lambda name: tool_lookup("class_inheritance", name, corpus),
    )
    registry.register(
        "getVariableDefinition",
        "Return the declaration of the named variable.",
        {"name": {"type": "string", "description": "Variable name."}},
        lambda name: tool_lookup("variable_definition", name, corpus),
    )
    return registry


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunnerOptions:
    context_budget_tokens: int = DEFAULT_CONTEXT_BUDGET_TOKENS
    error_rate_threshold: float = 0.10
    error_rate_min_trials: int = 10
    match_annotator: LlmHandle | None = None


class TrialRunner:
    """Drives specs through retrieve, context, assemble, complete, annotate."""

    def __init__(
        self,
        gateway: LlmGateway,
        knowledge_base: KnowledgeBase | None = None,
        call_graph: CallGraph | None = None,
        functions: list[FunctionRecord] | None = None,
        corpus: CorpusIndex | None = None,
        annotator: LlmHandle | None = None,
        options: RunnerOptions | None = None,
    ):
        self.gateway = gateway
        self.kb = knowledge_base
        self.graph = call_graph
        self.functions = functions or []
        self.corpus = corpus
        self.annotator = annotator
        self.options = options or RunnerOptions()

    def _knowledge_for(self, case: TargetCase, spec: TrialSpec) -> RetrievedKnowledge | None:
        if spec.knowledge_mode is KnowledgeMode.NONE:
            return None
        if self.kb is None:
            raise PreconditionError("knowledge store required for ranked trials")
        mode = RetrievalMode.RAW if spec.knowledge_mode is KnowledgeMode.RAW else RetrievalMode.SUMMARIZED
        results = self.kb.retrieve_for_case(case, mode, k=spec.rank)
        if len(results) < spec.rank:
            raise PreconditionError(f"store returned {len(results)} results, rank {spec.rank} requested")
        return results[spec.rank - 1]

    def _context_for(self, case: TargetCase, spec: TrialSpec) -> ContextBundle | None:
        if not spec.include_context:
            return None
        if self.graph is None:
            raise PreconditionError("call graph required for with-context trials")
        return context_for_case(case, self.graph, self.functions, self.options.context_budget_tokens)

    def manifest(self, matrix_config: dict, model: LlmHandle, cases: Iterable[TargetCase]) -> dict:
        return {
            "corpus_hash": corpus_hash(cases),
            "store_hashes": store_hashes(self.kb),
            "templates_hash": _templates_hash(),
            "context_budget_tokens": self.options.context_budget_tokens,
            "seed": model.seed,
            "model_id": model.model_id,
            "matrix": matrix_config,
        }

    def execute(
        self,
        specs: list[TrialSpec],
        model: LlmHandle,
        cases: Iterable[TargetCase],
        run_log: RunLog | None = None,
        matrix_config: dict | None = None,
    ) -> list[TrialRecord]:
        """Run every spec, appending records as they finish.

        Per-trial failures are recorded (error kind set) and the run keeps
        going; only a sustained error rate above the configured threshold
        aborts. Re-executing against an existing run log performs zero
        LLM calls for already-persisted (key, repeat) pairs, provided the
        manifest still matches.
        """
        case_index = {c.id: c for c in cases}
        done: dict[tuple, dict[int, str]] = {}
        if run_log is not None:
            manifest = self.manifest(matrix_config or {}, model, case_index.values())
            existing = run_log.read_manifest()
            if existing is None:
                run_log.write_manifest(manifest)
            elif existing != manifest:
                raise RunManifestMismatch("run inputs changed since this log was started; refusing to resume")
            for record in run_log.load_records():
                done.setdefault(record.key(), {})[record.repeat] = record.fingerprint

        tool_registry = None
        if self.corpus is not None and model.supports_tools:
            tool_registry = build_tool_registry(self.corpus)

        records: list[TrialRecord] = []
        executed = 0
        errored = 0
        for spec in specs:
            case = case_index.get(spec.case_id)
            if case is None:
                raise ValueError(f"spec references unknown case {spec.case_id!r}")
            for repeat in range(1, spec.repeats + 1):
                persisted = done.get(spec.key(model.model_id), {})
                if repeat in persisted:
                    continue
                record = TrialRecord(
                    case_id=case.id,
                    language=case.language.value,
                    knowledge_mode=spec.knowledge_mode.value,
                    rank=spec.rank,
                    repeat=repeat,
                    include_context=spec.include_context,
                    scheme=spec.scheme.value,
                    model_id=model.model_id,
                    started_at=_utcnow(),
                )
                try:
                    self._run_one(case, spec, model, record, tool_registry)
                except (TransportError, ToolRoundCapError, PreconditionError, UnparseableVerdictError, ValueError) as exc:
                    record.error = _error_kind(exc)
                    record.error_detail = str(exc)
                    errored += 1
                record.finished_at = _utcnow()
                executed += 1
                records.append(record)
                if run_log is not None:
                    run_log.append(record)
                if (
                    executed >= self.options.error_rate_min_trials
                    and errored / executed > self.options.error_rate_threshold
                ):
                    raise RunAbortError(
                        f"aborting: {errored}/{executed} trials errored "
                        f"(threshold {self.options.error_rate_threshold:.0%}); last error: {record.error_detail}"
                    )
        return records

    def _run_one(self, case: TargetCase, spec: TrialSpec, model: LlmHandle, record: TrialRecord, tool_registry) -> None:
        knowledge = self._knowledge_for(case, spec)
        context = self._context_for(case, spec)
        scheme = PromptScheme(spec.knowledge_mode, spec.scheme, spec.include_context)
        bundle = prompts.assemble(
            case,
            scheme,
            knowledge=knowledge,
            context=context,
            tools_supported=model.supports_tools,
            tool_schemas=tool_registry.schemas() if tool_registry else None,
        )
        record.fingerprint = bundle.fingerprint
        exchange = self.gateway.complete(model, bundle, tools=tool_registry)
        record.prompt_tokens, record.completion_tokens = exchange.usage
        record.cached = exchange.cached
        annotator = self.annotator
        verdict = extract_verdict(exchange, annotator=annotator, gateway=self.gateway if annotator else None)
        record.says_vulnerable = verdict.says_vulnerable
        record.claimed_type = verdict.claimed_type
        record.reason = verdict.reason
        record.extraction_method = verdict.extraction_method.value
        matched: bool | None = None
        if case.ground_truth_vulnerable and verdict.says_vulnerable:
            matcher = self.options.match_annotator or annotator
            matched = match_type(
                case.ground_truth_type or "",
                verdict,
                annotator=matcher,
                gateway=self.gateway if matcher else None,
            )
        outcome = classify(case.ground_truth_vulnerable, verdict, matched)
        record.category = outcome.category.value
        record.type_match = outcome.type_match


def _error_kind(exc: Exception) -> str:
    if isinstance(exc, TransportError):
        return "transport"
    if isinstance(exc, ToolRoundCapError):
        return "tool_round_cap"
    if isinstance(exc, UnparseableVerdictError):
        return "unparseable_verdict"
    if isinstance(exc, PreconditionError):
        return "precondition"
    return "invalid_input"


def matrix_from_config(config: dict, cases: list[TargetCase]) -> ScenarioMatrix:
    """Declarative matrix: knowledge modes, context labels, schemes, k, repeats."""
    modes = tuple(KnowledgeMode(m) for m in config.get("knowledge_modes", ["none", "raw", "summarized"]))
    contexts = tuple(CONTEXT_FROM_LABEL[c] for c in config.get("contexts", ["with", "without"]))
    schemes = tuple(Scheme(s) for s in config.get("schemes", ["raw_scheme", "cot"]))
    return ScenarioMatrix(
        cases=cases,
        knowledge_modes=modes,
        contexts=contexts,
        schemes=schemes,
        k=int(config.get("k", 3)),
        none_repeats=int(config.get("none_repeats", 3)),
    )
