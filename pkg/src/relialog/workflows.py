"""End-to-end orchestration of the four analyses: plan chunks, prompt,
complete, validate, repair, merge, reconcile, and rank."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from ._text import tokens
from .cohorts import Cohort, CohortKind
from .corpus import Corpus, MaintenanceLog
from .gateway import ChunkPlan, ChunkStrategy, GatewayClient, GatewayError, plan_chunks
from .prep import clean_text
from .promptkit import (
    PromptSpec,
    TEMPLATE_VERSION,
    Workflow,
    build_audit_prompt,
    build_causal_prompt,
    build_comparison_prompt,
    build_failure_mode_prompt,
    estimate_tokens,
    line_token_estimate,
    render,
    shell_token_estimate,
)
from .reports import (
    AuditIssue,
    AuditRecommendation,
    AuditReport,
    CausalChain,
    CausalChainOutput,
    CausalChainReport,
    ComparativeOutput,
    ComparativeReport,
    FailureModeOutput,
    FailureModeReport,
    FarmPatterns,
    ModeOutput,
    ParsedAudit,
    ProviderMeta,
    RankedMode,
    SchemaError,
    SupportingQuote,
    ValidationContext,
    validate_output,
)

MAX_SUPPORTING_QUOTES = 3
MAX_ISSUE_EXAMPLES = 10
DEFAULT_REPAIR_ATTEMPTS = 3

CORRECTION_TEMPLATE = (
    "\n\n# CORRECTION\n"
    "Your previous response failed validation: {error}\n"
    "Return a corrected response that follows the OUTPUT FORMAT section exactly."
)


class WorkflowError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class RepairExhausted(WorkflowError):
    def __init__(self, last: SchemaError, attempts: int):
        super().__init__(
            "retries_exhausted_with_last_error",
            f"output still invalid after {attempts} attempts; last error: {last}",
        )
        self.last = last
        self.attempts = attempts


def repair_loop(
    spec: PromptSpec,
    client: GatewayClient,
    context: ValidationContext,
    max_attempts: int = DEFAULT_REPAIR_ATTEMPTS,
):
    """Prompt, validate, and re-prompt with the validator's error appended.

    Returns (parsed_output, attempts). Raises RepairExhausted when
    max_attempts responses all fail validation.
    """
    base_prompt, _ = render(spec)
    prompt = base_prompt
    last_error: SchemaError | None = None
    for attempt in range(1, max_attempts + 1):
        raw = client.complete(prompt)
        try:
            return validate_output(raw, spec.workflow, context), attempt
        except SchemaError as exc:
            last_error = exc
            prompt = base_prompt + CORRECTION_TEMPLATE.format(error=exc)
    assert last_error is not None
    raise RepairExhausted(last_error, attempts=max_attempts)


def _log_token_set(record: MaintenanceLog) -> set[str]:
    return set(tokens(clean_text(record.free_text())))


def _mode_token_set(mode: ModeOutput) -> set[str]:
    parts = [mode.name, mode.description] + [q.quote for q in mode.supporting_quotes]
    return set(tokens(" ".join(parts)))


def reconcile_counts(
    modes: list[ModeOutput], cohort_logs: list[MaintenanceLog]
) -> tuple[list[int], int]:
    """Assign every cohort log to at most one mode by token-overlap score.

    Returns (reconciled_count per mode in input order, unassigned_count).
    Ties go to the earlier-listed mode; zero overlap means unassigned.
    """
    mode_token_sets = [_mode_token_set(mode) for mode in modes]
    counts = [0] * len(modes)
    unassigned = 0
    for record in cohort_logs:
        log_tokens = _log_token_set(record)
        best_index = -1
        best_score = 0
        for index, token_set in enumerate(mode_token_sets):
            score = len(log_tokens & token_set)
            if score > best_score:
                best_score = score
                best_index = index
        if best_index < 0:
            unassigned += 1
        else:
            counts[best_index] += 1
    return counts, unassigned


def _merge_mode_outputs(
    outputs: list[FailureModeOutput], member_index: dict[str, int]
) -> list[ModeOutput]:
    """Merge per-chunk mode lists by case-insensitive name.

    Estimates are summed, quotes are unioned, re-sorted into canonical cohort
    order, and capped, so a multi-chunk run merges to the same mode contents
    as a single-chunk run over the same cohort.
    """
    merged: dict[str, ModeOutput] = {}
    for output in outputs:
        for mode in output.modes:
            key = mode.name.casefold()
            if key not in merged:
                merged[key] = mode
            else:
                existing = merged[key]
                merged[key] = ModeOutput(
                    name=existing.name,
                    description=existing.description,
                    estimated_count=existing.estimated_count + mode.estimated_count,
                    supporting_quotes=existing.supporting_quotes + mode.supporting_quotes,
                )
    finalized = []
    for mode in merged.values():
        unique = {(q.log_id, q.quote): q for q in mode.supporting_quotes}
        ordered = sorted(unique.values(), key=lambda q: (member_index[q.log_id], q.quote))
        finalized.append(
            ModeOutput(
                name=mode.name,
                description=mode.description,
                estimated_count=mode.estimated_count,
                supporting_quotes=ordered[:MAX_SUPPORTING_QUOTES],
            )
        )
    return finalized


def _context_for(cohort: Cohort, corpus: Corpus, *, expected_turbine: str | None = None) -> ValidationContext:
    records = [corpus.get(log_id) for log_id in cohort.member_log_ids]
    return ValidationContext(
        valid_log_ids=set(cohort.member_log_ids),
        log_texts={r.log_id: (r.description, r.observations) for r in records},
        log_dates={r.log_id: r.event_date for r in records},
        log_subsystems={r.log_id: r.subsystem_name for r in records},
        expected_farms=tuple(sorted({r.farm_id for r in records})),
        expected_turbine=expected_turbine,
    )


def _provider_meta(
    client: GatewayClient,
    strategy: ChunkStrategy,
    plan: ChunkPlan,
    attempts: list[int],
) -> ProviderMeta:
    return ProviderMeta(
        provider=client.provider.name,
        profile=client.profile.name,
        strategy=strategy.value,
        chunk_count=len(plan.chunks),
        sample_fraction=plan.sample_fraction,
        seed=plan.seed,
        template_version=TEMPLATE_VERSION,
        attempts=attempts,
    )


def _plan_for_cohort(
    spec: PromptSpec,
    records: list[MaintenanceLog],
    client: GatewayClient,
    strategy: ChunkStrategy,
    seed: int,
    sample_fraction: float | None,
) -> ChunkPlan:
    estimates = {r.log_id: line_token_estimate(r) for r in records}
    overhead = shell_token_estimate(spec)
    plan = plan_chunks(
        [r.log_id for r in records],
        estimates,
        overhead,
        client.profile,
        strategy,
        seed=seed,
        sample_fraction=sample_fraction,
    )
    if not plan.chunks:
        raise WorkflowError("empty_plan", "chunk plan selected no logs; raise the fraction")
    return plan


def _run_chunks(
    prompts: list[PromptSpec],
    client: GatewayClient,
    context: ValidationContext,
    max_attempts: int,
) -> tuple[list, list[int]]:
    """repair_loop over each chunk spec; results merged in chunk-index order."""

    def run_one(index_spec: tuple[int, PromptSpec]):
        index, spec = index_spec
        try:
            return repair_loop(spec, client, context, max_attempts)
        except RepairExhausted as exc:
            exc.chunk_index = index
            raise
        except GatewayError as exc:
            # preserve the provider error type (exit-code semantics) but mark
            # which chunk failed
            exc.chunk_index = index
            raise
        except (SchemaError, WorkflowError) as exc:
            raise WorkflowError("chunk_failed", f"chunk {index}: {exc}") from exc

    items = list(enumerate(prompts))
    if len(items) == 1 or client.max_inflight <= 1:
        results = [run_one(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=min(client.max_inflight, len(items))) as pool:
            results = list(pool.map(run_one, items))
    return [parsed for parsed, _ in results], [attempts for _, attempts in results]


def run_failure_mode_analysis(
    cohort: Cohort,
    corpus: Corpus,
    client: GatewayClient,
    strategy: ChunkStrategy = ChunkStrategy.FULL,
    *,
    seed: int = 0,
    sample_fraction: float | None = None,
    max_attempts: int = DEFAULT_REPAIR_ATTEMPTS,
) -> FailureModeReport:
    """Failure-mode identification over a subsystem cohort, chunk-merge safe."""
    if cohort.kind is not CohortKind.SUBSYSTEM:
        raise WorkflowError("wrong_cohort_kind", "failure-mode analysis needs a subsystem cohort")
    records = [corpus.get(log_id) for log_id in cohort.member_log_ids]
    full_spec = build_failure_mode_prompt(cohort, corpus)
    plan = _plan_for_cohort(full_spec, records, client, strategy, seed, sample_fraction)

    chunk_specs = [
        build_failure_mode_prompt(replace(cohort, member_log_ids=chunk), corpus)
        for chunk in plan.chunks
    ]
    context = _context_for(cohort, corpus)
    outputs, attempts = _run_chunks(chunk_specs, client, context, max_attempts)

    member_index = {log_id: i for i, log_id in enumerate(cohort.member_log_ids)}
    merged = _merge_mode_outputs(outputs, member_index)
    reconciled, unassigned = reconcile_counts(merged, records)
    order = sorted(
        range(len(merged)), key=lambda i: (-reconciled[i], merged[i].name.casefold())
    )
    cohort_size = len(records)
    ranked = [
        RankedMode(
            rank=position,
            name=merged[i].name,
            description=merged[i].description,
            estimated_count=merged[i].estimated_count,
            reconciled_count=reconciled[i],
            percentage=reconciled[i] / cohort_size * 100.0,
            supporting_quotes=merged[i].supporting_quotes,
        )
        for position, i in enumerate(order, 1)
    ]
    return FailureModeReport(
        cohort_ref=cohort.label,
        cohort_size=cohort_size,
        modes=ranked,
        unassigned_count=unassigned,
        provider_meta=_provider_meta(client, strategy, plan, attempts),
    )


def run_causal_inference(
    cohort: Cohort,
    corpus: Corpus,
    client: GatewayClient,
    *,
    max_attempts: int = DEFAULT_REPAIR_ATTEMPTS,
) -> CausalChainReport:
    """Single-prompt causal chain inference over a turbine sequence.

    The sequence is never split: chunking would sever the cross-event context
    the task depends on, so an oversized sequence is an error that points at
    a larger-window profile."""
    if cohort.kind is not CohortKind.TURBINE_SEQUENCE:
        raise WorkflowError("wrong_cohort_kind", "causal inference needs a turbine_sequence cohort")
    spec = build_causal_prompt(cohort, corpus)
    prompt_text, estimated = render(spec)
    if estimated > client.profile.prompt_token_budget():
        raise WorkflowError(
            "sequence_exceeds_context",
            f"sequence prompt is ~{estimated} tokens; use a larger-context provider profile",
        )
    context = _context_for(cohort, corpus, expected_turbine=cohort.label)
    output, attempts = repair_loop(spec, client, context, max_attempts)
    assert isinstance(output, CausalChainOutput)
    dates = context.log_dates
    chains = sorted(output.chains, key=lambda c: (dates[c.member_log_ids[0]], c.chain_id))
    plan = ChunkPlan(
        strategy=ChunkStrategy.FULL,
        chunks=(tuple(cohort.member_log_ids),),
        chunk_token_estimates=(estimated,),
        seed=0,
    )
    return CausalChainReport(
        turbine_id=output.turbine_id,
        chains=[
            CausalChain(
                chain_id=c.chain_id,
                member_log_ids=c.member_log_ids,
                hypothesis=c.hypothesis,
                confidence=c.confidence,
                homogeneous=c.homogeneous,
            )
            for c in chains
        ],
        provider_meta=_provider_meta(client, ChunkStrategy.FULL, plan, [attempts]),
    )


def run_comparison(
    cohort: Cohort,
    corpus: Corpus,
    client: GatewayClient,
    *,
    max_attempts: int = DEFAULT_REPAIR_ATTEMPTS,
) -> ComparativeReport:
    """One-prompt comparative analysis across the farms of a farm_group cohort."""
    if cohort.kind is not CohortKind.FARM_GROUP:
        raise WorkflowError("wrong_cohort_kind", "comparison needs a farm_group cohort")
    spec = build_comparison_prompt(cohort, corpus)
    prompt_text, estimated = render(spec)
    if estimated > client.profile.prompt_token_budget():
        raise WorkflowError(
            "comparison_exceeds_context",
            "farm-group prompt exceeds the context budget; re-select with "
            "sampled_fraction or use a larger-context profile",
        )
    context = _context_for(cohort, corpus)
    output, attempts = repair_loop(spec, client, context, max_attempts)
    assert isinstance(output, ComparativeOutput)
    farms = sorted(output.farms, key=lambda f: f.farm_id)
    plan = ChunkPlan(
        strategy=ChunkStrategy.FULL,
        chunks=(tuple(cohort.member_log_ids),),
        chunk_token_estimates=(estimated,),
        seed=0,
    )
    return ComparativeReport(
        farms=[FarmPatterns(farm_id=f.farm_id, patterns=f.patterns) for f in farms],
        provider_meta=_provider_meta(client, ChunkStrategy.FULL, plan, [attempts]),
    )


def _merge_audits(
    audits: list[ParsedAudit], member_index: dict[str, int]
) -> tuple[list[AuditIssue], list[AuditRecommendation]]:
    issues: dict[str, AuditIssue] = {}
    for audit in audits:
        for issue in audit.issues:
            key = " ".join(issue.title.casefold().split())
            if key not in issues:
                issues[key] = issue
            else:
                existing = issues[key]
                combined = list(dict.fromkeys(existing.example_log_ids + issue.example_log_ids))
                combined.sort(key=lambda log_id: member_index.get(log_id, len(member_index)))
                issues[key] = AuditIssue(
                    title=existing.title,
                    description=existing.description,
                    example_log_ids=combined[:MAX_ISSUE_EXAMPLES],
                )
    recommendations: dict[str, AuditRecommendation] = {}
    for audit in audits:
        for recommendation in audit.recommendations:
            key = " ".join(recommendation.title.casefold().split())
            recommendations.setdefault(key, recommendation)
    return list(issues.values()), list(recommendations.values())


def run_quality_audit(
    corpus: Corpus,
    client: GatewayClient,
    strategy: ChunkStrategy = ChunkStrategy.FULL,
    *,
    seed: int = 0,
    sample_fraction: float | None = None,
    max_attempts: int = DEFAULT_REPAIR_ATTEMPTS,
) -> AuditReport:
    """Corpus-wide data quality audit, chunked per strategy and merged by title."""
    records = list(corpus.records)
    if not records:
        raise WorkflowError("empty_corpus", "cannot audit an empty corpus")
    full_spec = build_audit_prompt(records)
    plan = _plan_for_cohort(full_spec, records, client, strategy, seed, sample_fraction)

    by_id = {r.log_id: r for r in records}
    chunk_specs = [build_audit_prompt([by_id[log_id] for log_id in chunk]) for chunk in plan.chunks]
    context = ValidationContext(valid_log_ids=set(by_id))
    audits, attempts = _run_chunks(chunk_specs, client, context, max_attempts)

    member_index = {r.log_id: i for i, r in enumerate(records)}
    issues, recommendations = _merge_audits(audits, member_index)
    coverage = sum(len(chunk) for chunk in plan.chunks) / len(records)
    return AuditReport(
        issues=issues,
        recommendations=recommendations,
        chunk_coverage=coverage,
        source_markdown=[audit.markdown for audit in audits],
        provider_meta=_provider_meta(client, strategy, plan, attempts),
    )
