"""Assemble the four structured analysis prompts (role, context, task list,
output contract, data payload) and render them deterministically."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from string import Template

from .cohorts import Cohort, CohortKind
from .corpus import Corpus, MaintenanceLog, SiteContext

PAYLOAD_HEADER = "log_id | event_date | subsystem | description | observations"


def _load_template_version() -> str:
    return resources.files("relialog.templates").joinpath("VERSION").read_text().strip()


TEMPLATE_VERSION = _load_template_version()


class PromptError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class Workflow(str, Enum):
    FAILURE_MODES = "failure_modes"
    CAUSAL_CHAIN = "causal_chain"
    SITE_COMPARISON = "site_comparison"
    QUALITY_AUDIT = "quality_audit"


class ContractKind(str, Enum):
    STRUCTURED_OBJECT = "structured_object"
    MARKDOWN_REPORT = "markdown_report"


@dataclass(frozen=True, slots=True)
class OutputContract:
    kind: ContractKind
    schema_text: str


@dataclass(frozen=True)
class PromptSpec:
    workflow: Workflow
    role: str
    context_block: str
    task_list: tuple[str, ...]
    output_contract: OutputContract
    data_payload: str

    def __post_init__(self) -> None:
        if not self.role:
            raise PromptError("invalid_spec", "role must be non-empty")
        if not self.task_list:
            raise PromptError("invalid_spec", "task_list must be non-empty")
        payload_lines = [l for l in self.data_payload.splitlines() if l and not l.startswith(("#", "log_id"))]
        if not payload_lines:
            raise PromptError("invalid_spec", "data_payload must contain at least one log line")


FAILURE_MODE_SCHEMA_TEXT = """Return ONLY a JSON object of this exact shape, with no extra fields:
{
  "modes": [
    {
      "name": "<short failure mode name>",
      "description": "<one or two technical sentences>",
      "estimated_count": <integer number of logs in this mode>,
      "supporting_quotes": [
        {"log_id": "<log_id from the data>", "quote": "<verbatim substring of that log's text>"}
      ]
    }
  ]
}
Every quote must be a verbatim substring of the cited log's description or observations."""

CAUSAL_SCHEMA_TEXT = """Return ONLY a JSON object of this exact shape, with no extra fields:
{
  "turbine_id": "<turbine id>",
  "chains": [
    {
      "chain_id": "<short chain identifier>",
      "member_log_ids": ["<log_id>", "..."],
      "hypothesis": "<plausible physical explanation of the chain>",
      "confidence": "low" | "medium" | "high",
      "homogeneous": true | false
    }
  ]
}
Each chain needs at least two members listed in chronological order; homogeneous
is true only when all members share one subsystem."""

COMPARISON_SCHEMA_TEXT = """Return ONLY a JSON object of this exact shape, with no extra fields:
{
  "farms": [
    {
      "farm_id": "<farm id>",
      "patterns": [
        {"pattern": "<distinctive maintenance pattern>", "hypothesis": "<explanation grounded in the site context>"}
      ]
    }
  ]
}
Every farm in the data must appear exactly once, with one to five patterns each."""

AUDIT_CONTRACT_TEXT = """Return ONLY a Markdown report with exactly these two sections:

## Issues
### <issue title>
<issue description>
Examples: <log_id>, <log_id>

## Recommendations
### <recommendation title>
<recommendation description>

At least one issue and one recommendation are required."""

DATA_FIELDS_NOTE = (
    "Each data line is: log_id | event_date | subsystem | description | observations. "
    "Free text may mix Portuguese and English; treat both languages equally."
)


def _escape(field: str) -> str:
    # The payload is pipe-delimited; keep fields single-line and pipe-free.
    return field.replace("|", "/").replace("\n", " ")


def payload_line(record: MaintenanceLog) -> str:
    observations = _escape(record.observations) if record.observations else "-"
    return " | ".join(
        (
            record.log_id,
            record.event_date.isoformat(),
            _escape(record.subsystem_name),
            _escape(record.description),
            observations,
        )
    )


def payload_for_logs(logs: list[MaintenanceLog]) -> str:
    return "\n".join([PAYLOAD_HEADER] + [payload_line(log) for log in logs])


def _resolve(cohort: Cohort, corpus: Corpus) -> list[MaintenanceLog]:
    missing = [log_id for log_id in cohort.member_log_ids if not corpus.has(log_id)]
    if missing:
        raise PromptError("unknown_member", f"cohort references unknown log ids: {missing[:5]}")
    return [corpus.get(log_id) for log_id in cohort.member_log_ids]


def build_failure_mode_prompt(cohort: Cohort, corpus: Corpus) -> PromptSpec:
    if cohort.kind is not CohortKind.SUBSYSTEM:
        raise PromptError("wrong_cohort_kind", f"expected a subsystem cohort, got {cohort.kind.value}")
    logs = _resolve(cohort, corpus)
    if not logs:
        raise PromptError("empty_cohort", "cannot build a prompt from an empty cohort")
    context = "\n".join(
        (
            f"The data below contains {len(logs)} maintenance logs for the "
            f"{cohort.label!r} subsystem of an onshore wind-turbine fleet.",
            DATA_FIELDS_NOTE,
            f"Cohort rationale: {cohort.rationale}",
        )
    )
    return PromptSpec(
        workflow=Workflow.FAILURE_MODES,
        role="Reliability Engineer",
        context_block=context,
        task_list=(
            "Group semantically similar events into distinct failure modes.",
            "Describe each failure mode in one or two technical sentences.",
            "Estimate the number of logs belonging to each mode.",
            "Extract up to three supporting quotes per mode, each with its log_id.",
        ),
        output_contract=OutputContract(ContractKind.STRUCTURED_OBJECT, FAILURE_MODE_SCHEMA_TEXT),
        data_payload=payload_for_logs(logs),
    )


def build_causal_prompt(cohort: Cohort, corpus: Corpus) -> PromptSpec:
    if cohort.kind is not CohortKind.TURBINE_SEQUENCE:
        raise PromptError("wrong_cohort_kind", f"expected a turbine_sequence cohort, got {cohort.kind.value}")
    logs = _resolve(cohort, corpus)
    if not logs:
        raise PromptError("empty_cohort", "cannot build a prompt from an empty cohort")
    keys = [log.sort_key() for log in logs]
    if keys != sorted(keys):
        raise PromptError("unsorted_members", "turbine sequence must be in chronological order")
    context = "\n".join(
        (
            f"The data below is the complete chronological maintenance history of "
            f"turbine {cohort.label!r}: {len(logs)} logs from {logs[0].event_date.isoformat()} "
            f"to {logs[-1].event_date.isoformat()}.",
            DATA_FIELDS_NOTE,
            f"Cohort rationale: {cohort.rationale}",
        )
    )
    return PromptSpec(
        workflow=Workflow.CAUSAL_CHAIN,
        role="Diagnostic Engineer",
        context_block=context,
        task_list=(
            "Review the full chronological sequence of events.",
            "Identify plausible physical relationships between events.",
            "Construct a hypothesis for each causal chain you identify.",
            "Assess your confidence in each chain as low, medium, or high.",
        ),
        output_contract=OutputContract(ContractKind.STRUCTURED_OBJECT, CAUSAL_SCHEMA_TEXT),
        data_payload=payload_for_logs(logs),
    )


def _context_lines(context: SiteContext, log_count: int) -> str:
    notes = context.location_notes or "no location notes supplied"
    return (
        f"- Farm {context.farm_id}: model {context.turbine_model_label}, "
        f"{context.n_turbines} turbines, {context.rated_power_mw} MW rated power, "
        f"{context.rotor_diameter_m} m rotor, {context.hub_height_m} m hub height; "
        f"{log_count} maintenance logs. Location: {notes}."
    )


def build_comparison_prompt(cohort: Cohort, corpus: Corpus) -> PromptSpec:
    if cohort.kind is not CohortKind.FARM_GROUP:
        raise PromptError("wrong_cohort_kind", f"expected a farm_group cohort, got {cohort.kind.value}")
    logs = _resolve(cohort, corpus)
    if not logs:
        raise PromptError("empty_cohort", "cannot build a prompt from an empty cohort")
    by_farm: dict[str, list[MaintenanceLog]] = {}
    for log in logs:
        by_farm.setdefault(log.farm_id, []).append(log)
    contexts = {c.farm_id: c for c in (cohort.context or ())}
    missing = sorted(set(by_farm) - set(contexts))
    if missing:
        raise PromptError("missing_context", f"no site context for farms: {missing}")
    context = "\n".join(
        [
            f"The data below compares maintenance logs from {len(by_farm)} wind farms.",
            DATA_FIELDS_NOTE,
            "Site context:",
        ]
        + [_context_lines(contexts[farm], len(by_farm[farm])) for farm in sorted(by_farm)]
    )
    sections = []
    for farm in sorted(by_farm):
        sections.append(f"## FARM {farm}")
        sections.append(payload_for_logs(by_farm[farm]))
    return PromptSpec(
        workflow=Workflow.SITE_COMPARISON,
        role="O&M Analyst",
        context_block=context,
        task_list=(
            "Identify the most prevalent maintenance patterns at each site.",
            "Formulate a hypothesis for each pattern using the provided environmental and operational context.",
        ),
        output_contract=OutputContract(ContractKind.STRUCTURED_OBJECT, COMPARISON_SCHEMA_TEXT),
        data_payload="\n".join(sections),
    )


def build_audit_prompt(chunk: list[MaintenanceLog]) -> PromptSpec:
    if not chunk:
        raise PromptError("empty_chunk", "audit chunk must contain at least one log")
    context = "\n".join(
        (
            f"The data below is a set of {len(chunk)} wind-turbine maintenance logs "
            "whose entry quality is being assessed.",
            DATA_FIELDS_NOTE,
        )
    )
    return PromptSpec(
        workflow=Workflow.QUALITY_AUDIT,
        role="Data Quality Expert",
        context_block=context,
        task_list=(
            "Assess the clarity of the log texts.",
            "Identify common data quality issues, citing example log ids.",
            "Provide actionable recommendations for maintenance technicians.",
        ),
        output_contract=OutputContract(ContractKind.MARKDOWN_REPORT, AUDIT_CONTRACT_TEXT),
        data_payload=payload_for_logs(chunk),
    )


def estimate_tokens(text: str) -> int:
    """Heuristic token estimate: ceiling(characters / 4). Declared, not measured."""
    return -(-len(text) // 4)


def _template_for(workflow: Workflow) -> Template:
    name = f"{workflow.value}.txt"
    text = resources.files("relialog.templates").joinpath(name).read_text(encoding="utf-8")
    return Template(text)


def render(spec: PromptSpec) -> tuple[str, int]:
    """Render a spec to provider-ready text plus its token estimate.

    Pure function of the spec; section order is fixed by the template."""
    tasks = "\n".join(f"{i}. {task}" for i, task in enumerate(spec.task_list, 1))
    text = _template_for(spec.workflow).substitute(
        role=spec.role,
        context_block=spec.context_block,
        task_list=tasks,
        output_contract=spec.output_contract.schema_text,
        data_payload=spec.data_payload,
    )
    return text, estimate_tokens(text)


def shell_token_estimate(spec: PromptSpec) -> int:
    """Token estimate of the rendered prompt with the payload reduced to its header."""
    shell = replace(spec, data_payload=PAYLOAD_HEADER + "\nplaceholder | - | - | - | -")
    text, _ = render(shell)
    return estimate_tokens(text)


def line_token_estimate(record: MaintenanceLog) -> int:
    return estimate_tokens(payload_line(record) + "\n")
