"""Typed report schemas for the four workflows and the strict output validator.

Two layers: raw provider-output schemas (what a completion must contain) and
final report types (raw output plus reconciliation, ranking, and provenance).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import date
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .promptkit import Workflow

REQUIRED_AUDIT_HEADINGS = ("Issues", "Recommendations")


class SchemaError(Exception):
    """Base for validation failures; str() is quoted back in repair prompts."""


class MalformedSyntax(SchemaError):
    def __init__(self, detail: str):
        super().__init__(f"malformed_syntax: {detail}")


class SchemaViolation(SchemaError):
    def __init__(self, field_name: str, reason: str):
        super().__init__(f"schema_violation({field_name}): {reason}")
        self.field = field_name
        self.reason = reason


class UnknownLogReference(SchemaError):
    def __init__(self, log_id: str):
        super().__init__(f"unknown_log_reference: {log_id!r} is not in the analyzed cohort")
        self.log_id = log_id


class MissingHeading(SchemaError):
    def __init__(self, heading: str):
        super().__init__(f"missing_heading: required section {heading!r} not found")
        self.heading = heading


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# --- raw provider-output schemas -------------------------------------------


class SupportingQuote(_StrictModel):
    log_id: str
    quote: str = Field(min_length=1)


class ModeOutput(_StrictModel):
    name: str = Field(min_length=1)
    description: str = Field(min_length=1)
    estimated_count: int = Field(ge=0)
    supporting_quotes: list[SupportingQuote] = Field(default_factory=list)


class FailureModeOutput(_StrictModel):
    modes: list[ModeOutput]


class ChainOutput(_StrictModel):
    chain_id: str = Field(min_length=1)
    member_log_ids: list[str] = Field(min_length=2)
    hypothesis: str = Field(min_length=1)
    confidence: Literal["low", "medium", "high"]
    homogeneous: bool


class CausalChainOutput(_StrictModel):
    turbine_id: str = Field(min_length=1)
    chains: list[ChainOutput]


class PatternOutput(_StrictModel):
    pattern: str = Field(min_length=1)
    hypothesis: str = Field(min_length=1)


class FarmPatternsOutput(_StrictModel):
    farm_id: str = Field(min_length=1)
    patterns: list[PatternOutput] = Field(min_length=1, max_length=5)


class ComparativeOutput(_StrictModel):
    farms: list[FarmPatternsOutput]


@dataclass(frozen=True)
class ParsedAudit:
    issues: list["AuditIssue"]
    recommendations: list["AuditRecommendation"]
    markdown: str


# --- final report types ------------------------------------------------------


class ProviderMeta(_StrictModel):
    provider: str
    profile: str
    strategy: str
    chunk_count: int
    sample_fraction: float | None = None
    seed: int | None = None
    template_version: str
    attempts: list[int] = Field(default_factory=list)


class RankedMode(_StrictModel):
    rank: int = Field(ge=1)
    name: str
    description: str
    estimated_count: int
    reconciled_count: int
    percentage: float
    supporting_quotes: list[SupportingQuote]


class FailureModeReport(_StrictModel):
    cohort_ref: str
    cohort_size: int
    modes: list[RankedMode]
    unassigned_count: int
    provider_meta: ProviderMeta


class CausalChain(_StrictModel):
    chain_id: str
    member_log_ids: list[str]
    hypothesis: str
    confidence: Literal["low", "medium", "high"]
    homogeneous: bool


class CausalChainReport(_StrictModel):
    turbine_id: str
    chains: list[CausalChain]
    provider_meta: ProviderMeta


class FarmPatterns(_StrictModel):
    farm_id: str
    patterns: list[PatternOutput]


class ComparativeReport(_StrictModel):
    farms: list[FarmPatterns]
    provider_meta: ProviderMeta


class AuditIssue(_StrictModel):
    title: str
    description: str
    example_log_ids: list[str] = Field(default_factory=list)


class AuditRecommendation(_StrictModel):
    title: str
    description: str


class AuditReport(_StrictModel):
    issues: list[AuditIssue]
    recommendations: list[AuditRecommendation]
    chunk_coverage: float
    source_markdown: list[str]
    provider_meta: ProviderMeta


REPORT_TYPES = {
    "failure_modes": FailureModeReport,
    "causal_chain": CausalChainReport,
    "site_comparison": ComparativeReport,
    "quality_audit": AuditReport,
}


# --- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class ValidationContext:
    """Cohort-side facts the validator checks references against."""

    valid_log_ids: set[str]
    log_texts: dict[str, tuple[str, str | None]] = field(default_factory=dict)
    log_dates: dict[str, date] = field(default_factory=dict)
    log_subsystems: dict[str, str] = field(default_factory=dict)
    expected_farms: tuple[str, ...] = ()
    expected_turbine: str | None = None


def _first_violation(exc: ValidationError) -> SchemaViolation:
    err = exc.errors()[0]
    location = ".".join(str(part) for part in err["loc"]) or "<root>"
    return SchemaViolation(location, err["msg"])


def _parse_json_object(raw_text: str) -> dict:
    try:
        data = json.loads(raw_text)
    except json.JSONDecodeError as exc:
        raise MalformedSyntax(str(exc)) from exc
    if not isinstance(data, dict):
        raise MalformedSyntax("top-level JSON value must be an object")
    return data


def _check_log_id(log_id: str, context: ValidationContext) -> None:
    if log_id not in context.valid_log_ids:
        raise UnknownLogReference(log_id)


def _validate_failure_modes(data: dict, context: ValidationContext) -> FailureModeOutput:
    try:
        output = FailureModeOutput.model_validate(data)
    except ValidationError as exc:
        raise _first_violation(exc) from exc
    for mode in output.modes:
        for quote in mode.supporting_quotes:
            _check_log_id(quote.log_id, context)
            if context.log_texts:
                description, observations = context.log_texts[quote.log_id]
                if quote.quote not in description and quote.quote not in (observations or ""):
                    raise SchemaViolation(
                        "supporting_quotes",
                        f"quote for {quote.log_id} is not a substring of that log's text",
                    )
    return output


def _validate_causal(data: dict, context: ValidationContext) -> CausalChainOutput:
    try:
        output = CausalChainOutput.model_validate(data)
    except ValidationError as exc:
        raise _first_violation(exc) from exc
    if context.expected_turbine and output.turbine_id != context.expected_turbine:
        raise SchemaViolation(
            "turbine_id",
            f"expected {context.expected_turbine!r}, got {output.turbine_id!r}",
        )
    for chain in output.chains:
        for log_id in chain.member_log_ids:
            _check_log_id(log_id, context)
        if len(set(chain.member_log_ids)) != len(chain.member_log_ids):
            raise SchemaViolation("member_log_ids", f"chain {chain.chain_id} repeats a member")
        if context.log_dates:
            dates = [context.log_dates[log_id] for log_id in chain.member_log_ids]
            if dates != sorted(dates):
                raise SchemaViolation(
                    "member_log_ids",
                    f"chain {chain.chain_id} member dates are not chronological",
                )
        if context.log_subsystems:
            subsystems = {context.log_subsystems[log_id] for log_id in chain.member_log_ids}
            if chain.homogeneous != (len(subsystems) == 1):
                raise SchemaViolation(
                    "homogeneous",
                    f"chain {chain.chain_id} flag does not match its member subsystems",
                )
    return output


def _validate_comparison(data: dict, context: ValidationContext) -> ComparativeOutput:
    try:
        output = ComparativeOutput.model_validate(data)
    except ValidationError as exc:
        raise _first_violation(exc) from exc
    seen = [farm.farm_id for farm in output.farms]
    if len(set(seen)) != len(seen):
        raise SchemaViolation("farms", "a farm appears more than once")
    if context.expected_farms:
        missing = sorted(set(context.expected_farms) - set(seen))
        if missing:
            raise SchemaViolation("farms", f"missing farms: {missing}")
        unexpected = sorted(set(seen) - set(context.expected_farms))
        if unexpected:
            raise SchemaViolation("farms", f"unexpected farms: {unexpected}")
    return output


_HEADING_RE = re.compile(r"^##\s+(.+?)\s*$", re.MULTILINE)
_EXAMPLES_PREFIX = "Examples:"


def _parse_audit_sections(markdown: str) -> dict[str, list[tuple[str, str, list[str]]]]:
    sections: dict[str, list[tuple[str, str, list[str]]]] = {}
    current_section: str | None = None
    title: str | None = None
    body: list[str] = []
    examples: list[str] = []

    def flush() -> None:
        nonlocal title, body, examples
        if current_section is not None and title is not None:
            sections[current_section].append((title, " ".join(body).strip(), examples))
        title, body, examples = None, [], []

    for line in markdown.splitlines():
        stripped = line.strip()
        if stripped.startswith("## ") and not stripped.startswith("###"):
            flush()
            current_section = stripped[3:].strip()
            sections.setdefault(current_section, [])
        elif stripped.startswith("### "):
            flush()
            title = stripped[4:].strip()
        elif stripped.startswith(_EXAMPLES_PREFIX):
            examples = [
                token.strip()
                for token in stripped[len(_EXAMPLES_PREFIX) :].split(",")
                if token.strip()
            ]
        elif stripped:
            body.append(stripped)
    flush()
    return sections


def _validate_audit(markdown: str, context: ValidationContext) -> ParsedAudit:
    found_headings = set(_HEADING_RE.findall(markdown))
    for heading in REQUIRED_AUDIT_HEADINGS:
        if heading not in found_headings:
            raise MissingHeading(heading)
    sections = _parse_audit_sections(markdown)
    issue_entries = sections.get("Issues", [])
    recommendation_entries = sections.get("Recommendations", [])
    if not issue_entries:
        raise SchemaViolation("Issues", "at least one issue is required")
    if not recommendation_entries:
        raise SchemaViolation("Recommendations", "at least one recommendation is required")
    issues = []
    for title, description, example_ids in issue_entries:
        for log_id in example_ids:
            _check_log_id(log_id, context)
        issues.append(AuditIssue(title=title, description=description, example_log_ids=example_ids))
    recommendations = [
        AuditRecommendation(title=title, description=description)
        for title, description, _ in recommendation_entries
    ]
    return ParsedAudit(issues=issues, recommendations=recommendations, markdown=markdown)


def validate_output(
    raw_text: str,
    workflow: Workflow,
    context: ValidationContext,
) -> FailureModeOutput | CausalChainOutput | ComparativeOutput | ParsedAudit:
    """Strictly parse raw provider output against one workflow's contract.

    Unknown fields are rejected, enums validated, and log references checked
    against the cohort. Raises a typed SchemaError subclass on any failure.
    """
    if workflow is Workflow.QUALITY_AUDIT:
        return _validate_audit(raw_text, context)
    data = _parse_json_object(raw_text)
    if workflow is Workflow.FAILURE_MODES:
        return _validate_failure_modes(data, context)
    if workflow is Workflow.CAUSAL_CHAIN:
        return _validate_causal(data, context)
    return _validate_comparison(data, context)
