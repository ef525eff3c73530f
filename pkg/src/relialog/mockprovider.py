"""Deterministic rule-based mock provider.

Parses the rendered prompt layout and produces schema-conformant output by
exact extraction: failure modes from bracketed canonical markers embedded in
descriptions, causal chains from planted chain markers, per-farm patterns
from marker frequencies, and a fixed-template audit report. Output is a pure
function of the prompt text, which makes every downstream stage testable
offline and byte-reproducible.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import date

from .gateway import GatewayError

ROLE_WORKFLOWS = (
    ("Reliability Engineer", "failure_modes"),
    ("Diagnostic Engineer", "causal_chain"),
    ("O&M Analyst", "site_comparison"),
    ("Data Quality Expert", "quality_audit"),
)

_BRACKET_TOKEN_RE = re.compile(r"\[([A-Z][A-Z0-9_-]{1,23})\]")
_CHAIN_MARKER_RE = re.compile(r"\[(CH\d+)-(LOW|MEDIUM|HIGH)\]")
_TURBINE_RE = re.compile(r"turbine '([^']+)'")
MAX_QUOTES_PER_MODE = 3
MAX_PATTERNS_PER_FARM = 3


class MockParseError(GatewayError):
    def __init__(self, message: str):
        super().__init__("unparseable_prompt", message)


@dataclass(frozen=True, slots=True)
class _PayloadLine:
    log_id: str
    event_date: date
    subsystem: str
    description: str
    observations: str
    farm: str | None


def _parse_prompt(prompt_text: str) -> tuple[str, str, list[_PayloadLine]]:
    """Return (workflow, context_section, payload_lines)."""
    workflow = None
    for role, name in ROLE_WORKFLOWS:
        if role in prompt_text:
            workflow = name
            break
    if workflow is None:
        raise MockParseError("no recognized role in prompt")

    lines = prompt_text.splitlines()
    try:
        data_start = next(i for i, l in enumerate(lines) if l.strip() == "# DATA")
    except StopIteration:
        raise MockParseError("prompt has no # DATA section") from None
    context = "\n".join(lines[:data_start])

    payload: list[_PayloadLine] = []
    farm: str | None = None
    for line in lines[data_start + 1 :]:
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("# ") and not stripped.startswith("##"):
            break  # next top-level section (e.g. an appended correction)
        if stripped.startswith("## FARM "):
            farm = stripped[len("## FARM ") :].strip()
            continue
        if stripped.startswith("log_id |"):
            continue
        parts = stripped.split(" | ", 4)
        if len(parts) != 5:
            raise MockParseError(f"payload line does not have five fields: {stripped[:80]!r}")
        log_id, date_text, subsystem, description, observations = parts
        try:
            event_date = date.fromisoformat(date_text)
        except ValueError:
            raise MockParseError(f"payload line has a non-ISO date: {date_text!r}") from None
        payload.append(
            _PayloadLine(
                log_id=log_id,
                event_date=event_date,
                subsystem=subsystem,
                description=description,
                observations=observations,
                farm=farm,
            )
        )
    if not payload:
        raise MockParseError("prompt payload contains no log lines")
    return workflow, context, payload


def _first_token(line: _PayloadLine) -> str | None:
    match = _BRACKET_TOKEN_RE.search(f"{line.description} {line.observations}")
    return match.group(1) if match else None


def _failure_modes(payload: list[_PayloadLine]) -> str:
    groups: dict[str, list[_PayloadLine]] = {}
    for line in payload:
        token = _first_token(line)
        if token is not None:
            groups.setdefault(token, []).append(line)
    modes = []
    for token, members in groups.items():
        modes.append(
            {
                "name": f"{token} fault cluster",
                "description": f"Semantically similar events sharing the marker [{token}].",
                "estimated_count": len(members),
                "supporting_quotes": [
                    {"log_id": m.log_id, "quote": m.description}
                    for m in members[:MAX_QUOTES_PER_MODE]
                ],
            }
        )
    return json.dumps({"modes": modes}, ensure_ascii=False, indent=2)


def _causal_chains(context: str, payload: list[_PayloadLine]) -> str:
    turbine_match = _TURBINE_RE.search(context)
    turbine_id = turbine_match.group(1) if turbine_match else "unknown"
    chains: dict[str, tuple[str, list[_PayloadLine]]] = {}
    for line in payload:
        match = _CHAIN_MARKER_RE.search(f"{line.description} {line.observations}")
        if match is None:
            continue
        chain_id, confidence = match.group(1), match.group(2).lower()
        chains.setdefault(chain_id, (confidence, []))[1].append(line)
    entries = []
    for chain_id, (confidence, members) in chains.items():
        if len(members) < 2:
            continue
        ordered = sorted(members, key=lambda m: (m.event_date, m.log_id))
        entries.append(
            {
                "chain_id": chain_id,
                "member_log_ids": [m.log_id for m in ordered],
                "hypothesis": (
                    f"The {len(ordered)} events marked {chain_id} form a progressing fault: "
                    "early symptoms recur until the final intervention replaces the degraded component."
                ),
                "confidence": confidence,
                "homogeneous": len({m.subsystem for m in ordered}) == 1,
                "_first": ordered[0].event_date,
            }
        )
    entries.sort(key=lambda e: (e["_first"], e["chain_id"]))
    for entry in entries:
        del entry["_first"]
    return json.dumps({"turbine_id": turbine_id, "chains": entries}, ensure_ascii=False, indent=2)


def _site_comparison(payload: list[_PayloadLine]) -> str:
    by_farm: dict[str, list[_PayloadLine]] = {}
    for line in payload:
        if line.farm is None:
            raise MockParseError("comparison payload line outside a ## FARM section")
        by_farm.setdefault(line.farm, []).append(line)
    farms = []
    for farm, lines in by_farm.items():
        counts: dict[str, int] = {}
        for line in lines:
            token = _first_token(line)
            if token is not None:
                counts[token] = counts.get(token, 0) + 1
        top = sorted(counts.items(), key=lambda item: (-item[1], item[0]))[:MAX_PATTERNS_PER_FARM]
        if top:
            patterns = [
                {
                    "pattern": f"Recurring {token} interventions ({count} of {len(lines)} logs)",
                    "hypothesis": (
                        f"The concentration of {token} events at farm {farm} suggests a site- or "
                        "model-specific stress factor; flagged for expert review."
                    ),
                }
                for token, count in top
            ]
        else:
            patterns = [
                {
                    "pattern": "No dominant recurring marker",
                    "hypothesis": "Work orders at this farm are heterogeneous; no single pattern stands out.",
                }
            ]
        farms.append({"farm_id": farm, "patterns": patterns})
    return json.dumps({"farms": farms}, ensure_ascii=False, indent=2)


def _example_ids(candidates: list[_PayloadLine], fallback: list[_PayloadLine]) -> str:
    chosen = candidates[:3] if candidates else fallback[:1]
    return ", ".join(line.log_id for line in chosen)


def _quality_audit(payload: list[_PayloadLine]) -> str:
    redundant = [l for l in payload if l.observations and l.observations == l.description]
    vague = [l for l in payload if len(l.description.split()) <= 4]
    return "\n".join(
        (
            "## Issues",
            "",
            "### Redundancy between Description and Observations",
            "The observations field frequently replicates the description verbatim or adds "
            "placeholders instead of supplementary detail, wasting a field meant for context.",
            f"Examples: {_example_ids(redundant, payload)}",
            "",
            "### Lack of Specificity and Quantification",
            "Many descriptions state a failure generically without the component instance, "
            "measured values, or units needed for root cause analysis.",
            f"Examples: {_example_ids(vague, payload)}",
            "",
            "### Inconsistent Terminology and Formatting",
            "Similar interventions are described with different terms and mixed Portuguese and "
            "English, and error-code formats vary, which complicates aggregation.",
            f"Examples: {_example_ids(payload[:3], payload)}",
            "",
            "## Recommendations",
            "",
            "### Implement Structured Data Entry",
            "Mandate a template that defines the purpose of each free-text field: the "
            "description states component and problem, the observations capture actions, "
            "parts, and measurements.",
            "",
            "### Develop and Enforce Controlled Vocabularies",
            "Create a standard glossary for components, failure types, and maintenance "
            "actions, and back data entry with drop-downs wherever possible.",
            "",
            "### Promote a Culture of Quantitative Reporting",
            "Train technicians to record specific measurements with units instead of "
            "qualitative statements.",
            "",
        )
    )


def mock_complete(prompt_text: str) -> str:
    """Deterministically answer a rendered prompt with schema-conformant output."""
    workflow, context, payload = _parse_prompt(prompt_text)
    if workflow == "failure_modes":
        return _failure_modes(payload)
    if workflow == "causal_chain":
        return _causal_chains(context, payload)
    if workflow == "site_comparison":
        return _site_comparison(payload)
    return _quality_audit(payload)


class MockProvider:
    """Offline provider: exact extraction over generator-planted markers."""

    name = "mock"

    def complete(self, prompt_text: str) -> str:
        return mock_complete(prompt_text)
