"""Secondary cleaning pipeline: informativeness filtering, regex noise removal,
non-turbine exclusion, deduplication, and reversible farm anonymization."""

from __future__ import annotations

import csv
import io
import re
import unicodedata
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

from ._text import fold
from .corpus import Corpus, MaintenanceLog, Provenance, SiteContext, build_corpus

MAX_FARMS = 26 * 26

DEFAULT_PLACEHOLDER_BLOCKLIST = ("none", "n/a", "na", "ok", "-", "teste", "test", "tbd")
DEFAULT_SUBSYSTEM_BLOCKLIST = ("substation", "met mast", "roads", "buildings")
# Vendor/system prefixes stripped from free text; anchored, case-insensitive.
DEFAULT_BOILERPLATE_PATTERNS = (
    r"^(?:auto(?:log)?|system|sistema)\s*:\s*",
    r"^wo\s*\d+\s*[-:]\s*",
)

_EDGE_NOISE = set("-_*~=+<>|#•·\\/")
_REPEAT_PUNCT_RE = re.compile(r"([^\w\s])\1+")
_WS_RE = re.compile(r"\s+")
_CODE_TOKEN_RE = re.compile(r"\d")


class PrepError(Exception):
    """Raised for anonymization/glossary failures."""


class FilterReason(str, Enum):
    KEPT = "kept"
    UNINFORMATIVE = "uninformative_descriptor"
    NON_TURBINE = "non_turbine_infrastructure"
    DUPLICATE = "duplicate_record"


@dataclass(frozen=True, slots=True)
class FilterDecision:
    log_id: str
    kept: bool
    reason: FilterReason

    def __post_init__(self) -> None:
        if self.kept != (self.reason is FilterReason.KEPT):
            raise ValueError("kept flag must agree with reason")


@dataclass(frozen=True, slots=True)
class InformativenessPolicy:
    min_token_count: int = 3
    placeholder_blocklist: tuple[str, ...] = DEFAULT_PLACEHOLDER_BLOCKLIST


@dataclass(frozen=True, slots=True)
class PrepPolicy:
    informativeness: InformativenessPolicy = InformativenessPolicy()
    subsystem_blocklist: tuple[str, ...] = DEFAULT_SUBSYSTEM_BLOCKLIST
    boilerplate_patterns: tuple[str, ...] = DEFAULT_BOILERPLATE_PATTERNS
    deduplicate: bool = True


@dataclass(frozen=True)
class Glossary:
    """Bijection between original farm identifiers and two-letter codes."""

    forward: dict[str, str]
    reverse: dict[str, str]

    def __post_init__(self) -> None:
        if len(self.forward) != len(self.reverse):
            raise PrepError("glossary is not a bijection")
        for original, code in self.forward.items():
            if self.reverse.get(code) != original:
                raise PrepError("glossary forward/reverse maps disagree")


def is_informative(text: str, policy: InformativenessPolicy | None = None) -> bool:
    """True when free text plausibly carries analyzable semantics.

    Case- and diacritic-insensitive; placeholders, too-short entries, and
    entries consisting only of error codes are uninformative.
    """
    policy = policy or InformativenessPolicy()
    folded = fold(text).strip()
    if not folded:
        return False
    if folded in {fold(entry) for entry in policy.placeholder_blocklist}:
        return False
    token_list = re.findall(r"\w+", folded)
    if len(token_list) < policy.min_token_count:
        return False
    if all(_CODE_TOKEN_RE.search(token) for token in token_list):
        return False
    return True


def _clean_once(text: str, boilerplate: tuple[re.Pattern, ...]) -> str:
    # Control characters: tabs/newlines become spaces, the rest are dropped.
    text = "".join(
        " " if ch in "\t\n\r" else ch
        for ch in text
        if ch in "\t\n\r" or unicodedata.category(ch) != "Cc"
    )
    for pattern in boilerplate:
        text = pattern.sub("", text, count=1)
    text = _REPEAT_PUNCT_RE.sub(r"\1", text)
    text = _WS_RE.sub(" ", text).strip()
    while text and (text[0] in _EDGE_NOISE or text[0].isspace()):
        text = text[1:]
    while text and (text[-1] in _EDGE_NOISE or text[-1].isspace()):
        text = text[:-1]
    return text


def clean_text(text: str, boilerplate_patterns: tuple[str, ...] = DEFAULT_BOILERPLATE_PATTERNS) -> str:
    """Remove syntactic noise from free text; idempotent, never lengthens.

    Alphanumeric tokens (error codes like "FM300") pass through verbatim.
    """
    compiled = tuple(re.compile(p, re.IGNORECASE) for p in boilerplate_patterns)
    current = text
    # Iterate to a fixpoint so composition of the steps is exactly idempotent.
    for _ in range(8):
        cleaned = _clean_once(current, compiled)
        if cleaned == current:
            return cleaned
        current = cleaned
    return current


def clean_corpus(corpus: Corpus, policy: PrepPolicy | None = None) -> Corpus:
    """Apply clean_text to both free-text fields of every record."""
    policy = policy or PrepPolicy()
    cleaned_records = []
    for record in corpus.records:
        observations = record.observations
        if observations is not None:
            observations = clean_text(observations, policy.boilerplate_patterns) or None
        cleaned_records.append(
            replace(
                record,
                description=clean_text(record.description, policy.boilerplate_patterns),
                observations=observations,
            )
        )
    return build_corpus(cleaned_records, corpus.provenance)


def filter_corpus(
    corpus: Corpus, policy: PrepPolicy | None = None
) -> tuple[Corpus, list[FilterDecision]]:
    """Drop junk records, returning the kept corpus and one decision per record.

    Membership only: record contents are never mutated here.
    """
    policy = policy or PrepPolicy()
    blocked_subsystems = {fold(name) for name in policy.subsystem_blocklist}
    kept_records: list[MaintenanceLog] = []
    decisions: list[FilterDecision] = []
    seen_keys: set[tuple[str, str, str, str]] = set()

    for record in corpus.records:
        reason = FilterReason.KEPT
        if fold(record.subsystem_name) in blocked_subsystems:
            reason = FilterReason.NON_TURBINE
        elif not (
            is_informative(record.description, policy.informativeness)
            or (record.observations and is_informative(record.observations, policy.informativeness))
        ):
            reason = FilterReason.UNINFORMATIVE
        elif policy.deduplicate:
            key = (record.farm_id, record.turbine_id, record.event_date.isoformat(), record.description)
            if key in seen_keys:
                reason = FilterReason.DUPLICATE
            else:
                seen_keys.add(key)

        kept = reason is FilterReason.KEPT
        decisions.append(FilterDecision(log_id=record.log_id, kept=kept, reason=reason))
        if kept:
            kept_records.append(record)

    provenance = Provenance(
        source=corpus.provenance.source,
        ingested_at=corpus.provenance.ingested_at,
        read=len(corpus.records),
        accepted=len(kept_records),
        rejected=len(corpus.records) - len(kept_records),
    )
    return build_corpus(kept_records, provenance), decisions


def _code_for_index(index: int) -> str:
    first, second = divmod(index, 26)
    return chr(ord("A") + first) + chr(ord("A") + second)


def anonymize(corpus: Corpus) -> tuple[Corpus, Glossary]:
    """Replace farm identifiers with two-letter codes assigned AA, AB, ... in
    lexicographic order of the original names."""
    farms = sorted({record.farm_id for record in corpus.records})
    if len(farms) > MAX_FARMS:
        raise PrepError(f"cannot anonymize more than {MAX_FARMS} farms ({len(farms)} present)")
    forward = {farm: _code_for_index(i) for i, farm in enumerate(farms)}
    reverse = {code: farm for farm, code in forward.items()}
    glossary = Glossary(forward=forward, reverse=reverse)
    anonymized = [replace(record, farm_id=forward[record.farm_id]) for record in corpus.records]
    return build_corpus(anonymized, corpus.provenance), glossary


def deanonymize(code: str, glossary: Glossary) -> str:
    try:
        return glossary.reverse[code]
    except KeyError:
        raise PrepError(f"unknown_code: {code!r} not present in glossary") from None


def map_context_keys(
    contexts: dict[str, SiteContext], glossary: Glossary
) -> dict[str, SiteContext]:
    """Re-key a site-context map through the glossary (original name -> code)."""
    mapped: dict[str, SiteContext] = {}
    for farm_id, context in contexts.items():
        code = glossary.forward.get(farm_id, farm_id)
        mapped[code] = replace(context, farm_id=code)
    return mapped


def glossary_to_table(glossary: Glossary) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(("farm_id", "code"))
    for farm, code in sorted(glossary.forward.items()):
        writer.writerow((farm, code))
    return buffer.getvalue()


def glossary_from_table(text: str) -> Glossary:
    forward: dict[str, str] = {}
    rows = csv.reader(io.StringIO(text))
    for row in rows:
        if not row or row[0].startswith("#") or row == ["farm_id", "code"]:
            continue
        forward[row[0]] = row[1]
    return Glossary(forward=forward, reverse={code: farm for farm, code in forward.items()})


def decisions_to_table(decisions: list[FilterDecision]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(("log_id", "reason"))
    for decision in decisions:
        writer.writerow((decision.log_id, decision.reason.value))
    return buffer.getvalue()


def parse_policy_file(path: str | Path) -> PrepPolicy:
    """Read a key=value policy file (documented in the README)."""
    values: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()

    def split_list(key: str, default: tuple[str, ...]) -> tuple[str, ...]:
        if key not in values:
            return default
        return tuple(item.strip() for item in values[key].split(",") if item.strip())

    informativeness = InformativenessPolicy(
        min_token_count=int(values.get("min_token_count", 3)),
        placeholder_blocklist=split_list("placeholder_blocklist", DEFAULT_PLACEHOLDER_BLOCKLIST),
    )
    patterns = values.get("boilerplate_patterns")
    return PrepPolicy(
        informativeness=informativeness,
        subsystem_blocklist=split_list("subsystem_blocklist", DEFAULT_SUBSYSTEM_BLOCKLIST),
        boilerplate_patterns=tuple(patterns.split("|")) if patterns else DEFAULT_BOILERPLATE_PATTERNS,
        deduplicate=values.get("deduplicate", "true").lower() != "false",
    )
