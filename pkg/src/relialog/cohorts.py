"""Select analytical cohorts: a critical subsystem, the highest-failure turbine
by normalized event frequency, and a comparative farm group with site context."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from itertools import combinations

from ._text import fold
from .corpus import Corpus, MaintenanceLog, SiteContext

DAYS_PER_YEAR = 365.25
DEFAULT_MIN_OBSERVATION_DAYS = 180
DEFAULT_MAX_COUNT_RATIO = 2.0
DEFAULT_GROUP_SIZE = 3

#: Mixed-language subsystem aliases, folded alias -> folded canonical name.
DEFAULT_SUBSYSTEM_ALIASES = {
    "conversor": "power converter",
    "conversor de potencia": "power converter",
    "caixa de engrenagens": "gearbox",
    "gerador": "generator",
}


class CohortError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class CohortKind(str, Enum):
    SUBSYSTEM = "subsystem"
    TURBINE_SEQUENCE = "turbine_sequence"
    FARM_GROUP = "farm_group"


@dataclass(frozen=True)
class Cohort:
    kind: CohortKind
    label: str
    member_log_ids: tuple[str, ...]
    rationale: str
    context: tuple[SiteContext, ...] | None = None

    def __len__(self) -> int:
        return len(self.member_log_ids)


def validate_cohort(cohort: Cohort, corpus: Corpus) -> None:
    """Check membership and ordering invariants against a corpus."""
    missing = [log_id for log_id in cohort.member_log_ids if not corpus.has(log_id)]
    if missing:
        raise CohortError("unknown_member", f"cohort references unknown log ids: {missing[:5]}")
    if cohort.kind is CohortKind.TURBINE_SEQUENCE:
        keys = [corpus.get(log_id).sort_key() for log_id in cohort.member_log_ids]
        if keys != sorted(keys):
            raise CohortError("unsorted_sequence", "turbine_sequence members must be date-sorted")
    if cohort.kind is CohortKind.FARM_GROUP:
        farms = {corpus.get(log_id).farm_id for log_id in cohort.member_log_ids}
        if len(farms) < 2:
            raise CohortError("too_few_farms", "farm_group needs at least two farms")


def _canonical_name(name: str, aliases: dict[str, str]) -> str:
    folded = fold(name).strip()
    return aliases.get(folded, folded)


def subsystem_cohort(
    corpus: Corpus,
    subsystem_name: str,
    aliases: dict[str, str] | None = None,
) -> Cohort:
    """All logs of one subsystem, matched case-/diacritic-insensitively via aliases."""
    if not subsystem_name.strip():
        raise CohortError("empty_query", "subsystem_name must be non-empty")
    alias_table = DEFAULT_SUBSYSTEM_ALIASES if aliases is None else aliases
    target = _canonical_name(subsystem_name, alias_table)
    members = [
        record.log_id
        for record in corpus.records
        if _canonical_name(record.subsystem_name, alias_table) == target
    ]
    if not members:
        raise CohortError("empty_cohort", f"no logs match subsystem {subsystem_name!r}")
    return Cohort(
        kind=CohortKind.SUBSYSTEM,
        label=subsystem_name,
        member_log_ids=tuple(members),
        rationale=(
            f"All {len(members)} logs whose subsystem matches {subsystem_name!r} "
            "(case- and diacritic-insensitive, alias table applied)."
        ),
    )


def subsystem_frequency_table(corpus: Corpus) -> list[tuple[str, int]]:
    """Per-subsystem log counts, descending, ties broken alphabetically."""
    if not corpus.records:
        raise CohortError("empty_corpus", "cannot tabulate an empty corpus")
    counts: dict[str, int] = {}
    for record in corpus.records:
        counts[record.subsystem_name] = counts.get(record.subsystem_name, 0) + 1
    return sorted(counts.items(), key=lambda item: (-item[1], item[0]))


def _turbine_groups(corpus: Corpus) -> dict[str, list[MaintenanceLog]]:
    groups: dict[str, list[MaintenanceLog]] = {}
    for record in corpus.records:
        groups.setdefault(record.turbine_id, []).append(record)
    return groups


def high_failure_turbine(
    corpus: Corpus,
    min_observation_days: int = DEFAULT_MIN_OBSERVATION_DAYS,
    *,
    normalize_by_age: bool = False,
) -> tuple[str, float]:
    """Turbine with the highest events-per-year of observed operation.

    Observation span is last-minus-first log date per turbine (or days since
    commissioning via the age field when normalize_by_age is set). Turbines
    observed for less than min_observation_days are excluded. Ties go to the
    higher raw count, then the lexicographically smaller turbine id.
    """
    if not corpus.records:
        raise CohortError("empty_corpus", "no logs to rank")
    groups = _turbine_groups(corpus)
    best: tuple[float, int, str] | None = None
    # Iterating ids in sorted order with strict improvement breaks full ties
    # in favor of the lexicographically smaller turbine id.
    for turbine_id in sorted(groups):
        logs = groups[turbine_id]
        if normalize_by_age:
            span_days = max(log.age_at_event_days for log in logs)
        else:
            dates = [log.event_date for log in logs]
            span_days = (max(dates) - min(dates)).days
        if span_days < min_observation_days:
            continue
        rate = len(logs) / (span_days / DAYS_PER_YEAR)
        if best is None or (rate, len(logs)) > (best[0], best[1]):
            best = (rate, len(logs), turbine_id)
    if best is None:
        raise CohortError(
            "no_eligible_turbine",
            f"no turbine observed for at least {min_observation_days} days",
        )
    return best[2], best[0]


def turbine_sequence_cohort(
    corpus: Corpus,
    turbine_id: str | None = None,
    min_observation_days: int = DEFAULT_MIN_OBSERVATION_DAYS,
    *,
    normalize_by_age: bool = False,
) -> Cohort:
    """Chronological event sequence for one turbine (default: highest-failure)."""
    if turbine_id is None:
        turbine_id, rate = high_failure_turbine(
            corpus, min_observation_days, normalize_by_age=normalize_by_age
        )
        denominator = (
            "days since commissioning" if normalize_by_age else "first-to-last span"
        )
        rationale = (
            f"Turbine {turbine_id} has the highest normalized event frequency: "
            f"{rate:.2f} events per observed year (count / ({denominator} / {DAYS_PER_YEAR}))."
        )
    else:
        rationale = f"Operator-selected turbine {turbine_id}, full chronological sequence."
    members = [
        record.log_id for record in corpus.records if record.turbine_id == turbine_id
    ]
    if not members:
        raise CohortError("empty_cohort", f"no logs for turbine {turbine_id!r}")
    return Cohort(
        kind=CohortKind.TURBINE_SEQUENCE,
        label=turbine_id,
        member_log_ids=tuple(members),
        rationale=rationale,
    )


def _farm_counts(corpus: Corpus) -> dict[str, int]:
    counts: dict[str, int] = {}
    for record in corpus.records:
        counts[record.farm_id] = counts.get(record.farm_id, 0) + 1
    return counts


def _ratio_ok(counts: list[int], max_ratio: float) -> bool:
    return max(counts) <= max_ratio * min(counts)


def _natural_experiment_bonus(contexts: list[SiteContext]) -> int:
    """1 when the group contains both a same-site/different-model pair and a
    same-model/different-site pair, else 0. Site identity is taken from
    matching non-empty location_notes."""
    same_site_diff_model = False
    same_model_diff_site = False
    for a, b in combinations(contexts, 2):
        same_site = bool(a.location_notes) and a.location_notes == b.location_notes
        same_model = a.turbine_model_label == b.turbine_model_label
        if same_site and not same_model:
            same_site_diff_model = True
        if same_model and not same_site:
            same_model_diff_site = True
    return int(same_site_diff_model and same_model_diff_site)


def comparative_group(
    corpus: Corpus,
    contexts: dict[str, SiteContext],
    farms: list[str] | None = None,
    *,
    max_ratio: float = DEFAULT_MAX_COUNT_RATIO,
    group_size: int = DEFAULT_GROUP_SIZE,
) -> Cohort:
    """Comparative farm-group cohort with site contexts attached.

    With an explicit farm list, farms are taken as given (contexts still
    required). Automatic selection searches all size-k farm subsets (k =
    group_size, capped by candidate count, minimum 2) for groups whose
    pairwise log-count ratio stays within max_ratio, preferring groups that
    form a natural experiment and then the largest total log count.
    """
    counts = _farm_counts(corpus)
    if farms is not None:
        if len(farms) < 2:
            raise CohortError("no_qualifying_group", "a farm group needs at least two farms")
        selected = list(farms)
        for farm in selected:
            if counts.get(farm, 0) == 0:
                raise CohortError("no_qualifying_group", f"farm {farm!r} has no logs")
        rationale = f"Operator-selected comparison group: {', '.join(selected)}."
    else:
        candidates = sorted(farm for farm in counts if farm in contexts)
        size = min(group_size, len(candidates))
        if size < 2:
            raise CohortError(
                "no_qualifying_group", "need at least two farms with logs and contexts"
            )
        best_group: tuple[int, int] | None = None
        # combinations() over sorted candidates emits groups in lexicographic
        # order; strict improvement keeps the smallest group on ties.
        for group in combinations(candidates, size):
            group_counts = [counts[farm] for farm in group]
            if not _ratio_ok(group_counts, max_ratio):
                continue
            bonus = _natural_experiment_bonus([contexts[farm] for farm in group])
            key = (bonus, sum(group_counts))
            if best_group is None or key > best_group:
                best_group = key
                selected = list(group)
        if best_group is None:
            raise CohortError(
                "no_qualifying_group",
                f"no {size}-farm group with pairwise count ratio <= {max_ratio}",
            )
        rationale = (
            f"Automatic selection over all {size}-farm groups: pairwise log-count "
            f"ratio <= {max_ratio}, preferring natural-experiment pairs, then total volume."
        )
    missing = [farm for farm in selected if farm not in contexts]
    if missing:
        raise CohortError("missing_context", f"no site context for farms: {missing}")
    member_farms = set(selected)
    members = [r.log_id for r in corpus.records if r.farm_id in member_farms]
    attached = tuple(contexts[farm] for farm in sorted(selected))
    return Cohort(
        kind=CohortKind.FARM_GROUP,
        label=", ".join(sorted(selected)),
        member_log_ids=tuple(members),
        rationale=rationale,
        context=attached,
    )


def cohort_to_manifest(cohort: Cohort) -> dict:
    manifest: dict = {
        "kind": cohort.kind.value,
        "label": cohort.label,
        "rationale": cohort.rationale,
        "member_log_ids": list(cohort.member_log_ids),
    }
    if cohort.context is not None:
        manifest["context"] = [
            {
                "farm_id": c.farm_id,
                "turbine_model_label": c.turbine_model_label,
                "n_turbines": c.n_turbines,
                "rated_power_mw": c.rated_power_mw,
                "rotor_diameter_m": c.rotor_diameter_m,
                "hub_height_m": c.hub_height_m,
                "location_notes": c.location_notes,
            }
            for c in cohort.context
        ]
    return manifest


def cohort_from_manifest(manifest: dict) -> Cohort:
    context = None
    if "context" in manifest:
        context = tuple(SiteContext(**entry) for entry in manifest["context"])
    return Cohort(
        kind=CohortKind(manifest["kind"]),
        label=manifest["label"],
        member_log_ids=tuple(manifest["member_log_ids"]),
        rationale=manifest["rationale"],
        context=context,
    )
