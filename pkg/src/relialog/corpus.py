"""Ingest raw maintenance-log tables into a validated, canonically ordered corpus.

Input files are delimiter-separated tables (comma or semicolon, auto-detected
from the header row) with one header line. Lines starting with ``#`` are
treated as comments and skipped, which is how pipeline outputs embed their
metadata without breaking re-ingestion.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from pathlib import Path

from ._text import fold

MIN_EVENT_DATE = date(1990, 1, 1)

MANDATORY_FIELDS = (
    "log_id",
    "farm_id",
    "turbine_id",
    "subsystem_name",
    "event_date",
    "age_at_event_days",
    "work_class",
    "action_class",
    "description",
)
OPTIONAL_FIELDS = ("observations",)

#: Identity mapping for files that already use canonical column names.
DEFAULT_MAPPING = {name: name for name in MANDATORY_FIELDS + OPTIONAL_FIELDS}

DEFAULT_MAX_REJECT_FRACTION = 0.5


class WorkClass(str, Enum):
    CORRECTIVE = "corrective"
    PREVENTIVE = "preventive"


class ActionClass(str, Enum):
    REPAIR = "repair"
    REPLACEMENT = "replacement"
    INSPECTION = "inspection"
    OTHER = "other"


# Mixed Portuguese/English operator vocabulary; extend via the `synonyms`
# argument of ingest(). Keys are matched case- and diacritic-insensitively.
DEFAULT_WORK_CLASS_SYNONYMS = {
    "corrective": WorkClass.CORRECTIVE,
    "corretiva": WorkClass.CORRECTIVE,
    "correctiva": WorkClass.CORRECTIVE,
    "cm": WorkClass.CORRECTIVE,
    "preventive": WorkClass.PREVENTIVE,
    "preventiva": WorkClass.PREVENTIVE,
    "pm": WorkClass.PREVENTIVE,
}

DEFAULT_ACTION_CLASS_SYNONYMS = {
    "repair": ActionClass.REPAIR,
    "reparacao": ActionClass.REPAIR,
    "reparar": ActionClass.REPAIR,
    "fix": ActionClass.REPAIR,
    "replacement": ActionClass.REPLACEMENT,
    "substituicao": ActionClass.REPLACEMENT,
    "troca": ActionClass.REPLACEMENT,
    "inspection": ActionClass.INSPECTION,
    "inspecao": ActionClass.INSPECTION,
    "inspeccao": ActionClass.INSPECTION,
    "other": ActionClass.OTHER,
    "outro": ActionClass.OTHER,
    "outros": ActionClass.OTHER,
}


class CorpusError(Exception):
    """Raised for unrecoverable ingest problems (missing file, bad mapping)."""


class SiteContextError(Exception):
    """Raised for malformed site-context tables."""


@dataclass(frozen=True, slots=True)
class MaintenanceLog:
    """One work-order record in canonical form."""

    log_id: str
    farm_id: str
    turbine_id: str
    subsystem_name: str
    event_date: date
    age_at_event_days: int
    work_class: WorkClass
    action_class: ActionClass
    description: str
    observations: str | None = None

    def sort_key(self) -> tuple[date, str]:
        return (self.event_date, self.log_id)

    def free_text(self) -> str:
        if self.observations:
            return f"{self.description}\n{self.observations}"
        return self.description


@dataclass(frozen=True, slots=True)
class RejectedRow:
    line_no: int
    reason: str
    log_id: str | None = None


@dataclass(frozen=True, slots=True)
class Provenance:
    source: str
    ingested_at: datetime
    read: int
    accepted: int
    rejected: int

    def __post_init__(self) -> None:
        if self.read != self.accepted + self.rejected:
            raise ValueError("provenance counts must satisfy read = accepted + rejected")


@dataclass(frozen=True)
class Corpus:
    """Ordered, id-unique collection of maintenance logs."""

    records: tuple[MaintenanceLog, ...]
    provenance: Provenance
    rejected_rows: tuple[RejectedRow, ...] = ()
    _by_id: dict[str, MaintenanceLog] = field(
        init=False, repr=False, compare=False, default_factory=dict
    )

    def __post_init__(self) -> None:
        by_id: dict[str, MaintenanceLog] = {}
        for record in self.records:
            if record.log_id in by_id:
                raise ValueError(f"duplicate log_id in corpus: {record.log_id}")
            by_id[record.log_id] = record
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def ids(self) -> set[str]:
        return set(self._by_id)

    def get(self, log_id: str) -> MaintenanceLog:
        return self._by_id[log_id]

    def has(self, log_id: str) -> bool:
        return log_id in self._by_id


def build_corpus(
    records: list[MaintenanceLog] | tuple[MaintenanceLog, ...],
    provenance: Provenance,
    rejected_rows: tuple[RejectedRow, ...] = (),
) -> Corpus:
    """Sort records into canonical (event_date, log_id) order and validate."""
    ordered = tuple(sorted(records, key=MaintenanceLog.sort_key))
    return Corpus(records=ordered, provenance=provenance, rejected_rows=rejected_rows)


@dataclass(frozen=True, slots=True)
class SiteContext:
    """Operator-supplied technical and environmental context for one farm."""

    farm_id: str
    turbine_model_label: str
    n_turbines: int
    rated_power_mw: float
    rotor_diameter_m: float
    hub_height_m: float
    location_notes: str = ""

    def __post_init__(self) -> None:
        if self.n_turbines <= 0:
            raise ValueError("n_turbines must be positive")
        if self.rated_power_mw <= 0:
            raise ValueError("rated_power_mw must be positive")


def parse_event_date(raw: str) -> date:
    """Accept ISO-8601 (YYYY-MM-DD) and DD/MM/YYYY; day-first on ambiguity."""
    text = raw.strip()
    if not text:
        raise ValueError("empty date")
    try:
        return date.fromisoformat(text)
    except ValueError:
        pass
    parts = text.split("/")
    if len(parts) == 3:
        day, month, year = parts
        return date(int(year), int(month), int(day))
    raise ValueError(f"unrecognized date format: {raw!r}")


def _read_table(path: Path) -> tuple[list[str], list[tuple[int, dict[str, str]]]]:
    """Read a delimited table, returning the header and (line_no, row) pairs."""
    raw_lines: list[tuple[int, str]] = []
    with open(path, encoding="utf-8", newline="") as fh:
        for line_no, line in enumerate(fh, 1):
            if line.startswith("#") or not line.strip():
                continue
            raw_lines.append((line_no, line))
    if not raw_lines:
        return [], []
    header_line = raw_lines[0][1]
    delimiter = ";" if header_line.count(";") > header_line.count(",") else ","
    parsed = list(csv.reader(io.StringIO("".join(line for _, line in raw_lines)), delimiter=delimiter))
    header = [name.strip() for name in parsed[0]]
    rows: list[tuple[int, dict[str, str]]] = []
    for (line_no, _), values in zip(raw_lines[1:], parsed[1:]):
        row = dict(zip(header, [v.strip() for v in values]))
        rows.append((line_no, row))
    return header, rows


def _lookup_enum(raw: str, synonyms: dict[str, Enum]) -> Enum | None:
    return synonyms.get(fold(raw.strip()))


def ingest(
    source: str | Path,
    mapping: dict[str, str] | None = None,
    *,
    work_class_synonyms: dict[str, WorkClass] | None = None,
    action_class_synonyms: dict[str, ActionClass] | None = None,
    max_reject_fraction: float = DEFAULT_MAX_REJECT_FRACTION,
) -> Corpus:
    """Ingest a raw maintenance-log table into a canonical Corpus.

    Rows failing normalization are recorded as RejectedRow with a reason code;
    exceeding `max_reject_fraction` aborts, signalling a wrong column mapping.
    """
    path = Path(source)
    if not path.exists():
        raise CorpusError(f"input file not found: {path}")
    mapping = dict(DEFAULT_MAPPING if mapping is None else mapping)
    for name in MANDATORY_FIELDS:
        if name not in mapping:
            raise CorpusError(f"mapping is missing mandatory field: {name}")
    work_syn = {fold(k): v for k, v in (work_class_synonyms or DEFAULT_WORK_CLASS_SYNONYMS).items()}
    action_syn = {
        fold(k): v for k, v in (action_class_synonyms or DEFAULT_ACTION_CLASS_SYNONYMS).items()
    }

    header, rows = _read_table(path)
    for name in MANDATORY_FIELDS:
        if mapping[name] not in header:
            raise CorpusError(f"column {mapping[name]!r} (for {name}) not present in header")
    has_observations = mapping.get("observations") in header

    today = date.today()
    accepted: list[MaintenanceLog] = []
    rejected: list[RejectedRow] = []
    seen_ids: set[str] = set()

    for line_no, row in rows:
        values = {name: row.get(col, "") for name, col in mapping.items()}
        log_id = values["log_id"].strip()

        def reject(reason: str) -> None:
            rejected.append(RejectedRow(line_no=line_no, reason=reason, log_id=log_id or None))

        if not all(values[f].strip() for f in ("log_id", "farm_id", "turbine_id", "subsystem_name")):
            reject("missing_field")
            continue
        if log_id in seen_ids:
            reject("duplicate_log_id")
            continue

        description = values["description"].strip()
        observations = values["observations"].strip() if has_observations else ""
        if not description and not observations:
            reject("no_free_text")
            continue
        if not description:
            # A record may arrive with only observations filled in; promote so
            # every accepted record has a non-empty description.
            description, observations = observations, ""

        try:
            event_date = parse_event_date(values["event_date"])
        except ValueError:
            reject("unparseable_date")
            continue
        if not (MIN_EVENT_DATE <= event_date <= today):
            reject("date_out_of_range")
            continue

        try:
            age = int(values["age_at_event_days"].strip())
        except ValueError:
            reject("bad_age")
            continue
        if age < 0:
            reject("bad_age")
            continue

        work_class = _lookup_enum(values["work_class"], work_syn)
        if work_class is None:
            reject("unknown_work_class")
            continue
        action_class = _lookup_enum(values["action_class"], action_syn)
        if action_class is None:
            reject("unknown_action_class")
            continue

        seen_ids.add(log_id)
        accepted.append(
            MaintenanceLog(
                log_id=log_id,
                farm_id=values["farm_id"].strip(),
                turbine_id=values["turbine_id"].strip(),
                subsystem_name=values["subsystem_name"].strip(),
                event_date=event_date,
                age_at_event_days=age,
                work_class=work_class,
                action_class=action_class,
                description=description,
                observations=observations or None,
            )
        )

    read = len(rows)
    if read and len(rejected) / read > max_reject_fraction:
        raise CorpusError(
            f"{len(rejected)}/{read} rows rejected (> {max_reject_fraction:.0%}); "
            "this usually indicates a wrong column mapping"
        )
    provenance = Provenance(
        source=str(path),
        ingested_at=datetime.now(),
        read=read,
        accepted=len(accepted),
        rejected=len(rejected),
    )
    return build_corpus(accepted, provenance, rejected_rows=tuple(rejected))


def load_site_contexts(source: str | Path) -> dict[str, SiteContext]:
    """Load the per-farm site context table; one row per farm, duplicates rejected."""
    path = Path(source)
    if not path.exists():
        raise SiteContextError(f"context file not found: {path}")
    header, rows = _read_table(path)
    if not rows:
        return {}
    required = ("farm_id", "turbine_model_label", "n_turbines", "rated_power_mw",
                "rotor_diameter_m", "hub_height_m")
    for name in required:
        if name not in header:
            raise SiteContextError(f"context table is missing column {name!r}")
    contexts: dict[str, SiteContext] = {}
    for line_no, row in rows:
        farm_id = row["farm_id"].strip()
        if farm_id in contexts:
            raise SiteContextError(f"duplicate farm row for {farm_id!r} at line {line_no}")
        try:
            context = SiteContext(
                farm_id=farm_id,
                turbine_model_label=row["turbine_model_label"].strip(),
                n_turbines=int(row["n_turbines"]),
                rated_power_mw=float(row["rated_power_mw"]),
                rotor_diameter_m=float(row["rotor_diameter_m"]),
                hub_height_m=float(row["hub_height_m"]),
                location_notes=row.get("location_notes", "").strip(),
            )
        except ValueError as exc:
            raise SiteContextError(f"bad context row for {farm_id!r} at line {line_no}: {exc}") from exc
        contexts[farm_id] = context
    return contexts


RECORD_FIELD_ORDER = MANDATORY_FIELDS + OPTIONAL_FIELDS


def record_to_dict(record: MaintenanceLog) -> dict:
    return {
        "log_id": record.log_id,
        "farm_id": record.farm_id,
        "turbine_id": record.turbine_id,
        "subsystem_name": record.subsystem_name,
        "event_date": record.event_date.isoformat(),
        "age_at_event_days": record.age_at_event_days,
        "work_class": record.work_class.value,
        "action_class": record.action_class.value,
        "description": record.description,
        "observations": record.observations,
    }


def record_from_dict(data: dict) -> MaintenanceLog:
    return MaintenanceLog(
        log_id=data["log_id"],
        farm_id=data["farm_id"],
        turbine_id=data["turbine_id"],
        subsystem_name=data["subsystem_name"],
        event_date=date.fromisoformat(data["event_date"]),
        age_at_event_days=int(data["age_at_event_days"]),
        work_class=WorkClass(data["work_class"]),
        action_class=ActionClass(data["action_class"]),
        description=data["description"],
        observations=data.get("observations"),
    )


def serialize_corpus(corpus: Corpus) -> str:
    """Canonical corpus serialization: one JSON record per line, stable field order.

    Deliberately excludes provenance timestamps and absolute paths so identical
    inputs always serialize byte-identically.
    """
    lines = [json.dumps(record_to_dict(r), ensure_ascii=False) for r in corpus.records]
    return "\n".join(lines) + ("\n" if lines else "")


def load_corpus(path: str | Path) -> Corpus:
    """Load a canonical corpus file written by serialize_corpus (plus meta comments)."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    records: list[MaintenanceLog] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            records.append(record_from_dict(json.loads(line)))
    provenance = Provenance(
        source=str(path),
        ingested_at=datetime.now(),
        read=len(records),
        accepted=len(records),
        rejected=0,
    )
    return build_corpus(records, provenance)
