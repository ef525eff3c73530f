"""Seeded synthetic maintenance corpora with embedded ground truth, plus
scoring of pipeline outputs against that truth.

Canonical mode markers are visible bracketed codes (e.g. "[FMQ8]") so scoring
verifies pipeline mechanics exactly, never semantic matching. Descriptions
carry a unique work-order serial so only deliberately planted duplicates can
collide on the deduplication key.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import date, timedelta
from importlib import resources
from pathlib import Path
from random import Random

from ._text import fold, tokens
from .reports import CausalChainReport, FailureModeReport

PRESET_NAMES = ("paper-shape", "minimal", "fuzz")

CHAIN_RECOVERY_JACCARD = 0.8

FARM_NAME_POOL = (
    "Alto das Gralhas", "Cabeco do Vento", "Chao da Eira", "Covao Frio",
    "Curral das Freiras", "Eira Velha", "Fonte Santa", "Lomba Grande",
    "Malhadas do Sul", "Miradouro Alto", "Monte Claro", "Outeiro Longo",
    "Penedo Gordo", "Picoto das Aguias", "Portela Verde", "Quinta do Lobo",
    "Ribeira Seca", "Serra da Nogueira", "Serra do Facho", "Sobral Branco",
    "Terras Altas", "Vale do Abrigo", "Vale Escuro", "Vila Cimeira",
    "Zimbral Novo", "Zona da Carvalha",
)

BACKGROUND_SUBSYSTEMS = (
    "Pitch System", "Yaw System", "Gearbox", "Generator", "Main Bearing",
    "MV-Transformer", "Hydraulic System", "Control System", "Anemometry", "Tower",
)

BACKGROUND_TEMPLATES = (
    "Inspecao periodica ao {subsystem}, sem anomalias relevantes, OS {serial}",
    "Routine inspection of the {subsystem}, no major findings, work order {serial}",
    "Substituicao de componente desgastado no {subsystem}, OS {serial}",
    "Verificacao de folgas e aperto de ligacoes no {subsystem}, OS {serial}",
    "Oil level check and top-up on the {subsystem}, work order {serial}",
    "Limpeza e lubrificacao do {subsystem} conforme plano, OS {serial}",
    "Sensor recalibration on the {subsystem}, drift within limits, work order {serial}",
    "Correcao de fuga de oleo no {subsystem}, vedantes trocados, OS {serial}",
    "Troubleshooting intermittent alarm on the {subsystem}, work order {serial}",
    "Ensaio funcional do {subsystem} apos intervencao, OS {serial}",
)

OBSERVATION_SUPPLEMENTS = (
    "Recomenda-se substituir a massa lubrificante na proxima intervencao",
    "Follow-up visit required to confirm the repair",
    "Pecas requisitadas ao armazem central",
    "Sem observacoes adicionais relevantes",
    "Torque values recorded in the service sheet",
)

UNINFORMATIVE_POOL = (
    "None", "none", "OK", "ok", "-", "n/a", "teste", "test",
    "FM300", "FM1209", "a verificar", "ver obs",
)

NON_TURBINE_SUBSYSTEMS = (
    "Substation", "substation", "Met Mast", "MET MAST",
    "Roads", "roads", "Buildings", "buildings",
)

WORK_CLASS_SPELLINGS = ("corrective", "corretiva", "preventive", "preventiva", "CM", "PM")
ACTION_CLASS_SPELLINGS = (
    "repair", "reparacao", "replacement", "substituicao",
    "inspection", "inspecao", "other", "outros",
)

CSV_COLUMNS = (
    "log_id", "farm_id", "turbine_id", "subsystem_name", "event_date",
    "age_at_event_days", "work_class", "action_class", "description", "observations",
)

CONTEXT_COLUMNS = (
    "farm_id", "turbine_model_label", "n_turbines", "rated_power_mw",
    "rotor_diameter_m", "hub_height_m", "location_notes",
)


class SynthError(Exception):
    pass


@dataclass(frozen=True)
class PlantedMode:
    canonical_token: str
    anchor: str
    target_count: int
    templates: tuple[str, ...]


@dataclass(frozen=True)
class PlantedChain:
    chain_id: str
    confidence: str
    day_offsets: tuple[int, ...]
    subsystems: tuple[str, ...]
    templates: tuple[str, ...]
    turbine: str | None = None  # None = the designated high-failure turbine


@dataclass(frozen=True)
class FarmSkew:
    token: str
    count: int
    subsystem: str


@dataclass(frozen=True)
class HighFailureSpec:
    farm_index: int
    turbine_index: int
    n_logs: int
    window_days: int
    window_start_offset_days: int


@dataclass(frozen=True)
class JunkMix:
    uninformative: int
    non_turbine: int
    duplicates: int

    def total(self) -> int:
        return self.uninformative + self.non_turbine + self.duplicates


@dataclass(frozen=True)
class SynthSpec:
    name: str
    seed: int
    n_logs: int
    n_farms: int
    n_turbines_per_farm: int
    junk_fraction: float
    date_range: tuple[date, date]
    planted_modes: tuple[PlantedMode, ...]
    planted_chains: tuple[PlantedChain, ...]
    farm_skews: dict[int, FarmSkew]
    high_failure: HighFailureSpec
    junk_mix: JunkMix

    def background_count(self) -> int:
        planted = (
            sum(m.target_count for m in self.planted_modes)
            + self.junk_mix.total()
            + self.high_failure.n_logs
            + sum(s.count for s in self.farm_skews.values())
        )
        return self.n_logs - planted

    def validate(self) -> None:
        if self.n_farms > len(FARM_NAME_POOL):
            raise SynthError(f"at most {len(FARM_NAME_POOL)} farms supported")
        if self.background_count() < 0:
            raise SynthError("planted counts exceed n_logs")
        for mode in self.planted_modes:
            if not mode.templates:
                raise SynthError(f"mode {mode.canonical_token} has no templates")
        chain_events = sum(len(c.day_offsets) for c in self.planted_chains)
        if chain_events + 2 > self.high_failure.n_logs:
            raise SynthError("high-failure turbine needs 2 spare logs to pin its window")
        for chain in self.planted_chains:
            if len(chain.day_offsets) < 2:
                raise SynthError(f"chain {chain.chain_id} needs at least two events")
            if len(chain.subsystems) != len(chain.day_offsets) or len(chain.templates) != len(
                chain.day_offsets
            ):
                raise SynthError(f"chain {chain.chain_id} field lengths disagree")
            if max(chain.day_offsets) > self.high_failure.window_days:
                raise SynthError(f"chain {chain.chain_id} extends past the turbine window")
            if list(chain.day_offsets) != sorted(chain.day_offsets):
                raise SynthError(f"chain {chain.chain_id} offsets must be non-decreasing")
        if self.high_failure.farm_index in self.farm_skews:
            raise SynthError("the high-failure turbine's farm cannot also carry a skew")


@dataclass(frozen=True)
class SynthTruth:
    mode_assignments: dict[str, str]
    chain_memberships: list[dict]
    junk_ids: list[str]
    farm_skews: dict[str, str]
    hft_turbine_id: str
    comparison_farms: list[str]

    def converter_cohort_size(self) -> int:
        return len(self.mode_assignments)


@dataclass(frozen=True)
class GeneratedData:
    corpus_path: Path
    contexts_path: Path
    truth_path: Path
    truth: SynthTruth


# --- spec (de)serialization ---------------------------------------------------


def spec_from_dict(data: dict) -> SynthSpec:
    spec = SynthSpec(
        name=data["name"],
        seed=int(data["seed"]),
        n_logs=int(data["n_logs"]),
        n_farms=int(data["n_farms"]),
        n_turbines_per_farm=int(data["n_turbines_per_farm"]),
        junk_fraction=float(data["junk_fraction"]),
        date_range=(date.fromisoformat(data["date_range"][0]), date.fromisoformat(data["date_range"][1])),
        planted_modes=tuple(
            PlantedMode(
                canonical_token=m["canonical_token"],
                anchor=m["anchor"],
                target_count=int(m["target_count"]),
                templates=tuple(m["templates"]),
            )
            for m in data["planted_modes"]
        ),
        planted_chains=tuple(
            PlantedChain(
                chain_id=c["chain_id"],
                confidence=c["confidence"],
                day_offsets=tuple(int(x) for x in c["day_offsets"]),
                subsystems=tuple(c["subsystems"]),
                templates=tuple(c["templates"]),
                turbine=c.get("turbine"),
            )
            for c in data["planted_chains"]
        ),
        farm_skews={
            int(index): FarmSkew(token=s["token"], count=int(s["count"]), subsystem=s["subsystem"])
            for index, s in data["farm_skews"].items()
        },
        high_failure=HighFailureSpec(
            farm_index=int(data["high_failure"]["farm_index"]),
            turbine_index=int(data["high_failure"]["turbine_index"]),
            n_logs=int(data["high_failure"]["n_logs"]),
            window_days=int(data["high_failure"]["window_days"]),
            window_start_offset_days=int(data["high_failure"]["window_start_offset_days"]),
        ),
        junk_mix=JunkMix(
            uninformative=int(data["junk_mix"]["uninformative"]),
            non_turbine=int(data["junk_mix"]["non_turbine"]),
            duplicates=int(data["junk_mix"]["duplicates"]),
        ),
    )
    spec.validate()
    return spec


def load_spec_file(path: str | Path) -> SynthSpec:
    return spec_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def load_preset(name: str) -> SynthSpec:
    filename = name.replace("-", "_") + ".json"
    try:
        text = resources.files("relialog.presets").joinpath(filename).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise SynthError(f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}") from None
    return spec_from_dict(json.loads(text))


# --- generation ----------------------------------------------------------------


@dataclass
class _Row:
    log_id: str
    farm_id: str
    turbine_id: str
    subsystem_name: str
    event_date: date
    work_class: str
    action_class: str
    description: str
    observations: str


class _Generator:
    def __init__(self, spec: SynthSpec):
        spec.validate()
        self.spec = spec
        self.rng = Random(spec.seed)
        self.rows: list[_Row] = []
        self.serial = 0
        self.farms = list(FARM_NAME_POOL[: spec.n_farms])
        self.contexts = self._build_contexts()
        self.turbines = {
            farm: [f"T{i + 1:02d}-{t + 1:02d}" for t in range(self.contexts[farm]["n_turbines"])]
            for i, farm in enumerate(self.farms)
        }
        hft = spec.high_failure
        self.hft_farm = self.farms[hft.farm_index]
        self.hft_turbine = self.turbines[self.hft_farm][hft.turbine_index]
        self.placement_pool = [
            (farm, turbine)
            for farm in self.farms
            for turbine in self.turbines[farm]
            if turbine != self.hft_turbine
        ]
        self.turbine_log_counts: dict[str, int] = {}
        self.commissioning = {
            turbine: spec.date_range[0] - timedelta(days=720 + (fi * 31 + ti * 7) % 2000)
            for fi, farm in enumerate(self.farms)
            for ti, turbine in enumerate(self.turbines[farm])
        }
        self.truth_modes: dict[str, str] = {}
        self.truth_chains: list[dict] = []
        self.junk_ids: list[str] = []

    def _build_contexts(self) -> dict[str, dict]:
        spec = self.spec
        skew_indices = sorted(spec.farm_skews)
        contexts: dict[str, dict] = {}
        model_serial = 3
        for index, farm in enumerate(FARM_NAME_POOL[: spec.n_farms]):
            if skew_indices and index == skew_indices[0]:
                entry = {
                    "turbine_model_label": "WT Model 1",
                    "n_turbines": 14,
                    "rated_power_mw": 2.5,
                    "rotor_diameter_m": 100.0,
                    "hub_height_m": 80.0,
                    "location_notes": "Ridge site with frequent winter fog",
                }
            elif len(skew_indices) > 1 and index == skew_indices[1]:
                entry = {
                    "turbine_model_label": "WT Model 2",
                    "n_turbines": 20,
                    "rated_power_mw": 2.5,
                    "rotor_diameter_m": 90.0,
                    "hub_height_m": 80.0,
                    "location_notes": "Ridge site with frequent winter fog",
                }
            elif len(skew_indices) > 2 and index == skew_indices[2]:
                entry = {
                    "turbine_model_label": "WT Model 2",
                    "n_turbines": 24,
                    "rated_power_mw": 2.5,
                    "rotor_diameter_m": 90.0,
                    "hub_height_m": 80.0,
                    "location_notes": "Complex terrain in the north with directional shear",
                }
            else:
                entry = {
                    "turbine_model_label": f"WT Model {model_serial}",
                    "n_turbines": spec.n_turbines_per_farm,
                    "rated_power_mw": 2.0,
                    "rotor_diameter_m": 82.0,
                    "hub_height_m": 78.0,
                    "location_notes": f"Inland plateau site {model_serial}",
                }
                model_serial += 1
            contexts[farm] = entry
        return contexts

    def _next_log_id(self) -> str:
        self.serial += 1
        return f"L{self.serial:05d}"

    def _next_date(self, turbine: str) -> date:
        """Random event date; a turbine's first two logs pin its observation
        span near the full range so no background turbine can dominate the
        normalized event frequency with a short, dense burst."""
        start, end = self.spec.date_range
        count = self.turbine_log_counts.get(turbine, 0)
        self.turbine_log_counts[turbine] = count + 1
        if count == 0:
            return start + timedelta(days=self.rng.randint(0, 30))
        if count == 1:
            return end - timedelta(days=self.rng.randint(0, 30))
        return start + timedelta(days=self.rng.randint(0, (end - start).days))

    def _observations_for(self, description: str) -> str:
        roll = self.rng.random()
        if roll < 0.60:
            return ""
        if roll < 0.75:
            return "None"
        if roll < 0.85:
            return description  # verbatim redundancy, an audit-relevant defect
        return self.rng.choice(OBSERVATION_SUPPLEMENTS)

    def _add_row(
        self,
        farm: str,
        turbine: str,
        subsystem: str,
        event_date: date,
        description: str,
        observations: str,
    ) -> _Row:
        row = _Row(
            log_id=self._next_log_id(),
            farm_id=farm,
            turbine_id=turbine,
            subsystem_name=subsystem,
            event_date=event_date,
            work_class=self.rng.choice(WORK_CLASS_SPELLINGS),
            action_class=self.rng.choice(ACTION_CLASS_SPELLINGS),
            description=description,
            observations=observations,
        )
        self.rows.append(row)
        return row

    def _gen_modes(self) -> None:
        for mode in self.spec.planted_modes:
            members: list[_Row] = []
            for _ in range(mode.target_count):
                farm, turbine = self.rng.choice(self.placement_pool)
                event_date = self._next_date(turbine)
                subsystem = "Conversor" if len(members) % 7 == 3 else "Power Converter"
                row = self._add_row(farm, turbine, subsystem, event_date, "", "")
                members.append(row)
                self.truth_modes[row.log_id] = mode.canonical_token
            # Assign templates cyclically in canonical (date, id) order so the
            # first members any consumer sees cover every phrasing variant.
            members.sort(key=lambda r: (r.event_date, r.log_id))
            for position, row in enumerate(members):
                template = mode.templates[position % len(mode.templates)]
                row.description = template.format(
                    token=f"[{mode.canonical_token}]", serial=10000 + int(row.log_id[1:])
                )
                row.observations = self._observations_for(row.description)

    def _gen_chains(self) -> None:
        window_start = self.spec.date_range[0] + timedelta(
            days=self.spec.high_failure.window_start_offset_days
        )
        for chain in self.spec.planted_chains:
            if chain.turbine is not None and chain.turbine != self.hft_turbine:
                raise SynthError(
                    f"chain {chain.chain_id}: chains are planted on the designated "
                    f"high-failure turbine ({self.hft_turbine})"
                )
            member_rows = []
            marker = f"[{chain.chain_id}-{chain.confidence.upper()}]"
            for offset, subsystem, template in zip(
                chain.day_offsets, chain.subsystems, chain.templates
            ):
                event_date = window_start + timedelta(days=offset)
                description = template.format(marker=marker, serial=10000 + self.serial + 1)
                row = self._add_row(
                    self.hft_farm, self.hft_turbine, subsystem, event_date, description, ""
                )
                member_rows.append(row)
            ordered = sorted(member_rows, key=lambda r: (r.event_date, r.log_id))
            self.truth_chains.append(
                {
                    "chain_id": chain.chain_id,
                    "confidence": chain.confidence,
                    "log_ids": [r.log_id for r in ordered],
                }
            )

    def _gen_hft_background(self) -> None:
        spec = self.spec
        window_start = spec.date_range[0] + timedelta(
            days=spec.high_failure.window_start_offset_days
        )
        chain_events = sum(len(c.day_offsets) for c in spec.planted_chains if c.turbine is None)
        remaining = spec.high_failure.n_logs - chain_events
        for index in range(remaining):
            if index == 0:
                event_date = window_start
            elif index == 1:
                event_date = window_start + timedelta(days=spec.high_failure.window_days)
            else:
                event_date = window_start + timedelta(
                    days=self.rng.randint(0, spec.high_failure.window_days)
                )
            subsystem = self.rng.choice(BACKGROUND_SUBSYSTEMS)
            template = self.rng.choice(BACKGROUND_TEMPLATES)
            description = template.format(subsystem=subsystem, serial=10000 + self.serial + 1)
            self._add_row(
                self.hft_farm,
                self.hft_turbine,
                subsystem,
                event_date,
                description,
                self._observations_for(description),
            )

    def _gen_skews(self) -> None:
        for farm_index in sorted(self.spec.farm_skews):
            skew = self.spec.farm_skews[farm_index]
            farm = self.farms[farm_index]
            for _ in range(skew.count):
                turbine = self.rng.choice(self.turbines[farm])
                event_date = self._next_date(turbine)
                description = (
                    f"Intervencao recorrente [{skew.token}] no {skew.subsystem}, "
                    f"OS {10000 + self.serial + 1}"
                )
                self._add_row(
                    farm,
                    turbine,
                    skew.subsystem,
                    event_date,
                    description,
                    self._observations_for(description),
                )

    def _gen_background(self) -> None:
        for _ in range(self.spec.background_count()):
            farm, turbine = self.rng.choice(self.placement_pool)
            event_date = self._next_date(turbine)
            subsystem = self.rng.choice(BACKGROUND_SUBSYSTEMS)
            template = self.rng.choice(BACKGROUND_TEMPLATES)
            description = template.format(subsystem=subsystem, serial=10000 + self.serial + 1)
            self._add_row(
                farm, turbine, subsystem, event_date, description,
                self._observations_for(description),
            )

    def _gen_junk(self) -> None:
        mix = self.spec.junk_mix
        for _ in range(mix.uninformative):
            farm, turbine = self.rng.choice(self.placement_pool)
            event_date = self._next_date(turbine)
            description = self.rng.choice(UNINFORMATIVE_POOL)
            observations = self.rng.choice(("", "", "None", "-"))
            row = self._add_row(
                farm, turbine, self.rng.choice(BACKGROUND_SUBSYSTEMS),
                event_date, description, observations,
            )
            self.junk_ids.append(row.log_id)
        for _ in range(mix.non_turbine):
            farm, turbine = self.rng.choice(self.placement_pool)
            event_date = self._next_date(turbine)
            subsystem = self.rng.choice(NON_TURBINE_SUBSYSTEMS)
            description = self.rng.choice(BACKGROUND_TEMPLATES).format(
                subsystem=subsystem, serial=10000 + self.serial + 1
            )
            row = self._add_row(farm, turbine, subsystem, event_date, description, "")
            self.junk_ids.append(row.log_id)
        # Verbatim copies of earlier good logs; the copy's higher log_id makes
        # it the record the deduplication filter drops.
        junk_so_far = set(self.junk_ids)
        good_rows = [
            r
            for r in self.rows
            if r.log_id not in junk_so_far and r.turbine_id != self.hft_turbine
        ]
        if mix.duplicates > 0 and not good_rows:
            raise SynthError("cannot plant duplicates without good source logs")
        for _ in range(mix.duplicates):
            source = self.rng.choice(good_rows)
            row = self._add_row(
                source.farm_id,
                source.turbine_id,
                source.subsystem_name,
                source.event_date,
                source.description,
                source.observations,
            )
            self.junk_ids.append(row.log_id)

    def _check_no_accidental_duplicates(self) -> None:
        seen: dict[tuple, str] = {}
        junk = set(self.junk_ids)
        for row in self.rows:
            if row.log_id in junk:
                continue
            key = (row.farm_id, row.turbine_id, row.event_date, row.description)
            if key in seen:
                raise SynthError(
                    f"accidental duplicate between {seen[key]} and {row.log_id}; "
                    "generator must keep good logs unique"
                )
            seen[key] = row.log_id

    def run(self) -> tuple[list[_Row], dict[str, dict], SynthTruth]:
        self._gen_modes()
        self._gen_chains()
        self._gen_hft_background()
        self._gen_skews()
        self._gen_background()
        self._gen_junk()
        self._check_no_accidental_duplicates()
        truth = SynthTruth(
            mode_assignments=dict(self.truth_modes),
            chain_memberships=list(self.truth_chains),
            junk_ids=sorted(self.junk_ids),
            farm_skews={
                self.farms[index]: skew.token for index, skew in self.spec.farm_skews.items()
            },
            hft_turbine_id=self.hft_turbine,
            comparison_farms=sorted(self.farms[index] for index in self.spec.farm_skews),
        )
        return self.rows, self.contexts, truth


def _format_date(event_date: date, serial: int) -> str:
    # Every 11th row uses the day-first operator convention to exercise parsing.
    if serial % 11 == 0:
        return event_date.strftime("%d/%m/%Y")
    return event_date.isoformat()


def generate(spec: SynthSpec, out_dir: str | Path) -> GeneratedData:
    """Write corpus, site-context, and ground-truth files for a spec.

    Deterministic per seed: identical spec + seed produce byte-identical files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    generator = _Generator(spec)
    rows, contexts, truth = generator.run()

    corpus_path = out_dir / "corpus_raw.csv"
    with open(corpus_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for index, row in enumerate(rows):
            commissioning = generator.commissioning[row.turbine_id]
            writer.writerow(
                (
                    row.log_id,
                    row.farm_id,
                    row.turbine_id,
                    row.subsystem_name,
                    _format_date(row.event_date, index),
                    (row.event_date - commissioning).days,
                    row.work_class,
                    row.action_class,
                    row.description,
                    row.observations,
                )
            )

    contexts_path = out_dir / "site_contexts.csv"
    with open(contexts_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CONTEXT_COLUMNS)
        for farm in generator.farms:
            entry = contexts[farm]
            writer.writerow(
                (
                    farm,
                    entry["turbine_model_label"],
                    entry["n_turbines"],
                    entry["rated_power_mw"],
                    entry["rotor_diameter_m"],
                    entry["hub_height_m"],
                    entry["location_notes"],
                )
            )

    truth_path = out_dir / "truth.json"
    truth_path.write_text(truth_to_json(truth), encoding="utf-8")
    return GeneratedData(
        corpus_path=corpus_path, contexts_path=contexts_path, truth_path=truth_path, truth=truth
    )


def truth_to_json(truth: SynthTruth) -> str:
    payload = {
        "mode_assignments": truth.mode_assignments,
        "chain_memberships": truth.chain_memberships,
        "junk_ids": truth.junk_ids,
        "farm_skews": truth.farm_skews,
        "hft_turbine_id": truth.hft_turbine_id,
        "comparison_farms": truth.comparison_farms,
    }
    return json.dumps(payload, ensure_ascii=False, indent=2) + "\n"


def truth_from_json(text: str) -> SynthTruth:
    data = json.loads(text)
    return SynthTruth(
        mode_assignments=data["mode_assignments"],
        chain_memberships=data["chain_memberships"],
        junk_ids=data["junk_ids"],
        farm_skews=data["farm_skews"],
        hft_turbine_id=data["hft_turbine_id"],
        comparison_farms=data["comparison_farms"],
    )


def load_truth(path: str | Path) -> SynthTruth:
    return truth_from_json(Path(path).read_text(encoding="utf-8"))


# --- scoring --------------------------------------------------------------------


def score_modes(report: FailureModeReport, truth: SynthTruth) -> dict[str, float]:
    """Recall/precision of canonical-token recovery plus count exactness.

    A report mode matches token t when t appears as a token of the mode's name
    or quotes. Raises on corpus mismatch (report citing ids unknown to truth)."""
    truth_counts: dict[str, int] = {}
    for token in truth.mode_assignments.values():
        truth_counts[token] = truth_counts.get(token, 0) + 1
    if report.cohort_size != len(truth.mode_assignments):
        raise SynthError(
            f"corpus mismatch: report covers {report.cohort_size} logs, "
            f"truth plants {len(truth.mode_assignments)}"
        )
    for mode in report.modes:
        for quote in mode.supporting_quotes:
            if quote.log_id not in truth.mode_assignments:
                raise SynthError(f"corpus mismatch: report quotes unknown log {quote.log_id!r}")

    folded_tokens = {fold(token): token for token in truth_counts}
    recovered: set[str] = set()
    matched_modes = 0
    exact_counts = 0
    for mode in report.modes:
        text = " ".join([mode.name] + [q.quote for q in mode.supporting_quotes])
        present = sorted(folded_tokens[t] for t in set(tokens(text)) & set(folded_tokens))
        if not present:
            continue
        matched_modes += 1
        token = present[0]
        recovered.add(token)
        if mode.reconciled_count == truth_counts[token]:
            exact_counts += 1
    n_truth = len(truth_counts)
    n_modes = len(report.modes)
    return {
        "mode_recall": len(recovered) / n_truth if n_truth else 1.0,
        "mode_precision": matched_modes / n_modes if n_modes else 0.0,
        "count_exactness": exact_counts / matched_modes if matched_modes else 0.0,
    }


def _jaccard(a: set[str], b: set[str]) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def score_chains(report: CausalChainReport, truth: SynthTruth) -> dict[str, float]:
    """Chain recovery at Jaccard >= 0.8 on member ids, plus mean best Jaccard."""
    if report.turbine_id != truth.hft_turbine_id:
        raise SynthError(
            f"turbine mismatch: report is for {report.turbine_id!r}, "
            f"truth plants chains on {truth.hft_turbine_id!r}"
        )
    predicted = [set(chain.member_log_ids) for chain in report.chains]
    if not truth.chain_memberships:
        return {"chain_recall": 1.0, "membership_jaccard_mean": 1.0}
    best_scores = []
    for entry in truth.chain_memberships:
        members = set(entry["log_ids"])
        best = max((_jaccard(members, p) for p in predicted), default=0.0)
        best_scores.append(best)
    recovered = sum(1 for score in best_scores if score >= CHAIN_RECOVERY_JACCARD)
    return {
        "chain_recall": recovered / len(best_scores),
        "membership_jaccard_mean": sum(best_scores) / len(best_scores),
    }
