"""Post-process validated reports into presentation artifacts: Pareto series,
causal-chain timeline layouts, markdown documents, and plot-data tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import date

from .corpus import Corpus
from .reports import (
    AuditReport,
    CausalChainReport,
    ComparativeReport,
    FailureModeReport,
)

OTHER_LABEL = "other"
ANNOTATION_MAX_CHARS = 140

REVIEW_NOTE = (
    "All hypotheses in this document are machine-generated and pending expert review."
)


class InsightError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass(frozen=True, slots=True)
class ParetoEntry:
    rank: int
    label: str
    count: int
    percentage: float
    cumulative_percentage: float


@dataclass(frozen=True, slots=True)
class ParetoSeries:
    entries: tuple[ParetoEntry, ...]
    total: int


@dataclass(frozen=True, slots=True)
class TimelineMarker:
    log_id: str
    event_date: date
    subsystem: str


@dataclass(frozen=True, slots=True)
class TimelineLane:
    chain_id: str
    confidence: str
    annotation: str
    annotation_full: str
    markers: tuple[TimelineMarker, ...]


@dataclass(frozen=True, slots=True)
class TimelineLayout:
    lanes: tuple[TimelineLane, ...]
    axis_range: tuple[date, date]


def pareto(report: FailureModeReport) -> ParetoSeries:
    """Pareto series over reconciled mode counts; unassigned logs appear as a
    final "other" entry rather than being dropped."""
    total = sum(mode.reconciled_count for mode in report.modes) + report.unassigned_count
    if total <= 0:
        raise InsightError("empty_report", "report covers zero logs")
    labeled = sorted(
        ((mode.name, mode.reconciled_count) for mode in report.modes),
        key=lambda item: (-item[1], item[0]),
    )
    if report.unassigned_count > 0:
        labeled.append((OTHER_LABEL, report.unassigned_count))
    entries = []
    running = 0
    for rank, (label, count) in enumerate(labeled, 1):
        running += count
        entries.append(
            ParetoEntry(
                rank=rank,
                label=label,
                count=count,
                percentage=count / total * 100.0,
                cumulative_percentage=running / total * 100.0,
            )
        )
    return ParetoSeries(entries=tuple(entries), total=total)


def top_k_for_coverage(series: ParetoSeries, threshold_pct: float) -> int:
    """Smallest k whose cumulative percentage reaches threshold_pct."""
    if not (0 < threshold_pct <= 100):
        raise InsightError("bad_threshold", "threshold must be in (0, 100]")
    for entry in series.entries:
        if entry.cumulative_percentage >= threshold_pct:
            return entry.rank
    return len(series.entries)


def timeline(report: CausalChainReport, corpus: Corpus) -> TimelineLayout:
    """One lane per chain, ordered by first event date, annotated with the
    (truncated) hypothesis."""
    lanes = []
    for chain in report.chains:
        try:
            records = [corpus.get(log_id) for log_id in chain.member_log_ids]
        except KeyError as exc:
            raise InsightError("unresolvable_log", f"chain {chain.chain_id}: {exc}") from exc
        markers = tuple(
            TimelineMarker(log_id=r.log_id, event_date=r.event_date, subsystem=r.subsystem_name)
            for r in sorted(records, key=lambda r: (r.event_date, r.log_id))
        )
        lanes.append(
            TimelineLane(
                chain_id=chain.chain_id,
                confidence=chain.confidence,
                annotation=chain.hypothesis[:ANNOTATION_MAX_CHARS],
                annotation_full=chain.hypothesis,
                markers=markers,
            )
        )
    lanes.sort(key=lambda lane: (lane.markers[0].event_date, lane.chain_id))
    all_markers = [marker for lane in lanes for marker in lane.markers]
    if all_markers:
        axis = (min(m.event_date for m in all_markers), max(m.event_date for m in all_markers))
    else:
        # Degenerate but valid: cover the analyzed turbine's (or corpus') span.
        records = [r for r in corpus.records if r.turbine_id == report.turbine_id] or list(
            corpus.records
        )
        if not records:
            raise InsightError("empty_corpus", "no logs to derive an axis range from")
        dates = [r.event_date for r in records]
        axis = (min(dates), max(dates))
    return TimelineLayout(lanes=tuple(lanes), axis_range=axis)


def _markdown_failure_modes(report: FailureModeReport) -> str:
    lines = [
        f"# Failure Mode Analysis: {report.cohort_ref}",
        "",
        f"Cohort size: {report.cohort_size} logs. Unassigned after reconciliation: "
        f"{report.unassigned_count}.",
        f"Provider: {report.provider_meta.provider} ({report.provider_meta.profile}), "
        f"strategy {report.provider_meta.strategy}, {report.provider_meta.chunk_count} chunk(s), "
        f"template v{report.provider_meta.template_version}.",
        "",
        "| Rank | Failure Mode | Synthesised Description |",
        "| --- | --- | --- |",
    ]
    for mode in report.modes:
        lines.append(f"| {mode.rank} | {mode.name} | {mode.description} |")
    lines += [
        "",
        "## Quantification",
        "",
        "| Rank | Failure Mode | Estimated | Reconciled | % of cohort |",
        "| --- | --- | --- | --- | --- |",
    ]
    for mode in report.modes:
        lines.append(
            f"| {mode.rank} | {mode.name} | {mode.estimated_count} | "
            f"{mode.reconciled_count} | {mode.percentage:.1f} |"
        )
    lines += ["", "## Supporting Evidence", ""]
    for mode in report.modes:
        lines.append(f"### {mode.rank}. {mode.name}")
        for quote in mode.supporting_quotes:
            lines.append(f"- {quote.log_id}: \"{quote.quote}\"")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def _markdown_causal(report: CausalChainReport) -> str:
    lines = [
        f"# Causal Chain Inference: turbine {report.turbine_id}",
        "",
        REVIEW_NOTE,
        "",
        f"{len(report.chains)} chain(s) inferred. Provider: {report.provider_meta.provider} "
        f"({report.provider_meta.profile}), template v{report.provider_meta.template_version}.",
        "",
    ]
    for chain in report.chains:
        lines += [
            f"## {chain.chain_id} (confidence: {chain.confidence}, "
            f"{'single-subsystem' if chain.homogeneous else 'cross-subsystem'})",
            "",
            f"Members: {', '.join(chain.member_log_ids)}",
            "",
            f"Hypothesis: {chain.hypothesis}",
            "",
        ]
    return "\n".join(lines).rstrip() + "\n"


def _markdown_comparison(report: ComparativeReport) -> str:
    lines = ["# Comparative Site Analysis", "", REVIEW_NOTE, ""]
    for farm in report.farms:
        lines.append(f"## Farm {farm.farm_id}")
        lines.append("")
        for index, pattern in enumerate(farm.patterns, 1):
            lines.append(f"{index}. Pattern: {pattern.pattern}")
            lines.append(f"   Hypothesis: {pattern.hypothesis}")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def _markdown_audit(report: AuditReport) -> str:
    lines = [
        "# Data Quality Audit",
        "",
        f"Chunk coverage: {report.chunk_coverage:.2f} of the corpus across "
        f"{report.provider_meta.chunk_count} chunk(s).",
        "",
        "## Issues",
        "",
    ]
    for issue in report.issues:
        lines.append(f"### {issue.title}")
        lines.append(issue.description)
        if issue.example_log_ids:
            lines.append(f"Examples: {', '.join(issue.example_log_ids)}")
        lines.append("")
    lines += ["## Recommendations", ""]
    for recommendation in report.recommendations:
        lines.append(f"### {recommendation.title}")
        lines.append(recommendation.description)
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def render_markdown(
    report: FailureModeReport | CausalChainReport | ComparativeReport | AuditReport,
) -> str:
    """Deterministic markdown view of any validated report."""
    if isinstance(report, FailureModeReport):
        return _markdown_failure_modes(report)
    if isinstance(report, CausalChainReport):
        return _markdown_causal(report)
    if isinstance(report, ComparativeReport):
        return _markdown_comparison(report)
    if isinstance(report, AuditReport):
        return _markdown_audit(report)
    raise InsightError("unsupported_report", f"cannot render {type(report).__name__}")


PARETO_COLUMNS = ("rank", "label", "count", "percentage", "cumulative_percentage")
TIMELINE_COLUMNS = ("lane", "chain_id", "confidence", "log_id", "event_date", "subsystem")


def export_plot_data(artifact: ParetoSeries | TimelineLayout) -> str:
    """Flat delimited table for external plotting tools; stable column order."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    if isinstance(artifact, ParetoSeries):
        writer.writerow(PARETO_COLUMNS)
        for entry in artifact.entries:
            writer.writerow(
                (
                    entry.rank,
                    entry.label,
                    entry.count,
                    repr(entry.percentage),
                    repr(entry.cumulative_percentage),
                )
            )
    elif isinstance(artifact, TimelineLayout):
        writer.writerow(TIMELINE_COLUMNS)
        for lane_index, lane in enumerate(artifact.lanes, 1):
            for marker in lane.markers:
                writer.writerow(
                    (
                        lane_index,
                        lane.chain_id,
                        lane.confidence,
                        marker.log_id,
                        marker.event_date.isoformat(),
                        marker.subsystem,
                    )
                )
    else:
        raise InsightError("unsupported_artifact", f"cannot export {type(artifact).__name__}")
    return buffer.getvalue()


_CONFIDENCE_COLORS = {"high": "#2a7f3f", "medium": "#c98a1b", "low": "#b04a4a"}


def render_pareto_svg(series: ParetoSeries) -> str:
    """Static vector rendering of a Pareto series: count bars plus a
    cumulative-percentage line. Deterministic, dependency-free."""
    width, height = 900, 420
    left, right, top, bottom = 60, 60, 30, 90
    plot_w, plot_h = width - left - right, height - top - bottom
    n = len(series.entries)
    max_count = max(entry.count for entry in series.entries)
    slot = plot_w / n
    bar_w = slot * 0.7

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="{left}" y="18" font-size="14" font-family="sans-serif">'
        f"Pareto of failure modes (total {series.total} logs)</text>",
    ]
    points = []
    for i, entry in enumerate(series.entries):
        x = left + i * slot + (slot - bar_w) / 2
        bar_h = plot_h * entry.count / max_count
        y = top + plot_h - bar_h
        parts.append(
            f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" height="{bar_h:.1f}" '
            f'fill="#4878a8"><title>{entry.label}: {entry.count}</title></rect>'
        )
        cx = left + i * slot + slot / 2
        cy = top + plot_h * (1 - entry.cumulative_percentage / 100.0)
        points.append(f"{cx:.1f},{cy:.1f}")
        parts.append(
            f'<text x="{cx:.1f}" y="{top + plot_h + 14}" font-size="9" '
            f'font-family="sans-serif" text-anchor="middle">{entry.rank}</text>'
        )
    parts.append(
        f'<polyline points="{" ".join(points)}" fill="none" stroke="#b04a4a" stroke-width="2"/>'
    )
    for i, entry in enumerate(series.entries[:12]):
        parts.append(
            f'<text x="{left}" y="{top + plot_h + 30 + i * 12}" font-size="9" '
            f'font-family="sans-serif">{entry.rank}. {entry.label} '
            f"({entry.count}, cum {entry.cumulative_percentage:.1f}%)</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_timeline_svg(layout: TimelineLayout) -> str:
    """Static vector rendering of a chain timeline: one lane per chain,
    markers placed by event date, colored by confidence."""
    lane_h, left, right, top = 34, 120, 30, 40
    width = 1000
    height = top + max(1, len(layout.lanes)) * lane_h + 40
    start, end = layout.axis_range
    span_days = max(1, (end - start).days)
    plot_w = width - left - right

    def x_for(event_date) -> float:
        return left + plot_w * (event_date - start).days / span_days

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="{left}" y="18" font-size="14" font-family="sans-serif">'
        f"Causal chain timeline {start.isoformat()} to {end.isoformat()}</text>",
    ]
    for i, lane in enumerate(layout.lanes):
        y = top + i * lane_h + lane_h / 2
        color = _CONFIDENCE_COLORS.get(lane.confidence, "#555555")
        first_x = x_for(lane.markers[0].event_date)
        last_x = x_for(lane.markers[-1].event_date)
        parts.append(
            f'<text x="8" y="{y + 4:.1f}" font-size="10" font-family="sans-serif">'
            f"{lane.chain_id} ({lane.confidence})</text>"
        )
        parts.append(
            f'<line x1="{first_x:.1f}" y1="{y:.1f}" x2="{last_x:.1f}" y2="{y:.1f}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        for marker in lane.markers:
            parts.append(
                f'<circle cx="{x_for(marker.event_date):.1f}" cy="{y:.1f}" r="5" '
                f'fill="{color}"><title>{marker.log_id} {marker.event_date.isoformat()} '
                f"{marker.subsystem}</title></circle>"
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def import_pareto_table(text: str) -> ParetoSeries:
    """Inverse of export_plot_data for Pareto tables (round-trip exact)."""
    rows = [
        row
        for row in csv.reader(io.StringIO(text))
        if row and not row[0].startswith("#")
    ]
    data_rows = [row for row in rows[1:] if row]
    entries = tuple(
        ParetoEntry(
            rank=int(row[0]),
            label=row[1],
            count=int(row[2]),
            percentage=float(row[3]),
            cumulative_percentage=float(row[4]),
        )
        for row in data_rows
    )
    total = sum(entry.count for entry in entries)
    return ParetoSeries(entries=entries, total=total)
