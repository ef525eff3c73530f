from __future__ import annotations

import random
from datetime import date

import pytest

from relialog.insights import (
    InsightError,
    export_plot_data,
    import_pareto_table,
    pareto,
    render_markdown,
    timeline,
    top_k_for_coverage,
)
from relialog.reports import (
    AuditIssue,
    AuditRecommendation,
    AuditReport,
    CausalChain,
    CausalChainReport,
    ComparativeReport,
    FailureModeReport,
    FarmPatterns,
    PatternOutput,
    ProviderMeta,
    RankedMode,
)

from test_prep import make_corpus, make_log

META = ProviderMeta(
    provider="mock", profile="mock", strategy="full", chunk_count=1,
    template_version="1.0.0", attempts=[1],
)


def mode_report(counts, unassigned=0, cohort_size=None):
    ranked = sorted(range(len(counts)), key=lambda i: (-counts[i], f"mode {i:02d}"))
    denominator = max(1, sum(counts) + unassigned)
    modes = [
        RankedMode(
            rank=position,
            name=f"mode {i:02d}",
            description=f"description {i}",
            estimated_count=counts[i],
            reconciled_count=counts[i],
            percentage=counts[i] / denominator * 100.0,
            supporting_quotes=[],
        )
        for position, i in enumerate(ranked, 1)
    ]
    size = sum(counts) + unassigned if cohort_size is None else cohort_size
    return FailureModeReport(
        cohort_ref="Power Converter", cohort_size=size, modes=modes,
        unassigned_count=unassigned, provider_meta=META,
    )


def test_pareto_top_entry_share():
    counts = [213, 200, 150, 120, 100, 90, 80, 60, 52]
    series = pareto(mode_report(counts, unassigned=1065 - sum(counts)))
    assert series.total == 1065
    assert series.entries[0].count == 213
    assert series.entries[0].percentage == pytest.approx(20.0, abs=0.05)


def test_pareto_single_mode_is_100_percent():
    series = pareto(mode_report([10]))
    assert len(series.entries) == 1
    assert series.entries[0].percentage == 100.0
    assert series.entries[0].cumulative_percentage == 100.0


def test_pareto_other_bucket_appears_last_when_unassigned():
    series = pareto(mode_report([5, 3], unassigned=2))
    assert series.entries[-1].label == "other"
    assert series.entries[-1].count == 2
    assert series.entries[-1].cumulative_percentage == pytest.approx(100.0, abs=0.1)


def test_pareto_cumulative_matches_prefix_sum_oracle():
    rng = random.Random(13)
    for _ in range(50):
        counts = sorted((rng.randint(1, 500) for _ in range(rng.randint(1, 20))), reverse=True)
        series = pareto(mode_report(counts))
        total = sum(counts)
        running = 0.0
        for entry, count in zip(series.entries, sorted(counts, reverse=True)):
            running += count / total * 100.0
            assert entry.cumulative_percentage == pytest.approx(running, abs=1e-9)
        assert series.entries[-1].cumulative_percentage == pytest.approx(100.0, abs=0.1)
        assert sum(e.count for e in series.entries) == total


def test_pareto_empty_report_errors():
    with pytest.raises(InsightError):
        pareto(mode_report([0], cohort_size=0))


def test_top_k_boundaries():
    series = pareto(mode_report([50, 30, 20]))
    assert top_k_for_coverage(series, 100) == 3
    assert top_k_for_coverage(series, 50) == 1  # threshold equals first entry's share
    assert top_k_for_coverage(series, 50.1) == 2
    with pytest.raises(InsightError):
        top_k_for_coverage(series, 0)


def test_top_k_monotone_in_threshold():
    rng = random.Random(3)
    counts = sorted((rng.randint(1, 99) for _ in range(12)), reverse=True)
    series = pareto(mode_report(counts))
    ks = [top_k_for_coverage(series, t) for t in range(1, 101)]
    assert ks == sorted(ks)


def chain_report(chains):
    return CausalChainReport(turbine_id="T1", chains=chains, provider_meta=META)


def seq_corpus():
    records = [
        make_log("L1", turbine="T1", subsystem="Generator", day=0, description="a b c"),
        make_log("L2", turbine="T1", subsystem="Control System", day=30, description="a b c"),
        make_log("L3", turbine="T1", subsystem="Yaw System", day=60, description="a b c"),
        make_log("L4", turbine="T1", subsystem="Yaw System", day=90, description="a b c"),
    ]
    return make_corpus(records)


def test_timeline_lane_layout_and_annotation_truncation():
    corpus = seq_corpus()
    long_hypothesis = "H" * 200
    report = chain_report(
        [
            CausalChain(chain_id="CH02", member_log_ids=["L3", "L4"],
                        hypothesis=long_hypothesis, confidence="low", homogeneous=True),
            CausalChain(chain_id="CH01", member_log_ids=["L1", "L2"],
                        hypothesis="short", confidence="high", homogeneous=False),
        ]
    )
    layout = timeline(report, corpus)
    assert [lane.chain_id for lane in layout.lanes] == ["CH01", "CH02"]
    assert layout.axis_range == (date(2019, 1, 1), date(2019, 4, 1))
    assert layout.lanes[0].markers[0].log_id == "L1"
    assert len(layout.lanes[1].annotation) == 140
    assert layout.lanes[1].annotation_full == long_hypothesis
    assert layout.lanes[1].confidence == "low"
    assert [m.subsystem for m in layout.lanes[0].markers] == ["Generator", "Control System"]


def test_timeline_empty_chains_degenerate_axis():
    corpus = seq_corpus()
    layout = timeline(chain_report([]), corpus)
    assert layout.lanes == ()
    assert layout.axis_range[0] == corpus.records[0].event_date
    assert layout.axis_range[1] == corpus.records[-1].event_date


def test_timeline_lane_order_fuzzed():
    rng = random.Random(8)
    for _ in range(50):
        n = rng.randint(2, 12)
        records = [
            make_log(f"L{i:02d}", turbine="T1", day=rng.randint(0, 900), description="a b c")
            for i in range(2 * n)
        ]
        corpus = make_corpus(records)
        chains = []
        for c in range(n):
            members = sorted(
                (records[2 * c].log_id, records[2 * c + 1].log_id),
                key=lambda i: (corpus.get(i).event_date, i),
            )
            chains.append(
                CausalChain(chain_id=f"C{c:02d}", member_log_ids=list(members),
                            hypothesis="h", confidence="medium", homogeneous=True)
            )
        layout = timeline(chain_report(chains), corpus)
        firsts = [lane.markers[0].event_date for lane in layout.lanes]
        assert firsts == sorted(firsts)


def test_markdown_failure_mode_table_mirrors_expected_columns():
    text = render_markdown(mode_report([4, 2]))
    assert "| Rank | Failure Mode | Synthesised Description |" in text
    assert render_markdown(mode_report([4, 2])) == text  # deterministic


def test_markdown_audit_section_order():
    report = AuditReport(
        issues=[AuditIssue(title="Vague entries", description="d", example_log_ids=["L1"])],
        recommendations=[AuditRecommendation(title="Use templates", description="d")],
        chunk_coverage=1.0,
        source_markdown=["raw"],
        provider_meta=META,
    )
    text = render_markdown(report)
    assert text.index("## Issues") < text.index("## Recommendations")


def test_markdown_comparison_flags_machine_generated():
    report = ComparativeReport(
        farms=[FarmPatterns(farm_id="AA", patterns=[PatternOutput(pattern="p", hypothesis="h")])],
        provider_meta=META,
    )
    text = render_markdown(report)
    assert "machine-generated" in text
    assert "## Farm AA" in text


def test_pareto_export_round_trip_exact():
    counts = [213, 150, 120, 7]
    series = pareto(mode_report(counts, unassigned=3))
    table = export_plot_data(series)
    assert table.splitlines()[0] == "rank,label,count,percentage,cumulative_percentage"
    assert len(table.splitlines()) == 1 + len(series.entries)
    assert import_pareto_table(table) == series


def test_timeline_export_rows_and_empty_header_only():
    corpus = seq_corpus()
    report = chain_report(
        [CausalChain(chain_id="CH01", member_log_ids=["L1", "L2"], hypothesis="h",
                     confidence="high", homogeneous=False)]
    )
    table = export_plot_data(timeline(report, corpus))
    lines = table.splitlines()
    assert lines[0] == "lane,chain_id,confidence,log_id,event_date,subsystem"
    assert len(lines) == 3

    empty = export_plot_data(timeline(chain_report([]), corpus))
    assert empty.splitlines() == ["lane,chain_id,confidence,log_id,event_date,subsystem"]


def test_preset_pareto_export_has_fifteen_rows(paper_run, mock_client):
    from relialog.gateway import ChunkStrategy
    from relialog.workflows import run_failure_mode_analysis

    report = run_failure_mode_analysis(
        paper_run.converter_cohort, paper_run.prepped, mock_client, ChunkStrategy.FULL
    )
    table = export_plot_data(pareto(report))
    lines = table.splitlines()
    assert len(lines) == 1 + 15  # header plus one row per mode, no "other"
    assert import_pareto_table(table).total == 1065
