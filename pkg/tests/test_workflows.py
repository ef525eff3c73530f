from __future__ import annotations

import json
import random

import pytest

from relialog.cohorts import comparative_group, subsystem_cohort, turbine_sequence_cohort
from relialog.gateway import BUILTIN_PROFILES, ChunkStrategy, GatewayClient
from relialog.mockprovider import MockProvider, mock_complete
from relialog.promptkit import build_failure_mode_prompt
from relialog.reports import ModeOutput, SupportingQuote, ValidationContext
from relialog.workflows import (
    RepairExhausted,
    WorkflowError,
    reconcile_counts,
    repair_loop,
    run_causal_inference,
    run_comparison,
    run_failure_mode_analysis,
    run_quality_audit,
)

from test_cohorts import context
from test_prep import make_corpus, make_log


class FaultInjectingProvider:
    """Wraps the mock; applies a scripted corruption to the nth responses."""

    name = "mock-faulty"

    def __init__(self, corruptions):
        self.corruptions = list(corruptions)
        self.calls = 0

    def complete(self, prompt_text: str) -> str:
        response = mock_complete(prompt_text)
        index = self.calls
        self.calls += 1
        corruption = self.corruptions[index] if index < len(self.corruptions) else None
        if corruption == "truncate":
            return response[: len(response) // 2]
        if corruption == "bad_enum":
            return response.replace('"high"', '"certain"').replace('"low"', '"certain"')
        if corruption == "foreign_id":
            data = json.loads(response)
            data["modes"][0]["supporting_quotes"][0]["log_id"] = "L999999"
            return json.dumps(data)
        if corruption == "drop_heading":
            return response.replace("## Recommendations", "## Suggestions")
        return response


def fault_client(corruptions, profile="mock"):
    return GatewayClient(FaultInjectingProvider(corruptions), BUILTIN_PROFILES[profile])


def tiny_client():
    from relialog.gateway import ProviderProfile

    return GatewayClient(MockProvider(), ProviderProfile("tiny", 2200, 200))


def converter_corpus(n=12, tokens=("FMA", "FMB")):
    records = []
    for i in range(n):
        token = tokens[i % len(tokens)]
        records.append(
            make_log(
                f"L{i:03d}",
                subsystem="Power Converter",
                turbine=f"T{i % 3}",
                day=i * 3,
                description=f"converter case {i} [{token}] trip recorded",
            )
        )
    return make_corpus(records)


# --- repair_loop ------------------------------------------------------------------


def repair_setup(corruptions):
    corpus = converter_corpus()
    cohort = subsystem_cohort(corpus, "Power Converter")
    spec = build_failure_mode_prompt(cohort, corpus)
    records = [corpus.get(i) for i in cohort.member_log_ids]
    context = ValidationContext(
        valid_log_ids=set(cohort.member_log_ids),
        log_texts={r.log_id: (r.description, r.observations) for r in records},
    )
    return spec, fault_client(corruptions), context


def test_repair_loop_first_try_valid():
    spec, client, context = repair_setup([])
    parsed, attempts = repair_loop(spec, client, context)
    assert attempts == 1
    assert len(parsed.modes) == 2


def test_repair_loop_heals_after_malformed_response():
    spec, client, context = repair_setup(["truncate"])
    parsed, attempts = repair_loop(spec, client, context)
    assert attempts == 2
    assert len(parsed.modes) == 2


def test_repair_loop_appends_validator_error_to_prompt():
    captured = []

    class SpyProvider(FaultInjectingProvider):
        def complete(self, prompt_text):
            captured.append(prompt_text)
            return super().complete(prompt_text)

    spec, _, context = repair_setup([])
    client = GatewayClient(SpyProvider(["foreign_id"]), BUILTIN_PROFILES["mock"])
    _, attempts = repair_loop(spec, client, context)
    assert attempts == 2
    assert "# CORRECTION" in captured[1]
    assert "unknown_log_reference" in captured[1]
    assert "L999999" in captured[1]


def test_repair_loop_exhausts_after_max_attempts():
    spec, client, context = repair_setup(["truncate", "truncate", "truncate", "truncate"])
    with pytest.raises(RepairExhausted) as excinfo:
        repair_loop(spec, client, context, max_attempts=3)
    assert excinfo.value.attempts == 3
    assert "malformed_syntax" in str(excinfo.value)


# --- reconcile_counts ----------------------------------------------------------------


def mode(name, description="desc", quotes=()):
    return ModeOutput(
        name=name,
        description=description,
        estimated_count=1,
        supporting_quotes=[SupportingQuote(log_id=i, quote=q) for i, q in quotes],
    )


def test_reconcile_assigns_by_planted_token():
    logs = [
        make_log("L1", description="breaker event [Q8BREAK] observed"),
        make_log("L2", day=1, description="thermal event [OVERTEMP] observed"),
    ]
    modes = [
        mode("Q8BREAK cluster", quotes=[("L1", "breaker event [Q8BREAK] observed")]),
        mode("OVERTEMP cluster", quotes=[("L2", "thermal event [OVERTEMP] observed")]),
    ]
    counts, unassigned = reconcile_counts(modes, logs)
    assert counts == [1, 1]
    assert unassigned == 0


def test_reconcile_perfect_overlap_when_logs_equal_quotes():
    logs = [make_log(f"L{i}", day=i, description=f"identical text {i}") for i in range(4)]
    modes = [mode("all", quotes=[(log.log_id, log.description) for log in logs])]
    counts, unassigned = reconcile_counts(modes, logs)
    assert counts == [4]
    assert unassigned == 0


def test_reconcile_gibberish_goes_unassigned():
    logs = [make_log("L1", description="zzz qqq www")]
    modes = [mode("converter faults", quotes=[("L9", "breaker tripped badly")])]
    counts, unassigned = reconcile_counts(modes, logs)
    assert counts == [0]
    assert unassigned == 1


def test_reconcile_conserves_counts_fuzzed():
    rng = random.Random(31)
    vocab = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"]
    for _ in range(25):
        logs = [
            make_log(f"L{i}", day=i, description=" ".join(rng.sample(vocab, 3)))
            for i in range(rng.randint(1, 30))
        ]
        modes = [
            mode(f"m{j}", description=" ".join(rng.sample(vocab, 2)))
            for j in range(rng.randint(1, 4))
        ]
        counts, unassigned = reconcile_counts(modes, logs)
        assert sum(counts) + unassigned == len(logs)


# --- runners -------------------------------------------------------------------------


def test_failure_mode_single_log_cohort(mock_client):
    corpus = make_corpus(
        [make_log("L1", subsystem="Power Converter", description="solo event [FMX] here")]
    )
    cohort = subsystem_cohort(corpus, "Power Converter")
    report = run_failure_mode_analysis(cohort, corpus, mock_client)
    assert len(report.modes) == 1
    assert report.modes[0].reconciled_count == 1
    assert report.modes[0].percentage == 100.0
    assert report.unassigned_count == 0


def test_failure_mode_requires_subsystem_cohort(mock_client):
    corpus = converter_corpus()
    cohort = turbine_sequence_cohort(corpus, "T1")
    with pytest.raises(WorkflowError) as excinfo:
        run_failure_mode_analysis(cohort, corpus, mock_client)
    assert excinfo.value.code == "wrong_cohort_kind"


def test_failure_mode_ranks_and_conserves(mock_client):
    corpus = converter_corpus(n=15, tokens=("FMA", "FMA", "FMB"))
    cohort = subsystem_cohort(corpus, "Power Converter")
    report = run_failure_mode_analysis(cohort, corpus, mock_client)
    assert [m.rank for m in report.modes] == [1, 2]
    assert report.modes[0].reconciled_count >= report.modes[1].reconciled_count
    assert sum(m.reconciled_count for m in report.modes) + report.unassigned_count == len(cohort)
    assert report.provider_meta.template_version == "1.0.0"


def test_chunked_equals_single_run(mock_client):
    corpus = converter_corpus(n=120, tokens=("FMA", "FMB", "FMC"))
    cohort = subsystem_cohort(corpus, "Power Converter")
    single = run_failure_mode_analysis(cohort, corpus, mock_client, ChunkStrategy.FULL)
    packed = run_failure_mode_analysis(cohort, corpus, tiny_client(), ChunkStrategy.PACKED)
    assert packed.provider_meta.chunk_count > 1
    assert single.model_dump(exclude={"provider_meta"}) == packed.model_dump(
        exclude={"provider_meta"}
    )


def test_causal_empty_chain_list_is_valid(mock_client):
    corpus = make_corpus(
        [make_log(f"L{i}", turbine="T1", day=i * 10, description=f"plain event number {i}")
         for i in range(5)]
    )
    cohort = turbine_sequence_cohort(corpus, "T1")
    report = run_causal_inference(cohort, corpus, mock_client)
    assert report.chains == []
    assert report.turbine_id == "T1"


def test_causal_chains_sorted_by_first_event(mock_client):
    records = [
        make_log("L1", turbine="T1", day=50, description="later chain starts [CH02-LOW] a"),
        make_log("L2", turbine="T1", day=60, description="later chain ends [CH02-LOW] b"),
        make_log("L3", turbine="T1", day=0, description="early chain starts [CH01-HIGH] a"),
        make_log("L4", turbine="T1", day=10, description="early chain ends [CH01-HIGH] b"),
    ]
    corpus = make_corpus(records)
    report = run_causal_inference(turbine_sequence_cohort(corpus, "T1"), corpus, mock_client)
    assert [c.chain_id for c in report.chains] == ["CH01", "CH02"]
    for chain in report.chains:
        dates = [corpus.get(i).event_date for i in chain.member_log_ids]
        assert dates == sorted(dates)


def test_causal_sequence_exceeding_context_errors():
    client = GatewayClient(MockProvider(), BUILTIN_PROFILES["mock-small"])
    corpus = make_corpus(
        [make_log(f"L{i:03d}", turbine="T1", day=i,
                  description=f"long event description padding {'x' * 120} {i}")
         for i in range(300)]
    )
    cohort = turbine_sequence_cohort(corpus, "T1")
    with pytest.raises(WorkflowError) as excinfo:
        run_causal_inference(cohort, corpus, client)
    assert excinfo.value.code == "sequence_exceeds_context"


def test_comparison_minimal_two_farms(mock_client):
    records = [
        make_log(f"A{i}", farm="WF1", day=i, description=f"pitch battery swap [PITCH] {i}")
        for i in range(4)
    ] + [
        make_log(f"B{i}", farm="WF2", day=i, description=f"tower light fix [TOWER] {i}")
        for i in range(4)
    ]
    corpus = make_corpus(records)
    contexts = {"WF1": context("WF1", "M1", "x"), "WF2": context("WF2", "M2", "y")}
    cohort = comparative_group(corpus, contexts, ["WF1", "WF2"])
    report = run_comparison(cohort, corpus, mock_client)
    assert [f.farm_id for f in report.farms] == ["WF1", "WF2"]
    assert "PITCH" in report.farms[0].patterns[0].pattern


def test_audit_merges_issue_titles_across_chunks():
    records = [
        make_log(f"L{i:03d}", day=i, description=f"short event {i}",
                 obs=f"short event {i}" if i % 3 == 0 else None)
        for i in range(240)
    ]
    corpus = make_corpus(records)
    report = run_quality_audit(corpus, tiny_client(), ChunkStrategy.PACKED)
    assert report.provider_meta.chunk_count > 1
    titles = [issue.title for issue in report.issues]
    assert len(titles) == len(set(titles))
    assert "Redundancy between Description and Observations" in titles
    assert report.chunk_coverage == 1.0
    assert len(report.source_markdown) == report.provider_meta.chunk_count
    assert len(report.issues) >= 1 and len(report.recommendations) >= 1


def test_audit_sampled_coverage_recorded(mock_client):
    records = [make_log(f"L{i:04d}", day=i % 900, description=f"event text number {i}")
               for i in range(1000)]
    corpus = make_corpus(records)
    report = run_quality_audit(
        corpus, mock_client, ChunkStrategy.SAMPLED_FRACTION, seed=7, sample_fraction=0.2
    )
    assert report.chunk_coverage == pytest.approx(0.2)
    assert report.provider_meta.sample_fraction == 0.2
    assert report.provider_meta.seed == 7


def test_audit_repair_heals_markdown(mock_client):
    corpus = make_corpus([make_log("L1", description="gear oil low in reservoir")])
    client = fault_client(["drop_heading"])
    report = run_quality_audit(corpus, client, ChunkStrategy.FULL)
    assert report.provider_meta.attempts == [2]


def test_rank_tie_broken_alphabetically(mock_client):
    records = [
        make_log("L0", subsystem="Power Converter", day=0, description="zeta issue [FMZ] one"),
        make_log("L1", subsystem="Power Converter", day=1, description="zeta issue [FMZ] two"),
        make_log("L2", subsystem="Power Converter", day=2, description="alpha issue [FMA] one"),
        make_log("L3", subsystem="Power Converter", day=3, description="alpha issue [FMA] two"),
    ]
    corpus = make_corpus(records)
    cohort = subsystem_cohort(corpus, "Power Converter")
    report = run_failure_mode_analysis(cohort, corpus, mock_client)
    assert [m.reconciled_count for m in report.modes] == [2, 2]
    assert [m.name for m in report.modes] == ["FMA fault cluster", "FMZ fault cluster"]


def test_gateway_error_carries_chunk_index():
    from relialog.gateway import RateLimited, RetriesExhausted

    class FlakyProvider:
        name = "flaky"

        def complete(self, prompt_text: str) -> str:
            raise RateLimited()

    corpus = converter_corpus()
    cohort = subsystem_cohort(corpus, "Power Converter")
    client = GatewayClient(
        FlakyProvider(), BUILTIN_PROFILES["mock"], sleep=lambda _: None
    )
    with pytest.raises(RetriesExhausted) as excinfo:
        run_failure_mode_analysis(cohort, corpus, client)
    assert excinfo.value.chunk_index == 0
