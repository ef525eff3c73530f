from __future__ import annotations

from dataclasses import dataclass

import pytest

from relialog.cohorts import (
    comparative_group,
    subsystem_cohort,
    turbine_sequence_cohort,
)
from relialog.corpus import Corpus, ingest, load_site_contexts
from relialog.gateway import BUILTIN_PROFILES, GatewayClient
from relialog.mockprovider import MockProvider
from relialog.prep import anonymize, clean_corpus, filter_corpus, map_context_keys
from relialog.synth import GeneratedData, SynthTruth, generate, load_preset


@dataclass
class PaperRun:
    """Everything downstream tests need from one paper-shape pipeline pass."""

    data: GeneratedData
    truth: SynthTruth
    raw: Corpus
    prepped: Corpus
    glossary_forward: dict[str, str]
    contexts: dict
    converter_cohort: object
    turbine_cohort: object
    farm_cohort: object


@pytest.fixture(scope="session")
def paper_run(tmp_path_factory) -> PaperRun:
    out_dir = tmp_path_factory.mktemp("paper_shape")
    data = generate(load_preset("paper-shape"), out_dir)
    raw = ingest(data.corpus_path)
    cleaned = clean_corpus(raw)
    kept, _ = filter_corpus(cleaned)
    prepped, glossary = anonymize(kept)
    contexts = map_context_keys(load_site_contexts(data.contexts_path), glossary)
    return PaperRun(
        data=data,
        truth=data.truth,
        raw=raw,
        prepped=prepped,
        glossary_forward=dict(glossary.forward),
        contexts=contexts,
        converter_cohort=subsystem_cohort(prepped, "Power Converter"),
        turbine_cohort=turbine_sequence_cohort(prepped),
        farm_cohort=comparative_group(prepped, contexts),
    )


@pytest.fixture()
def mock_client() -> GatewayClient:
    return GatewayClient(MockProvider(), BUILTIN_PROFILES["mock"])


@pytest.fixture()
def small_client() -> GatewayClient:
    return GatewayClient(MockProvider(), BUILTIN_PROFILES["mock-small"])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, printed in the summary."""
    lines = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" in nodeid:
                name = nodeid.split("::")[-1]
                lines.append((name, status.upper()))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"[{status}] {name}")
