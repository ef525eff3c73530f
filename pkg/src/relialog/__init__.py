"""Semantic reliability analysis of wind-turbine maintenance logs.

Library layout mirrors the pipeline: corpus ingestion, text prep and
anonymization, cohort selection, prompt assembly, a provider gateway with a
deterministic mock, workflow orchestration with strict output validation,
presentation insights, and a synthetic-corpus evaluation harness.
"""

__version__ = "0.1.0"
