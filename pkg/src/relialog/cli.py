"""Composable command-line pipeline with file-based handoffs between stages.

Stages write inspectable intermediates (canonical corpus, glossary, decision
table, cohort manifests, report JSON) so every step can be audited before the
next one runs. Every output embeds the config hash, seed, and prompt-template
version; none embed timestamps or absolute paths, so identical inputs and
seeds reproduce byte-identical output trees.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import cohorts, corpus as corpus_mod, insights, prep, synth, workflows
from .gateway import (
    BUILTIN_PROFILES,
    ChunkStrategy,
    GatewayClient,
    GatewayError,
    OpenAICompatProvider,
    PlanError,
    ProviderProfile,
    RetriesExhausted,
)
from .mockprovider import MockProvider
from .promptkit import TEMPLATE_VERSION
from .reports import REPORT_TYPES, SchemaError
from .workflows import RepairExhausted, WorkflowError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_PROVIDER = 4
EXIT_RETRIES = 5

TASK_TO_KIND = {
    "failure-modes": cohorts.CohortKind.SUBSYSTEM,
    "causal": cohorts.CohortKind.TURBINE_SEQUENCE,
    "compare": cohorts.CohortKind.FARM_GROUP,
}

TASK_TO_REPORT_TYPE = {
    "failure-modes": "failure_modes",
    "causal": "causal_chain",
    "compare": "site_comparison",
    "audit": "quality_audit",
}


class CliError(Exception):
    def __init__(self, message: str, exit_code: int = EXIT_CONFIG, code: str = "config_error"):
        super().__init__(message)
        self.exit_code = exit_code
        self.code = code


def _config_hash(params: dict) -> str:
    """Hash of the semantic run configuration; deliberately path-free so runs
    in different directories stay byte-comparable."""
    canonical = json.dumps(params, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _meta(command: str, params: dict, seed: int) -> dict:
    return {
        "config_hash": _config_hash({"command": command, **params}),
        "seed": seed,
        "template_version": TEMPLATE_VERSION,
    }


def _meta_comment(meta: dict) -> str:
    return "# meta " + json.dumps(meta, sort_keys=True, ensure_ascii=False) + "\n"


def _require_file(path: str | Path, what: str) -> Path:
    resolved = Path(path)
    if not resolved.exists():
        raise CliError(f"{what} not found: {resolved}")
    return resolved


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _load_run_config(path: str | None) -> dict:
    if not path:
        return {}
    values: dict[str, str] = {}
    for line in _require_file(path, "config file").read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def _load_mapping(path: str | None) -> dict[str, str] | None:
    if not path:
        return None
    mapping: dict[str, str] = {}
    for line in _require_file(path, "mapping file").read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        mapping[key.strip()] = value.strip()
    return mapping


def _load_profiles(path: str | None) -> dict[str, ProviderProfile]:
    profiles = dict(BUILTIN_PROFILES)
    if path:
        data = json.loads(_require_file(path, "profiles file").read_text(encoding="utf-8"))
        for name, entry in data.items():
            profiles[name] = ProviderProfile(
                name=name,
                context_window_tokens=int(entry["context_window_tokens"]),
                max_output_tokens=int(entry["max_output_tokens"]),
                request_timeout_s=int(entry.get("request_timeout_s", 120)),
                max_retries=int(entry.get("max_retries", 3)),
            )
    return profiles


def _build_client(args) -> GatewayClient:
    profiles = _load_profiles(getattr(args, "profiles_file", None))
    profile_name = args.profile or ("mock" if args.provider == "mock" else None)
    if profile_name is None or profile_name not in profiles:
        raise CliError(f"unknown provider profile {profile_name!r}; available: {sorted(profiles)}")
    profile = profiles[profile_name]
    if args.provider == "mock":
        provider = MockProvider()
    elif args.provider == "openai-compat":
        if not args.base_url or not args.model:
            raise CliError("openai-compat provider requires --base-url and --model")
        provider = OpenAICompatProvider(
            name=f"openai-compat:{args.model}",
            base_url=args.base_url,
            model=args.model,
            timeout_s=profile.request_timeout_s,
        )
    else:
        raise CliError(f"unknown provider {args.provider!r}")
    return GatewayClient(
        provider, profile,
        audit_path=args.audit_trail,
        prompt_dump_dir=getattr(args, "dump_prompts", None),
    )


def _check_template_pin(pin: str | None) -> None:
    if pin and pin != TEMPLATE_VERSION:
        raise CliError(
            f"template version pin {pin!r} does not match installed templates "
            f"({TEMPLATE_VERSION!r})"
        )


def _strategy_from(args) -> tuple[ChunkStrategy, float | None]:
    strategy = {
        "full": ChunkStrategy.FULL,
        "packed": ChunkStrategy.PACKED,
        "sampled": ChunkStrategy.SAMPLED_FRACTION,
    }[args.strategy]
    fraction = args.fraction
    if strategy is ChunkStrategy.SAMPLED_FRACTION and fraction is None:
        raise CliError("--strategy sampled requires --fraction")
    return strategy, fraction


# --- subcommands -----------------------------------------------------------------


def cmd_ingest(args) -> int:
    source = _require_file(args.input, "input table")
    mapping = _load_mapping(args.mapping)
    loaded = corpus_mod.ingest(source, mapping)
    params = {"mapping": mapping or "default", "seed": args.seed}
    meta = _meta("ingest", params, args.seed)
    meta["source"] = source.name
    meta["read"] = loaded.provenance.read
    meta["accepted"] = loaded.provenance.accepted
    meta["rejected"] = loaded.provenance.rejected
    out = Path(args.out)
    _write_text(out, _meta_comment(meta) + corpus_mod.serialize_corpus(loaded))
    if loaded.rejected_rows:
        rejects = "\n".join(
            f"{r.line_no},{r.reason},{r.log_id or ''}" for r in loaded.rejected_rows
        )
        _write_text(
            out.with_suffix(".rejects.csv"),
            _meta_comment(meta) + "line_no,reason,log_id\n" + rejects + "\n",
        )
    print(
        f"ingested {loaded.provenance.accepted} of {loaded.provenance.read} rows "
        f"({loaded.provenance.rejected} rejected) -> {out}"
    )
    return EXIT_OK


def cmd_prep(args) -> int:
    source = _require_file(args.corpus, "corpus file")
    policy = prep.parse_policy_file(args.policy) if args.policy else prep.PrepPolicy()
    loaded = corpus_mod.load_corpus(source)
    cleaned = prep.clean_corpus(loaded, policy)
    kept, decisions = prep.filter_corpus(cleaned, policy)
    anonymized, glossary = prep.anonymize(kept)
    params = {
        "min_token_count": policy.informativeness.min_token_count,
        "placeholder_blocklist": sorted(policy.informativeness.placeholder_blocklist),
        "subsystem_blocklist": sorted(policy.subsystem_blocklist),
        "deduplicate": policy.deduplicate,
        "seed": args.seed,
    }
    meta = _meta("prep", params, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_text(
        out_dir / "corpus_prepped.jsonl",
        _meta_comment(meta) + corpus_mod.serialize_corpus(anonymized),
    )
    _write_text(out_dir / "glossary.csv", _meta_comment(meta) + prep.glossary_to_table(glossary))
    _write_text(
        out_dir / "decisions.csv", _meta_comment(meta) + prep.decisions_to_table(decisions)
    )
    removed = len(cleaned) - len(kept)
    print(
        f"prep kept {len(kept)} of {len(cleaned)} logs ({removed} removed), "
        f"{len(glossary.forward)} farms anonymized -> {out_dir}"
    )
    return EXIT_OK


def cmd_cohort(args) -> int:
    source = _require_file(args.corpus, "corpus file")
    loaded = corpus_mod.load_corpus(source)
    if args.kind == "subsystem":
        if not args.name:
            raise CliError("--kind subsystem requires --name")
        cohort = cohorts.subsystem_cohort(loaded, args.name)
    elif args.kind == "turbine":
        cohort = cohorts.turbine_sequence_cohort(
            loaded,
            args.turbine_id,
            min_observation_days=args.min_observation_days,
            normalize_by_age=args.normalize_by_age,
        )
    elif args.kind == "farm-group":
        if not args.contexts:
            raise CliError("--kind farm-group requires --contexts")
        contexts = corpus_mod.load_site_contexts(_require_file(args.contexts, "contexts file"))
        if args.glossary:
            glossary = prep.glossary_from_table(
                _require_file(args.glossary, "glossary file").read_text(encoding="utf-8")
            )
            contexts = prep.map_context_keys(contexts, glossary)
        farms = [f.strip() for f in args.farms.split(",")] if args.farms else None
        cohort = cohorts.comparative_group(loaded, contexts, farms, max_ratio=args.max_ratio)
    else:  # pragma: no cover - argparse restricts choices
        raise CliError(f"unknown cohort kind {args.kind!r}")
    params = {
        "kind": args.kind,
        "name": args.name,
        "turbine_id": args.turbine_id,
        "farms": args.farms,
        "max_ratio": args.max_ratio,
        "min_observation_days": args.min_observation_days,
        "normalize_by_age": getattr(args, "normalize_by_age", False),
        "seed": args.seed,
    }
    payload = {
        "meta": _meta("cohort", params, args.seed),
        "cohort": cohorts.cohort_to_manifest(cohort),
    }
    _write_text(Path(args.out), json.dumps(payload, ensure_ascii=False, indent=2) + "\n")
    print(f"cohort {cohort.kind.value} {cohort.label!r} with {len(cohort)} logs -> {args.out}")
    return EXIT_OK


def _load_cohort(path: str, loaded_corpus) -> cohorts.Cohort:
    data = json.loads(_require_file(path, "cohort manifest").read_text(encoding="utf-8"))
    cohort = cohorts.cohort_from_manifest(data["cohort"] if "cohort" in data else data)
    cohorts.validate_cohort(cohort, loaded_corpus)
    return cohort


def cmd_analyze(args) -> int:
    _check_template_pin(args.template_pin)
    source = _require_file(args.corpus, "corpus file")
    loaded = corpus_mod.load_corpus(source)
    client = _build_client(args)
    strategy, fraction = _strategy_from(args)

    if args.task == "audit":
        report = workflows.run_quality_audit(
            loaded, client, strategy, seed=args.seed, sample_fraction=fraction
        )
    else:
        if not args.cohort:
            raise CliError(f"--task {args.task} requires --cohort")
        cohort = _load_cohort(args.cohort, loaded)
        expected = TASK_TO_KIND[args.task]
        if cohort.kind is not expected:
            raise CliError(
                f"--task {args.task} needs a {expected.value} cohort, got {cohort.kind.value}",
                exit_code=EXIT_VALIDATION,
                code="wrong_cohort_kind",
            )
        if args.task == "failure-modes":
            report = workflows.run_failure_mode_analysis(
                cohort, loaded, client, strategy, seed=args.seed, sample_fraction=fraction
            )
        elif args.task == "causal":
            report = workflows.run_causal_inference(cohort, loaded, client)
        else:
            report = workflows.run_comparison(cohort, loaded, client)

    params = {
        "task": args.task,
        "provider": args.provider,
        "profile": args.profile,
        "strategy": args.strategy,
        "fraction": fraction,
        "seed": args.seed,
    }
    payload = {
        "meta": _meta("analyze", params, args.seed),
        "report_type": TASK_TO_REPORT_TYPE[args.task],
        "report": report.model_dump(),
    }
    _write_text(Path(args.out), json.dumps(payload, ensure_ascii=False, indent=2) + "\n")
    print(f"{args.task} report -> {args.out}")
    return EXIT_OK


def _load_report(path: str):
    data = json.loads(_require_file(path, "report file").read_text(encoding="utf-8"))
    report_type = data.get("report_type")
    if report_type not in REPORT_TYPES:
        raise CliError(f"report file has unknown report_type {report_type!r}")
    model = REPORT_TYPES[report_type]
    return report_type, model.model_validate(data["report"]), data.get("meta", {})


def cmd_report(args) -> int:
    report_type, report, meta = _load_report(args.report)
    out = Path(args.out)
    meta_comment_html = f"<!-- meta {json.dumps(meta, sort_keys=True)} -->\n"
    if args.format == "markdown":
        _write_text(out, meta_comment_html + insights.render_markdown(report))
    elif args.format == "svg":
        if report_type == "failure_modes":
            svg = insights.render_pareto_svg(insights.pareto(report))
        elif report_type == "causal_chain":
            if not args.corpus:
                raise CliError("svg for a causal report requires --corpus")
            loaded = corpus_mod.load_corpus(_require_file(args.corpus, "corpus file"))
            svg = insights.render_timeline_svg(insights.timeline(report, loaded))
        else:
            raise CliError(f"svg rendering is not defined for {report_type} reports")
        _write_text(out, meta_comment_html + svg)
    else:
        if report_type == "failure_modes":
            table = insights.export_plot_data(insights.pareto(report))
        elif report_type == "causal_chain":
            if not args.corpus:
                raise CliError("plot-data for a causal report requires --corpus")
            loaded = corpus_mod.load_corpus(_require_file(args.corpus, "corpus file"))
            table = insights.export_plot_data(insights.timeline(report, loaded))
        else:
            raise CliError(f"plot-data export is not defined for {report_type} reports")
        _write_text(out, _meta_comment(meta) + table)
    print(f"{report_type} {args.format} -> {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.spec:
        spec = synth.load_spec_file(_require_file(args.spec, "synth spec"))
    else:
        spec = synth.load_preset(args.preset)
    if args.seed is not None:
        spec = synth.spec_from_dict({**_spec_dict(spec), "seed": args.seed})
    out_dir = Path(args.out_dir)
    data = synth.generate(spec, out_dir)
    params = {"preset": spec.name, "synth_seed": spec.seed, "seed": spec.seed}
    meta = _meta("synth", params, spec.seed)
    for path in (data.corpus_path, data.contexts_path):
        path.write_text(_meta_comment(meta) + path.read_text(encoding="utf-8"), encoding="utf-8")
    truth_payload = json.loads(data.truth_path.read_text(encoding="utf-8"))
    truth_payload["meta"] = meta
    data.truth_path.write_text(
        json.dumps(truth_payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    print(
        f"synthetic corpus {spec.name!r} (seed {spec.seed}): {spec.n_logs} logs, "
        f"{len(data.truth.mode_assignments)} mode-tagged, {len(data.truth.junk_ids)} junk -> {out_dir}"
    )
    return EXIT_OK


def _spec_dict(spec: synth.SynthSpec) -> dict:
    return {
        "name": spec.name,
        "seed": spec.seed,
        "n_logs": spec.n_logs,
        "n_farms": spec.n_farms,
        "n_turbines_per_farm": spec.n_turbines_per_farm,
        "junk_fraction": spec.junk_fraction,
        "date_range": [spec.date_range[0].isoformat(), spec.date_range[1].isoformat()],
        "planted_modes": [
            {
                "canonical_token": m.canonical_token,
                "anchor": m.anchor,
                "target_count": m.target_count,
                "templates": list(m.templates),
            }
            for m in spec.planted_modes
        ],
        "planted_chains": [
            {
                "chain_id": c.chain_id,
                "confidence": c.confidence,
                "day_offsets": list(c.day_offsets),
                "subsystems": list(c.subsystems),
                "templates": list(c.templates),
                "turbine": c.turbine,
            }
            for c in spec.planted_chains
        ],
        "farm_skews": {
            str(i): {"token": s.token, "count": s.count, "subsystem": s.subsystem}
            for i, s in spec.farm_skews.items()
        },
        "high_failure": {
            "farm_index": spec.high_failure.farm_index,
            "turbine_index": spec.high_failure.turbine_index,
            "n_logs": spec.high_failure.n_logs,
            "window_days": spec.high_failure.window_days,
            "window_start_offset_days": spec.high_failure.window_start_offset_days,
        },
        "junk_mix": {
            "uninformative": spec.junk_mix.uninformative,
            "non_turbine": spec.junk_mix.non_turbine,
            "duplicates": spec.junk_mix.duplicates,
        },
    }


def cmd_score(args) -> int:
    truth = synth.load_truth(_require_file(args.truth, "truth file"))
    report_type, report, _ = _load_report(args.report)
    if args.task == "failure-modes":
        if report_type != "failure_modes":
            raise CliError("score --task failure-modes needs a failure_modes report")
        metrics = synth.score_modes(report, truth)
    elif args.task == "causal":
        if report_type != "causal_chain":
            raise CliError("score --task causal needs a causal_chain report")
        metrics = synth.score_chains(report, truth)
    else:  # pragma: no cover - argparse restricts choices
        raise CliError(f"unknown score task {args.task!r}")
    params = {"task": args.task, "seed": args.seed}
    payload = {"meta": _meta("score", params, args.seed), "metrics": metrics}
    text = json.dumps(payload, ensure_ascii=False, indent=2) + "\n"
    if args.out:
        _write_text(Path(args.out), text)
    print(text, end="")
    return EXIT_OK


# --- parser / dispatch ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relialog",
        description="Semantic reliability analysis of wind-turbine maintenance logs",
    )
    parser.add_argument("--config", help="key=value run-config file; flags override it")
    parser.add_argument("--json-errors", action="store_true", help="emit machine-readable errors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest a raw log table into a canonical corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--mapping", help="key=value column-mapping file")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("prep", help="clean, filter, and anonymize a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--policy", help="key=value prep policy file")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("cohort", help="select an analytical cohort")
    p.add_argument("--corpus", required=True)
    p.add_argument("--kind", required=True, choices=("subsystem", "turbine", "farm-group"))
    p.add_argument("--name", help="subsystem name for --kind subsystem")
    p.add_argument("--turbine-id", help="explicit turbine for --kind turbine")
    p.add_argument("--farms", help="comma-separated explicit farm list for --kind farm-group")
    p.add_argument("--contexts", help="site-context table for --kind farm-group")
    p.add_argument("--glossary", help="anonymization glossary to re-key contexts")
    p.add_argument("--max-ratio", type=float, default=cohorts.DEFAULT_MAX_COUNT_RATIO)
    p.add_argument(
        "--min-observation-days", type=int, default=cohorts.DEFAULT_MIN_OBSERVATION_DAYS
    )
    p.add_argument(
        "--normalize-by-age", action="store_true",
        help="rank turbines by events per commissioning-age year instead of log-span year",
    )
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_cohort)

    p = sub.add_parser("analyze", help="run one of the four analyses")
    p.add_argument("--task", required=True, choices=("failure-modes", "causal", "compare", "audit"))
    p.add_argument("--corpus", required=True)
    p.add_argument("--cohort", help="cohort manifest (not used by --task audit)")
    p.add_argument("--provider", default="mock")
    p.add_argument("--profile", help="provider profile name (default mock for the mock provider)")
    p.add_argument("--profiles-file", help="JSON file with additional provider profiles")
    p.add_argument("--base-url", help="endpoint base URL for openai-compat providers")
    p.add_argument("--model", help="model name for openai-compat providers")
    p.add_argument("--strategy", default="full", choices=("full", "packed", "sampled"))
    p.add_argument("--fraction", type=float, help="sample fraction for --strategy sampled")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--audit-trail", help="append provider request/response records to this file")
    p.add_argument("--dump-prompts", help="write every rendered prompt into this directory")
    p.add_argument("--template-pin", help="fail unless templates match this version")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="render a report to markdown or plot data")
    p.add_argument("--report", required=True)
    p.add_argument("--format", required=True, choices=("markdown", "plot-data", "svg"))
    p.add_argument("--corpus", help="corpus file (needed for causal plot-data)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="generate a synthetic corpus with ground truth")
    p.add_argument("--preset", default="paper-shape", choices=synth.PRESET_NAMES)
    p.add_argument("--spec", help="explicit synth spec JSON (overrides --preset)")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("score", help="score a report against synthetic ground truth")
    p.add_argument("--task", required=True, choices=("failure-modes", "causal"))
    p.add_argument("--report", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_score)

    return parser


def _apply_config_defaults(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Inject --config values as flag defaults (explicit flags win)."""
    if "--config" not in argv:
        return argv
    index = argv.index("--config")
    config = _load_run_config(argv[index + 1])
    if not config:
        return argv
    extra: list[str] = []
    for key, value in config.items():
        flag = "--" + key.replace("_", "-")
        if flag not in argv:
            extra += [flag, value]
    return argv + extra


_ERROR_EXITS = (
    (RetriesExhausted, EXIT_RETRIES),
    (RepairExhausted, EXIT_RETRIES),
    (PlanError, EXIT_CONFIG),
    (GatewayError, EXIT_PROVIDER),
    (SchemaError, EXIT_VALIDATION),
    (WorkflowError, EXIT_VALIDATION),
    (cohorts.CohortError, EXIT_CONFIG),
    (corpus_mod.CorpusError, EXIT_CONFIG),
    (corpus_mod.SiteContextError, EXIT_CONFIG),
    (prep.PrepError, EXIT_CONFIG),
    (synth.SynthError, EXIT_CONFIG),
)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _apply_config_defaults(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # argparse exits with code 2 on bad usage
        return int(exc.code or 0)
    except CliError as exc:
        _emit_error(argv, exc.code, str(exc), exc.exit_code)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - mapped to documented exit codes
        for exc_type, exit_code in _ERROR_EXITS:
            if isinstance(exc, exc_type):
                code = getattr(exc, "code", exc_type.__name__)
                _emit_error(argv, code, str(exc), exit_code)
                return exit_code
        raise


def _emit_error(argv: list[str], code: str, message: str, exit_code: int) -> None:
    if "--json-errors" in argv:
        payload = {"error": code, "message": message, "exit_code": exit_code}
        print(json.dumps(payload, ensure_ascii=False), file=sys.stderr)
    else:
        print(f"error [{code}]: {message}", file=sys.stderr)


if __name__ == "__main__":
    raise SystemExit(main())
