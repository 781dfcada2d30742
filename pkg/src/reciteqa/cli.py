"""Command-line entry point.

Subcommands: run, analyze, build-corpus, gen-questions, index (build/query),
seed-sweep. Exit codes: 0 completed, 1 config error, 2 fatal backend error,
3 data error.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from . import hintcorpus, retrieval
from .backend import Backend, BackendError, CachingBackend, HttpBackend, ScriptedBackend
from .core import SamplingParams, Scheme, Strategy, canonical_json
from .datasets import DataError, default_shots, load_questions
from .evalkit import (
    DEFAULT_PROFILE,
    EvalError,
    NormProfile,
    aggregate_report,
    format_category_table,
    format_quadrant_table,
    path_subsample_curve,
    report_to_dict,
)
from .pipeline import (
    SchemeConfig,
    config_fingerprint,
    default_answer_params,
    default_recitation_params,
    load_run_records,
    run_dataset,
)
from .prompting import (
    DEFAULT_DIALECT,
    UL2_DIALECT,
    PromptError,
    PromptSet,
    load_prompt_set,
    sample_exemplars,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BACKEND = 2
EXIT_DATA = 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Run configuration


@dataclass
class RunConfig:
    dataset_path: Path
    adapter: str
    scheme: Scheme
    prompt_set: Path
    backend: dict
    run_dir: Path
    dialect_name: str = "default"
    limit: int | None = None
    n_paths: int = 20
    shots: int | None = None
    exemplar_seed: int = 0
    n_hints: int = 4
    recitations_per_hop: int = 2
    recitation_sampling: dict | None = None
    answer_sampling: dict | None = None
    normalization: dict | None = None
    max_questions_in_flight: int = 1
    max_paths_in_flight: int = 4
    cache: Path | None = None
    resume: bool = False


def _params_from_config(entry: dict | None, defaults: SamplingParams) -> SamplingParams:
    if not entry:
        return defaults
    merged = {
        "strategy": entry.get("strategy", defaults.strategy.value),
        "seed": entry.get("seed", defaults.seed),
        "max_tokens": entry.get("max_tokens", defaults.max_tokens),
        "k": entry.get("k", defaults.k),
        "temperature": entry.get("temperature", defaults.temperature),
        "stop_sequences": tuple(entry.get("stop_sequences", defaults.stop_sequences)),
    }
    try:
        strategy = Strategy(merged.pop("strategy"))
    except ValueError as exc:
        raise ConfigError(f"invalid sampling strategy: {exc}") from None
    if strategy is Strategy.GREEDY:
        merged["k"] = None
        merged["temperature"] = None
    return SamplingParams(strategy=strategy, **merged)


def _profile_from_config(entry: dict | None) -> NormProfile:
    if not entry:
        return DEFAULT_PROFILE

    def build(obj: dict, overrides) -> NormProfile:
        return NormProfile(
            lowercase=obj.get("lowercase", True),
            strip_articles=obj.get("strip_articles", True),
            strip_punct=obj.get("strip_punct", True),
            collapse_whitespace=obj.get("collapse_whitespace", True),
            overrides=overrides,
        )

    overrides = {
        dataset: build(sub, {}) for dataset, sub in entry.get("overrides", {}).items()
    }
    return build(entry, overrides)


def load_run_config(path: str | Path, overrides: argparse.Namespace | None = None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at offset {exc.pos}: {exc.msg}") from None
    base = path.parent

    def resolve(p: str) -> Path:
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base / candidate

    for field_name in ("dataset", "scheme", "prompt_set", "backend", "run_dir"):
        if field_name not in raw:
            raise ConfigError(f"{path}: missing required field {field_name!r}")
    dataset = raw["dataset"]
    if not isinstance(dataset, dict) or "path" not in dataset or "adapter" not in dataset:
        raise ConfigError(f"{path}: dataset needs path and adapter fields")
    try:
        scheme = Scheme(raw["scheme"])
    except ValueError:
        raise ConfigError(f"{path}: unknown scheme {raw['scheme']!r}") from None

    cfg = RunConfig(
        dataset_path=resolve(dataset["path"]),
        adapter=dataset["adapter"],
        scheme=scheme,
        prompt_set=resolve(raw["prompt_set"]),
        backend=raw["backend"],
        run_dir=resolve(raw["run_dir"]),
        dialect_name=raw.get("dialect", "default"),
        limit=raw.get("limit"),
        n_paths=raw.get("n_paths", 20),
        shots=raw.get("shots"),
        exemplar_seed=raw.get("exemplar_seed", 0),
        n_hints=raw.get("n_hints", 4),
        recitations_per_hop=raw.get("recitations_per_hop", 2),
        recitation_sampling=raw.get("recitation_sampling"),
        answer_sampling=raw.get("answer_sampling"),
        normalization=raw.get("normalization"),
        max_questions_in_flight=raw.get("max_questions_in_flight", 1),
        max_paths_in_flight=raw.get("max_paths_in_flight", 4),
        cache=resolve(raw["cache"]) if raw.get("cache") else None,
        resume=raw.get("resume", False),
    )

    if overrides is not None:
        if getattr(overrides, "scripted", None):
            cfg.backend = {"kind": "scripted", "script": overrides.scripted}
        if getattr(overrides, "limit", None) is not None:
            cfg.limit = overrides.limit
        if getattr(overrides, "paths", None) is not None:
            cfg.n_paths = overrides.paths
        if getattr(overrides, "shots", None) is not None:
            cfg.shots = overrides.shots
        if getattr(overrides, "seed", None) is not None:
            cfg.exemplar_seed = overrides.seed
        if getattr(overrides, "run_dir", None):
            cfg.run_dir = Path(overrides.run_dir)
        if getattr(overrides, "resume", False):
            cfg.resume = True

    if cfg.dialect_name not in ("default", "ul2"):
        raise ConfigError(f"{path}: unknown dialect {cfg.dialect_name!r}")
    if not cfg.dataset_path.is_file():
        raise ConfigError(f"{path}: dataset file {cfg.dataset_path} does not exist")
    if not cfg.prompt_set.is_dir():
        raise ConfigError(f"{path}: prompt set {cfg.prompt_set} does not exist")
    kind = cfg.backend.get("kind") if isinstance(cfg.backend, dict) else None
    if kind == "scripted":
        script = cfg.backend.get("script")
        if not script:
            raise ConfigError(f"{path}: scripted backend needs a script field")
        script_path = resolve(str(script))
        if not script_path.is_file():
            raise ConfigError(f"{path}: script file {script_path} does not exist")
        cfg.backend = {"kind": "scripted", "script": str(script_path)}
    elif kind == "http":
        for needed in ("base_url", "model"):
            if needed not in cfg.backend:
                raise ConfigError(f"{path}: http backend needs a {needed!r} field")
    else:
        raise ConfigError(f"{path}: backend kind must be scripted or http, got {kind!r}")
    return cfg


def _build_backend(cfg: RunConfig) -> tuple[Backend, bool]:
    """Returns (backend, deterministic) where deterministic marks scripted
    backends, whose runs must be byte-reproducible."""
    if cfg.backend["kind"] == "scripted":
        backend: Backend = ScriptedBackend.from_file(cfg.backend["script"])
        deterministic = True
    else:
        backend = HttpBackend(
            base_url=cfg.backend["base_url"],
            model=cfg.backend["model"],
            auth_env=cfg.backend.get("auth_env", "RECITEQA_API_KEY"),
            timeout_s=float(cfg.backend.get("timeout_s", 60.0)),
        )
        deterministic = False
    if cfg.cache is not None:
        backend = CachingBackend(backend, cfg.cache)
    return backend, deterministic


def _scheme_config(cfg: RunConfig) -> SchemeConfig:
    shots = cfg.shots if cfg.shots is not None else default_shots(cfg.adapter)
    scheme_cfg = SchemeConfig(
        scheme=cfg.scheme,
        recitation_params=_params_from_config(
            cfg.recitation_sampling, default_recitation_params()
        ),
        answer_params=_params_from_config(cfg.answer_sampling, default_answer_params()),
        n_paths=cfg.n_paths,
        n_hints=cfg.n_hints,
        exemplar_seed=cfg.exemplar_seed,
        shots=shots,
        recitations_per_hop=cfg.recitations_per_hop,
    )
    issues = scheme_cfg.validate()
    if issues:
        raise ConfigError(f"invalid scheme configuration: {'; '.join(issues)}")
    return scheme_cfg


def _pick_exemplars(prompt_set: PromptSet, scheme_cfg: SchemeConfig, scheme: Scheme):
    pool = prompt_set.exemplars
    if scheme is Scheme.CHAIN_OF_THOUGHT:
        pool = tuple(e for e in pool if e.rationale is not None)
    elif scheme is not Scheme.DIRECT:
        pool = tuple(e for e in pool if e.recitations)
    if len(pool) < scheme_cfg.shots:
        raise ConfigError(
            f"prompt set offers {len(pool)} usable exemplars for scheme "
            f"{scheme.value}, need {scheme_cfg.shots}"
        )
    try:
        return sample_exemplars(pool, scheme_cfg.shots, scheme_cfg.exemplar_seed)
    except PromptError as exc:
        raise ConfigError(str(exc)) from None


def _execute_run(cfg: RunConfig) -> dict:
    questions = load_questions(cfg.dataset_path, cfg.adapter)
    prompt_set = load_prompt_set(cfg.prompt_set)
    scheme_cfg = _scheme_config(cfg)
    if scheme_cfg.cot_anchor != prompt_set.cot_anchor:
        scheme_cfg = replace(scheme_cfg, cot_anchor=prompt_set.cot_anchor)
    if cfg.scheme is Scheme.DIVERSIFIED_RECITE and not prompt_set.hint_exemplars:
        raise ConfigError(
            f"prompt set {cfg.prompt_set} has no hint_exemplars; the "
            "diversified_recite scheme needs them"
        )
    exemplars = _pick_exemplars(prompt_set, scheme_cfg, cfg.scheme)
    backend, deterministic = _build_backend(cfg)
    dialect = UL2_DIALECT if cfg.dialect_name == "ul2" else DEFAULT_DIALECT
    profile = _profile_from_config(cfg.normalization)
    clock = (lambda: 0.0) if deterministic else time.monotonic

    cfg.run_dir.mkdir(parents=True, exist_ok=True)
    fingerprint = config_fingerprint(
        scheme_cfg, exemplars, dialect, tuple(tuple(t) for t in prompt_set.hint_exemplars)
    )
    started = time.time()
    records = list(
        run_dataset(
            questions,
            scheme_cfg,
            exemplars,
            backend,
            hint_exemplars=prompt_set.hint_exemplars,
            dialect=dialect,
            profile=profile,
            resume=cfg.resume,
            run_dir=cfg.run_dir,
            limit=cfg.limit,
            max_questions_in_flight=cfg.max_questions_in_flight,
            max_paths_in_flight=cfg.max_paths_in_flight,
            clock=clock,
        )
    )
    finished = time.time()

    report = aggregate_report(records, questions, profile)
    (cfg.run_dir / "report.json").write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    run_info = {
        "dataset": {"path": str(cfg.dataset_path), "adapter": cfg.adapter},
        "scheme": cfg.scheme.value,
        "prompt_set": str(cfg.prompt_set),
        "dialect": cfg.dialect_name,
        "limit": cfg.limit,
        "n_paths": scheme_cfg.n_paths,
        "shots": scheme_cfg.shots,
        "exemplar_seed": scheme_cfg.exemplar_seed,
        "n_hints": scheme_cfg.n_hints,
        "recitations_per_hop": scheme_cfg.recitations_per_hop,
        "normalization": cfg.normalization,
        "backend": cfg.backend,
        "config_fingerprint": fingerprint,
    }
    (cfg.run_dir / "run.json").write_text(
        canonical_json(run_info) + "\n", encoding="utf-8"
    )
    # Timings live apart from the byte-reproducible outputs.
    (cfg.run_dir / "meta.json").write_text(
        json.dumps(
            {"started_at": started, "finished_at": finished, "wall_s": finished - started},
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    return {
        "em": report.em,
        "f1": report.f1,
        "n": report.n_questions,
        "failed": report.n_failed_questions,
        "run_dir": str(cfg.run_dir),
    }


# ---------------------------------------------------------------------------
# Subcommands


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, args)
    summary = _execute_run(cfg)
    print(
        f"EM={summary['em']:.4f} F1={summary['f1']:.4f} "
        f"n={summary['n']} failed={summary['failed']} -> {summary['run_dir']}"
    )
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    run_info_path = run_dir / "run.json"
    records_path = run_dir / "records.jsonl"
    if not run_info_path.is_file() or not records_path.is_file():
        raise DataError(f"{run_dir} is not a run directory (need run.json and records.jsonl)")
    run_info = json.loads(run_info_path.read_text(encoding="utf-8"))
    records = list(load_run_records(records_path).values())
    if not records:
        raise DataError(f"{records_path} holds no records")
    questions = load_questions(
        run_info["dataset"]["path"], run_info["dataset"]["adapter"]
    )
    profile = _profile_from_config(run_info.get("normalization"))
    out_dir = Path(args.out) if args.out else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    report = aggregate_report(records, questions, profile)
    (out_dir / "report.json").write_text(
        json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    category_table = format_category_table(report)
    quadrant_table = format_quadrant_table(report)
    (out_dir / "category_table.txt").write_text(category_table + "\n", encoding="utf-8")
    (out_dir / "quadrant_table.txt").write_text(quadrant_table + "\n", encoding="utf-8")
    print(f"EM={report.em:.4f} F1={report.f1:.4f} n={report.n_questions}")
    print(category_table)
    print(quadrant_table)

    counts = [int(c) for c in args.paths.split(",")] if args.paths else [1, 5, 10, 20]
    try:
        curve = path_subsample_curve(
            records, questions, counts, trials=args.trials, seed=args.curve_seed,
            profile=profile,
        )
    except EvalError as exc:
        print(f"skipping subsample curve: {exc}", file=sys.stderr)
        return EXIT_OK
    curve_path = out_dir / "curve.csv"
    with curve_path.open("w", encoding="utf-8") as handle:
        handle.write("path_count,mean_em,std_em,mean_f1,std_f1\n")
        for point in curve:
            handle.write(
                f"{point.path_count},{point.mean_em:.6f},{point.std_em:.6f},"
                f"{point.mean_f1:.6f},{point.std_f1:.6f}\n"
            )
    print(f"curve -> {curve_path}")
    return EXIT_OK


def cmd_build_corpus(args: argparse.Namespace) -> int:
    dump = Path(args.dump)
    if not dump.is_file():
        raise DataError(f"dump file {dump} does not exist")
    reader = (
        hintcorpus.read_heading_dump if args.format == "headings" else hintcorpus.read_dump
    )
    try:
        corpus = hintcorpus.build_corpus(reader(dump))
    except hintcorpus.CorpusError as exc:
        raise DataError(str(exc)) from None
    corpus.save(args.out)
    print(f"{len(corpus)} passages -> {args.out}")
    return EXIT_OK


def cmd_gen_questions(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config, None)
    try:
        corpus = hintcorpus.Corpus.load(args.corpus)
    except hintcorpus.CorpusError as exc:
        raise DataError(str(exc)) from None
    prompt_set = load_prompt_set(cfg.prompt_set)
    backend, _ = _build_backend(cfg)
    try:
        triples, dropped = hintcorpus.generate_synthetic_triples(
            corpus,
            args.n,
            prompt_set.question_gen,
            backend,
            seed=args.seed,
            max_in_flight=cfg.max_paths_in_flight,
        )
    except hintcorpus.CorpusError as exc:
        raise ConfigError(str(exc)) from None
    hintcorpus.export_triples(triples, args.out)
    print(f"{len(triples)} triples ({dropped} dropped) -> {args.out}")
    return EXIT_OK


def cmd_index_build(args: argparse.Namespace) -> int:
    try:
        corpus = hintcorpus.Corpus.load(args.corpus)
    except hintcorpus.CorpusError as exc:
        raise DataError(str(exc)) from None
    passages = [(p.hint, p.text) for p in corpus]
    index = retrieval.build_index(
        passages, retrieval.Bm25Params(k1=args.k1, b=args.b)
    )
    retrieval.save_index(index, args.out)
    print(f"indexed {index.doc_count} passages -> {args.out}")
    return EXIT_OK


def cmd_index_query(args: argparse.Namespace) -> int:
    try:
        index = retrieval.load_index(args.index)
    except (retrieval.RetrievalError, OSError) as exc:
        raise DataError(str(exc)) from None
    for doc_id, doc_score in retrieval.top_k(index, args.query, args.k):
        print(f"{doc_score:.6f}\t{doc_id}")
    return EXIT_OK


def cmd_seed_sweep(args: argparse.Namespace) -> int:
    seeds = args.seeds
    if len(seeds) < 2:
        raise ConfigError("seed sweeps need at least 2 seeds")
    base_cfg = load_run_config(args.config, None)
    results = []
    for seed in seeds:
        cfg = load_run_config(args.config, None)
        cfg.exemplar_seed = seed
        cfg.run_dir = base_cfg.run_dir / f"seed-{seed}"
        summary = _execute_run(cfg)
        results.append({"seed": seed, "em": summary["em"], "f1": summary["f1"]})
        print(f"seed {seed}: EM={summary['em']:.4f} F1={summary['f1']:.4f}")
    ems = [r["em"] for r in results]
    f1s = [r["f1"] for r in results]
    summary = {
        "seeds": seeds,
        "per_seed": results,
        "mean_em": statistics.mean(ems),
        "std_em": statistics.stdev(ems) if len(ems) > 1 else 0.0,
        "mean_f1": statistics.mean(f1s),
        "std_f1": statistics.stdev(f1s) if len(f1s) > 1 else 0.0,
    }
    base_cfg.run_dir.mkdir(parents=True, exist_ok=True)
    (base_cfg.run_dir / "summary.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8"
    )
    print(
        f"mean EM={summary['mean_em']:.4f} (+/- {summary['std_em']:.4f}) "
        f"F1={summary['mean_f1']:.4f} (+/- {summary['std_f1']:.4f})"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reciteqa",
        description="Recite-and-answer closed-book QA harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="answer a dataset and write a run directory")
    run.add_argument("--config", required=True, help="run config JSON file")
    run.add_argument("--scripted", help="override: scripted backend script file")
    run.add_argument("--limit", type=int, help="override: evaluate only the first N questions")
    run.add_argument("--paths", type=int, help="override: self-consistency path count")
    run.add_argument("--shots", type=int, help="override: exemplar count")
    run.add_argument("--seed", type=int, help="override: exemplar sampling seed")
    run.add_argument("--run-dir", help="override: output run directory")
    run.add_argument("--resume", action="store_true", help="skip completed questions")
    run.set_defaults(func=cmd_run)

    analyze = sub.add_parser("analyze", help="score a run directory and emit reports")
    analyze.add_argument("run_dir")
    analyze.add_argument("--out", help="output directory (default: the run directory)")
    analyze.add_argument("--paths", help="comma-separated subsample path counts (default 1,5,10,20)")
    analyze.add_argument("--trials", type=int, default=5)
    analyze.add_argument("--curve-seed", type=int, default=0)
    analyze.set_defaults(func=cmd_analyze)

    corpus = sub.add_parser("build-corpus", help="build a hinted passage corpus from a dump")
    corpus.add_argument("dump")
    corpus.add_argument("--out", required=True)
    corpus.add_argument(
        "--format", choices=("native", "headings"), default="native",
        help="native JSONL records or heading-marked plain text",
    )
    corpus.set_defaults(func=cmd_build_corpus)

    gen = sub.add_parser("gen-questions", help="generate synthetic question-hint-passage triples")
    gen.add_argument("--config", required=True, help="run config (supplies backend and prompt set)")
    gen.add_argument("--corpus", required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen_questions)

    index = sub.add_parser("index", help="BM25 index operations")
    index_sub = index.add_subparsers(dest="index_command", required=True)
    index_build = index_sub.add_parser("build")
    index_build.add_argument("--corpus", required=True)
    index_build.add_argument("--out", required=True)
    index_build.add_argument("--k1", type=float, default=0.9)
    index_build.add_argument("--b", type=float, default=0.4)
    index_build.set_defaults(func=cmd_index_build)
    index_query = index_sub.add_parser("query")
    index_query.add_argument("--index", required=True)
    index_query.add_argument("--query", required=True)
    index_query.add_argument("--k", type=int, default=1)
    index_query.set_defaults(func=cmd_index_query)

    sweep = sub.add_parser("seed-sweep", help="re-run with resampled exemplars per seed")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--seeds", type=int, nargs="+", required=True)
    sweep.set_defaults(func=cmd_seed_sweep)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, PromptError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (DataError, EvalError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
