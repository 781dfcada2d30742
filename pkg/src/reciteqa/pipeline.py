"""End-to-end answering schemes: direct, recite-and-answer with
self-consistency, multi-hop one-pass recitation, chain-of-thought, and
diversified recitation via passage hints.

Answer-stage outputs are stored as "Answer:" + completion (the cue line as
it appears in the transcript), so every extracted answer is re-derivable
from its raw text by extract_answer. Path i of a question derives its
sampling seed as base_seed + i, which keeps independently sampled paths
distinct and scripted runs reproducible.
"""

from __future__ import annotations

import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterator, Sequence

from .backend import Backend, BackendError, GenerationRequest
from .core import (
    MAX_SEED,
    Exemplar,
    QuestionRecord,
    RecitationPath,
    RunRecord,
    SamplingParams,
    Scheme,
    Strategy,
    deserialize,
    serialize,
    stable_hash,
)
from .evalkit import DEFAULT_PROFILE, NormProfile, plurality_vote
from .prompting import (
    DEFAULT_DIALECT,
    COT_ANSWER_ANCHOR,
    PromptDialect,
    PromptError,
    PromptSpec,
    build_cot_prompt,
    build_hint_prompts,
    build_multihop_prompt,
    build_qa_prompt,
    build_recitation_prompt,
)

__all__ = [
    "SchemeConfig",
    "PipelineError",
    "default_recitation_params",
    "default_answer_params",
    "config_fingerprint",
    "extract_answer",
    "answer_direct",
    "recite_and_answer",
    "recite_and_answer_multihop",
    "answer_chain_of_thought",
    "diversified_recite_and_answer",
    "run_dataset",
    "load_run_records",
]

logger = logging.getLogger(__name__)

PROMPT_TEMPLATE_VERSION = 1

ANSWER_CUE = "Answer:"
_RECITATION_CUE_RE = re.compile(r"Recitation (\d+):")


class PipelineError(Exception):
    """A per-question failure; carries whatever paths were assembled."""

    def __init__(self, question_id: str, message: str, paths: Sequence[RecitationPath] = ()):
        super().__init__(f"question {question_id}: {message}")
        self.question_id = question_id
        self.paths = tuple(paths)


def default_recitation_params(
    seed: int = 0, max_tokens: int = 256, stop_sequences: Sequence[str] = ("\n\n\n",)
) -> SamplingParams:
    # Sampling defaults for recitations: top-k 40 at temperature 0.7.
    return SamplingParams(
        strategy=Strategy.TOP_K,
        k=40,
        temperature=0.7,
        seed=seed,
        max_tokens=max_tokens,
        stop_sequences=tuple(stop_sequences),
    )


def default_answer_params(
    seed: int = 0, max_tokens: int = 64, stop_sequences: Sequence[str] = ("\n\n",)
) -> SamplingParams:
    return SamplingParams(
        strategy=Strategy.GREEDY,
        seed=seed,
        max_tokens=max_tokens,
        stop_sequences=tuple(stop_sequences),
    )


@dataclass(frozen=True)
class SchemeConfig:
    """One answering configuration: scheme, path count, and decoding
    parameters. Answers are always greedy-decoded."""

    scheme: Scheme
    recitation_params: SamplingParams
    answer_params: SamplingParams
    n_paths: int = 20
    n_hints: int = 4
    exemplar_seed: int = 0
    shots: int = 5
    recitations_per_hop: int = 2
    cot_anchor: str = COT_ANSWER_ANCHOR

    def validate(self) -> list[str]:
        issues = []
        if self.answer_params.strategy is not Strategy.GREEDY:
            issues.append("answer_params must use greedy decoding")
        if self.n_paths < 1:
            issues.append(f"n_paths must be >= 1, got {self.n_paths}")
        if self.n_hints < 1:
            issues.append(f"n_hints must be >= 1, got {self.n_hints}")
        if self.shots < 1:
            issues.append(f"shots must be >= 1, got {self.shots}")
        if self.scheme is Scheme.MULTI_HOP_RECITE and self.recitations_per_hop < 2:
            issues.append("multi-hop runs need recitations_per_hop >= 2")
        return issues


def _params_dict(params: SamplingParams) -> dict:
    return {
        "strategy": params.strategy.value,
        "seed": params.seed,
        "max_tokens": params.max_tokens,
        "k": params.k,
        "temperature": params.temperature,
        "stop_sequences": list(params.stop_sequences),
    }


def config_fingerprint(
    cfg: SchemeConfig,
    exemplars: Sequence[Exemplar],
    dialect: PromptDialect = DEFAULT_DIALECT,
    hint_exemplars: Sequence[tuple[str, str, str]] = (),
) -> str:
    """Stable hash of everything that shapes the prompts and sampling, so
    cached runs can be safely reused across processes and platforms."""
    payload = {
        "template_version": PROMPT_TEMPLATE_VERSION,
        "scheme": cfg.scheme.value,
        "n_paths": cfg.n_paths,
        "n_hints": cfg.n_hints,
        "shots": cfg.shots,
        "recitations_per_hop": cfg.recitations_per_hop,
        "cot_anchor": cfg.cot_anchor,
        "recitation_params": _params_dict(cfg.recitation_params),
        "answer_params": _params_dict(cfg.answer_params),
        "dialect": dialect.name.value,
        "exemplars": [stable_hash(serialize(e)) for e in exemplars],
        "hint_exemplars": [stable_hash(list(t)) for t in hint_exemplars],
    }
    return stable_hash(payload)


# ---------------------------------------------------------------------------
# Answer extraction


def _extract(raw: str, scheme: Scheme, cot_anchor: str) -> tuple[str, bool]:
    if scheme is Scheme.CHAIN_OF_THOUGHT:
        idx = raw.rfind(cot_anchor)
        if idx == -1:
            return "", True
        tail = raw[idx + len(cot_anchor):]
        tail = tail.split("\n\n")[0].strip()
        if tail.endswith("."):
            tail = tail[:-1]
        return tail.strip(), False
    idx = raw.rfind(ANSWER_CUE)
    if idx == -1:
        return "", True
    tail = raw[idx + len(ANSWER_CUE):]
    return tail.split("\n\n")[0].strip(), False


def extract_answer(
    raw: str, scheme: Scheme, cot_anchor: str = COT_ANSWER_ANCHOR
) -> str:
    """Pull the answer out of raw answer-stage text.

    Chain-of-thought: text after the last anchor phrase, trailing period
    stripped. All other schemes: text after the final "Answer:" cue, cut at
    the first block separator. Missing cue yields an empty answer (the
    pipeline flags it as extraction_failed in the path's backend_meta).
    """
    answer, _ = _extract(raw, scheme, cot_anchor)
    return answer


def _derived_params(params: SamplingParams, index: int) -> SamplingParams:
    return replace(params, seed=(params.seed + index) % (MAX_SEED + 1))


def _ok_path(
    recitations: Sequence[str],
    completion: str,
    meta: dict,
    scheme: Scheme,
    cot_anchor: str,
) -> RecitationPath:
    raw = ANSWER_CUE + completion
    answer, failed_extraction = _extract(raw, scheme, cot_anchor)
    path_meta = {
        "model": str(meta.get("model", "")),
        "latency_ms": str(meta.get("latency_ms", "")),
    }
    if failed_extraction:
        path_meta["extraction_failed"] = "true"
    return RecitationPath(
        recitations=tuple(recitations),
        raw_answer_text=raw,
        extracted_answer=answer,
        backend_meta=path_meta,
    )


def _failed_path(recitations: Sequence[str], error: Exception | str) -> RecitationPath:
    message = error if isinstance(error, str) else f"{type(error).__name__}: {error}"
    return RecitationPath(
        recitations=tuple(recitations),
        raw_answer_text="",
        extracted_answer="",
        backend_meta={"error": message},
    )


def _vote(
    question: QuestionRecord, paths: Sequence[RecitationPath], profile: NormProfile
) -> str:
    answers = [p.extracted_answer for p in paths if not p.failed]
    if not answers:
        raise PipelineError(
            question.id, f"all {len(paths)} paths failed", paths=paths
        )
    winner, _ = plurality_vote(answers, profile.for_dataset(question.dataset.value))
    return winner


def _finish(
    question: QuestionRecord,
    cfg: SchemeConfig,
    paths: Sequence[RecitationPath],
    fingerprint: str,
    profile: NormProfile,
    started: float,
    clock: Callable[[], float],
) -> RunRecord:
    voted = _vote(question, paths, profile)
    return RunRecord(
        question_id=question.id,
        scheme=cfg.scheme,
        paths=tuple(paths),
        voted_answer=voted,
        config_fingerprint=fingerprint,
        wall_clock_ms=int((clock() - started) * 1000),
    )


def _bare_qa_exemplars(exemplars: Sequence[Exemplar]) -> tuple[Exemplar, ...]:
    # Direct prompting renders exemplars as plain question/answer pairs.
    return tuple(replace(e, recitations=(), rationale=None) for e in exemplars)


@dataclass(frozen=True)
class _Ctx:
    """Per-run wiring shared by every question."""

    backend: Backend
    dialect: PromptDialect = DEFAULT_DIALECT
    profile: NormProfile = DEFAULT_PROFILE
    max_paths_in_flight: int = 4
    fingerprint: str = ""
    clock: Callable[[], float] = time.monotonic


def answer_direct(
    question: QuestionRecord,
    cfg: SchemeConfig,
    exemplars: Sequence[Exemplar],
    backend: Backend,
    *,
    dialect: PromptDialect = DEFAULT_DIALECT,
    profile: NormProfile = DEFAULT_PROFILE,
    fingerprint: str | None = None,
    clock: Callable[[], float] = time.monotonic,
) -> RunRecord:
    """Standard prompting: one greedy path, no recitations."""
    ctx = _Ctx(
        backend=backend,
        dialect=dialect,
        profile=profile,
        fingerprint=fingerprint or config_fingerprint(cfg, exemplars, dialect),
        clock=clock,
    )
    return _answer_direct(question, cfg, tuple(exemplars), ctx)


def _answer_direct(
    question: QuestionRecord, cfg: SchemeConfig, exemplars: tuple[Exemplar, ...], ctx: _Ctx
) -> RunRecord:
    started = ctx.clock()
    prompt = build_qa_prompt(
        PromptSpec(
            scheme=Scheme.DIRECT,
            exemplars=_bare_qa_exemplars(exemplars),
            target_question=question.question,
            dialect=ctx.dialect,
        )
    )
    try:
        result = ctx.backend.generate(GenerationRequest(prompt, cfg.answer_params, 1))
    except BackendError as exc:
        raise PipelineError(question.id, str(exc), paths=[_failed_path((), exc)]) from exc
    path = _ok_path((), result.texts[0], dict(result.meta), Scheme.DIRECT, cfg.cot_anchor)
    return _finish(question, cfg, [path], ctx.fingerprint, ctx.profile, started, ctx.clock)


def _qa_paths(
    question: QuestionRecord,
    cfg: SchemeConfig,
    exemplars: tuple[Exemplar, ...],
    recitation_lists: Sequence[tuple[str, ...] | None],
    failures: Sequence[BackendError | None],
    ctx: _Ctx,
) -> list[RecitationPath]:
    """Greedy-decode one answer per surviving recitation list; positions
    with a recitation failure become failed paths."""
    requests_list = []
    slots = []
    for i, (recitations, failure) in enumerate(zip(recitation_lists, failures)):
        if failure is not None or recitations is None:
            continue
        prompt = build_qa_prompt(
            PromptSpec(
                scheme=cfg.scheme,
                exemplars=exemplars,
                target_question=question.question,
                target_recitations=recitations,
                recitations_per_hop=cfg.recitations_per_hop,
                dialect=ctx.dialect,
            )
        )
        requests_list.append(GenerationRequest(prompt, cfg.answer_params, 1))
        slots.append(i)
    answers = ctx.backend.generate_batch(requests_list, ctx.max_paths_in_flight)
    by_slot = dict(zip(slots, answers))
    paths: list[RecitationPath] = []
    for i, (recitations, failure) in enumerate(zip(recitation_lists, failures)):
        if failure is not None:
            paths.append(_failed_path((), failure))
        elif recitations is None:
            paths.append(_failed_path((), "structure: recitation cues missing"))
        else:
            outcome = by_slot[i]
            if isinstance(outcome, BackendError):
                paths.append(_failed_path(recitations, outcome))
            else:
                paths.append(
                    _ok_path(
                        recitations,
                        outcome.texts[0],
                        dict(outcome.meta),
                        cfg.scheme,
                        cfg.cot_anchor,
                    )
                )
    return paths


def recite_and_answer(
    question: QuestionRecord,
    cfg: SchemeConfig,
    exemplars: Sequence[Exemplar],
    backend: Backend,
    *,
    dialect: PromptDialect = DEFAULT_DIALECT,
    profile: NormProfile = DEFAULT_PROFILE,
    fingerprint: str | None = None,
    max_paths_in_flight: int = 4,
    clock: Callable[[], float] = time.monotonic,
) -> RunRecord:
    """Sample one recitation per path, answer each path greedily on its own
    recitation, and take the plurality vote over path answers."""
    ctx = _Ctx(
        backend=backend,
        dialect=dialect,
        profile=profile,
        max_paths_in_flight=max_paths_in_flight,
        fingerprint=fingerprint or config_fingerprint(cfg, exemplars, dialect),
        clock=clock,
    )
    return _recite_and_answer(question, cfg, tuple(exemplars), ctx)


def _recite_and_answer(
    question: QuestionRecord, cfg: SchemeConfig, exemplars: tuple[Exemplar, ...], ctx: _Ctx
) -> RunRecord:
    started = ctx.clock()
    prompt = build_recitation_prompt(
        PromptSpec(
            scheme=Scheme.RECITE_ANSWER,
            exemplars=exemplars,
            target_question=question.question,
            dialect=ctx.dialect,
        )
    )
    requests_list = [
        GenerationRequest(prompt, _derived_params(cfg.recitation_params, i), 1)
        for i in range(cfg.n_paths)
    ]
    results = ctx.backend.generate_batch(requests_list, ctx.max_paths_in_flight)
    recitation_lists: list[tuple[str, ...] | None] = []
    failures: list[BackendError | None] = []
    for outcome in results:
        if isinstance(outcome, BackendError):
            recitation_lists.append(None)
            failures.append(outcome)
        else:
            recitation_lists.append((outcome.texts[0].strip(),))
            failures.append(None)
    paths = _qa_paths(question, cfg, exemplars, recitation_lists, failures, ctx)
    return _finish(question, cfg, paths, ctx.fingerprint, ctx.profile, started, ctx.clock)


def split_numbered_recitations(completion: str, expected: int) -> tuple[str, ...] | None:
    """Split a one-pass continuation of "Recitation 1:" into its numbered
    segments; None when the cue structure is missing or out of order.
    Content after any cue beyond the expected count is dropped."""
    text = "Recitation 1:" + completion
    matches = list(_RECITATION_CUE_RE.finditer(text))
    segments: list[str] = []
    for position, match in enumerate(matches):
        number = int(match.group(1))
        if len(segments) == expected:
            break
        if number != len(segments) + 1:
            return None
        end = matches[position + 1].start() if position + 1 < len(matches) else len(text)
        segments.append(text[match.end():end].strip())
    if len(segments) != expected:
        return None
    return tuple(segments)


def recite_and_answer_multihop(
    question: QuestionRecord,
    cfg: SchemeConfig,
    exemplars: Sequence[Exemplar],
    backend: Backend,
    *,
    dialect: PromptDialect = DEFAULT_DIALECT,
    profile: NormProfile = DEFAULT_PROFILE,
    fingerprint: str | None = None,
    max_paths_in_flight: int = 4,
    clock: Callable[[], float] = time.monotonic,
) -> RunRecord:
    """Per path, decode all numbered recitations in one sequential pass
    (later recitations can build on earlier ones), then answer and vote as
    in recite_and_answer."""
    ctx = _Ctx(
        backend=backend,
        dialect=dialect,
        profile=profile,
        max_paths_in_flight=max_paths_in_flight,
        fingerprint=fingerprint or config_fingerprint(cfg, exemplars, dialect),
        clock=clock,
    )
    return _recite_and_answer_multihop(question, cfg, tuple(exemplars), ctx)


def _recite_and_answer_multihop(
    question: QuestionRecord, cfg: SchemeConfig, exemplars: tuple[Exemplar, ...], ctx: _Ctx
) -> RunRecord:
    started = ctx.clock()
    prompt = build_multihop_prompt(
        PromptSpec(
            scheme=Scheme.MULTI_HOP_RECITE,
            exemplars=exemplars,
            target_question=question.question,
            recitations_per_hop=cfg.recitations_per_hop,
            dialect=ctx.dialect,
        )
    )
    requests_list = [
        GenerationRequest(prompt, _derived_params(cfg.recitation_params, i), 1)
        for i in range(cfg.n_paths)
    ]
    results = ctx.backend.generate_batch(requests_list, ctx.max_paths_in_flight)
    recitation_lists: list[tuple[str, ...] | None] = []
    failures: list[BackendError | None] = []
    for outcome in results:
        if isinstance(outcome, BackendError):
            recitation_lists.append(None)
            failures.append(outcome)
        else:
            recitation_lists.append(
                split_numbered_recitations(outcome.texts[0], cfg.recitations_per_hop)
            )
            failures.append(None)
    paths = _qa_paths(question, cfg, exemplars, recitation_lists, failures, ctx)
    return _finish(question, cfg, paths, ctx.fingerprint, ctx.profile, started, ctx.clock)


def answer_chain_of_thought(
    question: QuestionRecord,
    cfg: SchemeConfig,
    exemplars: Sequence[Exemplar],
    backend: Backend,
    *,
    dialect: PromptDialect = DEFAULT_DIALECT,
    profile: NormProfile = DEFAULT_PROFILE,
    fingerprint: str | None = None,
    max_paths_in_flight: int = 4,
    clock: Callable[[], float] = time.monotonic,
) -> RunRecord:
    """Chain-of-thought baseline: sample K rationale paths and vote over the
    answers extracted after the anchor phrase."""
    ctx = _Ctx(
        backend=backend,
        dialect=dialect,
        profile=profile,
        max_paths_in_flight=max_paths_in_flight,
        fingerprint=fingerprint or config_fingerprint(cfg, exemplars, dialect),
        clock=clock,
    )
    return _answer_chain_of_thought(question, cfg, tuple(exemplars), ctx)


def _answer_chain_of_thought(
    question: QuestionRecord, cfg: SchemeConfig, exemplars: tuple[Exemplar, ...], ctx: _Ctx
) -> RunRecord:
    started = ctx.clock()
    prompt = build_cot_prompt(
        PromptSpec(
            scheme=Scheme.CHAIN_OF_THOUGHT,
            exemplars=exemplars,
            target_question=question.question,
            dialect=ctx.dialect,
        ),
        anchor=cfg.cot_anchor,
    )
    requests_list = [
        GenerationRequest(prompt, _derived_params(cfg.recitation_params, i), 1)
        for i in range(cfg.n_paths)
    ]
    results = ctx.backend.generate_batch(requests_list, ctx.max_paths_in_flight)
    paths = []
    for outcome in results:
        if isinstance(outcome, BackendError):
            paths.append(_failed_path((), outcome))
        else:
            paths.append(
                _ok_path((), outcome.texts[0], dict(outcome.meta), cfg.scheme, cfg.cot_anchor)
            )
    return _finish(question, cfg, paths, ctx.fingerprint, ctx.profile, started, ctx.clock)


def _dedup_hints(hints: Sequence[str]) -> list[str]:
    """Case-insensitive exact dedup after trimming and collapsing internal
    whitespace; first occurrence keeps its raw form. Idempotent."""
    seen = set()
    unique = []
    for hint in hints:
        key = " ".join(hint.split()).lower()
        if key and key not in seen:
            seen.add(key)
            unique.append(" ".join(hint.split()))
    return unique


def diversified_recite_and_answer(
    question: QuestionRecord,
    cfg: SchemeConfig,
    exemplars: Sequence[Exemplar],
    hint_exemplars: Sequence,
    backend: Backend,
    *,
    hint_corpus=None,
    dialect: PromptDialect = DEFAULT_DIALECT,
    profile: NormProfile = DEFAULT_PROFILE,
    fingerprint: str | None = None,
    max_paths_in_flight: int = 4,
    clock: Callable[[], float] = time.monotonic,
) -> RunRecord:
    """Sample passage hints, dedup them, greedily expand each unique hint
    into a passage, then answer once from all passages as a single context.

    The optional hint corpus is diagnostic only: sampled hints found in it
    are counted in the path's backend_meta, but passages are always decoded
    from the model so the run stays closed-book.
    """
    ctx = _Ctx(
        backend=backend,
        dialect=dialect,
        profile=profile,
        max_paths_in_flight=max_paths_in_flight,
        fingerprint=fingerprint
        or config_fingerprint(
            cfg, exemplars, dialect, tuple(tuple(t) for t in hint_exemplars)
        ),
        clock=clock,
    )
    started = ctx.clock()
    hint_prompt, passage_template = build_hint_prompts(
        question.question, hint_exemplars, ctx.dialect
    )
    hint_requests = [
        GenerationRequest(hint_prompt, _derived_params(cfg.recitation_params, i), 1)
        for i in range(cfg.n_hints)
    ]
    hint_results = ctx.backend.generate_batch(hint_requests, ctx.max_paths_in_flight)
    sampled_hints = []
    for outcome in hint_results:
        if isinstance(outcome, BackendError):
            continue
        hint = outcome.texts[0].split("\n")[0].strip()
        if hint:
            sampled_hints.append(hint)
    if not sampled_hints:
        raise PipelineError(
            question.id,
            "all hint samples failed",
            paths=[_failed_path((), "all hint samples failed")],
        )
    unique_hints = _dedup_hints(sampled_hints)

    greedy = replace(
        cfg.recitation_params,
        strategy=Strategy.GREEDY,
        k=None,
        temperature=None,
    )
    passage_requests = []
    for hint in unique_hints:
        try:
            passage_requests.append(
                GenerationRequest(passage_template(hint), greedy, 1)
            )
        except PromptError:
            passage_requests.append(None)
    outcomes = ctx.backend.generate_batch(
        [r for r in passage_requests if r is not None], ctx.max_paths_in_flight
    )
    outcome_iter = iter(outcomes)
    passages = []
    for hint, request in zip(unique_hints, passage_requests):
        if request is None:
            continue
        outcome = next(outcome_iter)
        if isinstance(outcome, BackendError):
            continue
        passage = outcome.texts[0].strip()
        if passage:
            passages.append(passage)
    if not passages:
        raise PipelineError(
            question.id,
            f"all {len(unique_hints)} hint expansions failed",
            paths=[_failed_path((), "all hint expansions failed")],
        )

    qa_prompt = build_qa_prompt(
        PromptSpec(
            scheme=Scheme.DIVERSIFIED_RECITE,
            exemplars=tuple(exemplars),
            target_question=question.question,
            target_recitations=tuple(passages),
            dialect=ctx.dialect,
        )
    )
    try:
        result = ctx.backend.generate(GenerationRequest(qa_prompt, cfg.answer_params, 1))
    except BackendError as exc:
        raise PipelineError(
            question.id, str(exc), paths=[_failed_path(tuple(passages), exc)]
        ) from exc
    path = _ok_path(
        tuple(passages), result.texts[0], dict(result.meta), cfg.scheme, cfg.cot_anchor
    )
    meta = dict(path.backend_meta)
    meta["n_hints_sampled"] = str(len(sampled_hints))
    meta["n_unique_hints"] = str(len(unique_hints))
    meta["n_passages"] = str(len(passages))
    if hint_corpus is not None:
        meta["n_known_hints"] = str(sum(1 for h in unique_hints if h in hint_corpus))
    path = replace(path, backend_meta=meta)
    return _finish(question, cfg, [path], ctx.fingerprint, ctx.profile, started, ctx.clock)


# ---------------------------------------------------------------------------
# Dataset runs


def load_run_records(path: str | Path) -> dict[str, RunRecord]:
    """Read a records file keeping the last record per question id; trailing
    partial lines (from an interrupted run) are skipped with a warning."""
    path = Path(path)
    records: dict[str, RunRecord] = {}
    if not path.exists():
        return records
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            record = deserialize(line)
        except ValueError as exc:
            logger.warning("skipping unreadable record at %s:%d: %s", path, lineno, exc)
            continue
        if isinstance(record, RunRecord):
            records[record.question_id] = record
    return records


def run_dataset(
    records: Sequence[QuestionRecord],
    cfg: SchemeConfig,
    exemplars: Sequence[Exemplar],
    backend: Backend,
    *,
    hint_exemplars: Sequence = (),
    hint_corpus=None,
    dialect: PromptDialect = DEFAULT_DIALECT,
    profile: NormProfile = DEFAULT_PROFILE,
    resume: bool = False,
    run_dir: str | Path | None = None,
    limit: int | None = None,
    max_questions_in_flight: int = 1,
    max_paths_in_flight: int = 4,
    clock: Callable[[], float] = time.monotonic,
) -> Iterator[RunRecord]:
    """Answer every question (optionally only the first `limit`) with
    bounded concurrency, emitting records in input order.

    With resume, questions whose stored record carries the current config
    fingerprint are skipped and their stored records re-emitted. Per-question
    failures become failed RunRecords and the run continues.
    """
    issues = cfg.validate()
    if issues:
        raise ValueError(f"invalid scheme config: {'; '.join(issues)}")
    exemplars = tuple(exemplars)
    fingerprint = config_fingerprint(
        cfg, exemplars, dialect, tuple(tuple(t) for t in hint_exemplars)
    )
    if limit is not None:
        records = records[:limit]
    existing: dict[str, RunRecord] = {}
    records_path = None
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        records_path = run_dir / "records.jsonl"
        if resume:
            existing = load_run_records(records_path)
        else:
            records_path.write_text("", encoding="utf-8")

    ctx = _Ctx(
        backend=backend,
        dialect=dialect,
        profile=profile,
        max_paths_in_flight=max_paths_in_flight,
        fingerprint=fingerprint,
        clock=clock,
    )

    def process(question: QuestionRecord) -> tuple[RunRecord, bool]:
        cached = existing.get(question.id)
        if cached is not None and cached.config_fingerprint == fingerprint:
            return cached, False
        started = ctx.clock()
        try:
            if cfg.scheme is Scheme.DIRECT:
                return _answer_direct(question, cfg, exemplars, ctx), True
            if cfg.scheme is Scheme.RECITE_ANSWER:
                return _recite_and_answer(question, cfg, exemplars, ctx), True
            if cfg.scheme is Scheme.MULTI_HOP_RECITE:
                return _recite_and_answer_multihop(question, cfg, exemplars, ctx), True
            if cfg.scheme is Scheme.CHAIN_OF_THOUGHT:
                return _answer_chain_of_thought(question, cfg, exemplars, ctx), True
            return (
                diversified_recite_and_answer(
                    question,
                    cfg,
                    exemplars,
                    hint_exemplars,
                    backend,
                    hint_corpus=hint_corpus,
                    dialect=dialect,
                    profile=profile,
                    fingerprint=fingerprint,
                    max_paths_in_flight=max_paths_in_flight,
                    clock=clock,
                ),
                True,
            )
        except (PipelineError, BackendError, PromptError) as exc:
            logger.warning("question %s failed: %s", question.id, exc)
            paths = getattr(exc, "paths", ()) or (_failed_path((), exc),)
            failed = RunRecord(
                question_id=question.id,
                scheme=cfg.scheme,
                paths=tuple(paths),
                voted_answer="",
                config_fingerprint=fingerprint,
                wall_clock_ms=int((ctx.clock() - started) * 1000),
            )
            return failed, True

    handle = records_path.open("a", encoding="utf-8") if records_path else None
    try:
        with ThreadPoolExecutor(max_workers=max_questions_in_flight) as pool:
            try:
                for record, fresh in pool.map(process, records):
                    if handle and fresh:
                        handle.write(serialize(record) + "\n")
                        handle.flush()
                    yield record
            except KeyboardInterrupt:
                # Clean drain: running questions finish, queued ones are
                # dropped; already-written records stay on disk for resume.
                pool.shutdown(wait=True, cancel_futures=True)
                raise
    finally:
        if handle:
            handle.close()
