"""Shared domain types, validation, and line-delimited serialization.

Every record that crosses a module or process boundary is one of the frozen
dataclasses below, persisted as one JSON object per line with sorted keys and
compact separators, so equal records always serialize to identical bytes.
All types are immutable values after construction and safe to share between
threads.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Iterator, Mapping, TextIO

__all__ = [
    "Dataset",
    "Scheme",
    "Strategy",
    "QuestionRecord",
    "Exemplar",
    "SamplingParams",
    "RecitationPath",
    "RunRecord",
    "ParseError",
    "validate",
    "serialize",
    "deserialize",
    "read_records",
    "write_records",
    "canonical_json",
    "stable_hash",
]

MAX_SEED = 2**64 - 1


class Dataset(Enum):
    NQ = "nq"
    TRIVIA_QA = "triviaqa"
    HOTPOT_QA = "hotpotqa"
    CUSTOM = "custom"


class Scheme(Enum):
    DIRECT = "direct"
    RECITE_ANSWER = "recite_answer"
    MULTI_HOP_RECITE = "multi_hop_recite"
    DIVERSIFIED_RECITE = "diversified_recite"
    CHAIN_OF_THOUGHT = "chain_of_thought"


class Strategy(Enum):
    GREEDY = "greedy"
    TOP_K = "top_k"


def _freeze(value):
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


@dataclass(frozen=True)
class QuestionRecord:
    """One QA item: question text, gold answer aliases, optional evidence."""

    id: str
    dataset: Dataset
    question: str
    gold_answers: tuple[str, ...]
    gold_evidence: str | None = None
    hop_count: int = 1

    def __post_init__(self):
        object.__setattr__(self, "gold_answers", _freeze(self.gold_answers))


@dataclass(frozen=True)
class Exemplar:
    """One few-shot demonstration: a question with its recitations, answer,
    and (for the chain-of-thought baseline only) a rationale."""

    question: str
    answer: str
    recitations: tuple[str, ...] = ()
    rationale: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "recitations", _freeze(self.recitations))


@dataclass(frozen=True)
class SamplingParams:
    """Decoding controls forwarded to a generation backend."""

    strategy: Strategy
    seed: int = 0
    max_tokens: int = 256
    k: int | None = None
    temperature: float | None = None
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "stop_sequences", _freeze(self.stop_sequences))


@dataclass(frozen=True)
class RecitationPath:
    """One self-consistency path: its recitations, the raw answer-stage text,
    and the answer extracted from it.

    A path is `failed` when backend_meta carries an "error" entry; failed
    paths are kept for analysis but excluded from voting.
    """

    recitations: tuple[str, ...]
    raw_answer_text: str
    extracted_answer: str
    backend_meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "recitations", _freeze(self.recitations))
        object.__setattr__(self, "backend_meta", dict(self.backend_meta))

    @property
    def failed(self) -> bool:
        return bool(self.backend_meta.get("error"))


@dataclass(frozen=True)
class RunRecord:
    """Per-question result: all paths, the voted answer, and the
    configuration fingerprint that produced them."""

    question_id: str
    scheme: Scheme
    paths: tuple[RecitationPath, ...]
    voted_answer: str
    config_fingerprint: str
    wall_clock_ms: int = 0

    def __post_init__(self):
        object.__setattr__(self, "paths", _freeze(self.paths))


# ---------------------------------------------------------------------------
# Validation


def _validate_question(rec: QuestionRecord) -> list[str]:
    issues = []
    if not rec.id:
        issues.append("id empty")
    if not rec.question:
        issues.append("question empty")
    elif rec.question != rec.question.strip():
        issues.append("question has leading/trailing whitespace")
    if not rec.gold_answers:
        issues.append("gold_answers empty")
    elif any(not a for a in rec.gold_answers):
        issues.append("gold_answers contains an empty string")
    if rec.hop_count < 1:
        issues.append(f"hop_count must be >= 1, got {rec.hop_count}")
    if rec.dataset is Dataset.HOTPOT_QA and rec.hop_count < 2:
        issues.append("hotpotqa records require hop_count >= 2")
    return issues


def _validate_exemplar(rec: Exemplar) -> list[str]:
    issues = []
    if not rec.question:
        issues.append("question empty")
    if rec.recitations and rec.rationale is not None:
        issues.append("exemplar carries both recitations and a rationale")
    if any(not r for r in rec.recitations):
        issues.append("recitations contains an empty string")
    return issues


def _validate_params(rec: SamplingParams) -> list[str]:
    issues = []
    if rec.strategy is Strategy.GREEDY:
        if rec.k is not None:
            issues.append("greedy strategy must not set k")
        if rec.temperature is not None:
            issues.append("greedy strategy must not set temperature")
    else:
        if rec.k is None or rec.k < 1:
            issues.append(f"top_k strategy requires k >= 1, got {rec.k}")
        if rec.temperature is None or rec.temperature <= 0:
            issues.append(
                "top_k strategy requires temperature > 0 (use greedy for 0), "
                f"got {rec.temperature}"
            )
    if rec.max_tokens < 1:
        issues.append(f"max_tokens must be >= 1, got {rec.max_tokens}")
    if not 0 <= rec.seed <= MAX_SEED:
        issues.append("seed must fit in an unsigned 64-bit integer")
    return issues


def _validate_path(rec: RecitationPath, scheme: Scheme, prefix: str) -> list[str]:
    issues = []
    if scheme in (Scheme.DIRECT, Scheme.CHAIN_OF_THOUGHT) and rec.recitations:
        issues.append(f"{prefix}: {scheme.value} paths must have empty recitations")
    if not rec.failed:
        # Local import: the extraction rule lives in pipeline, which imports
        # this module.
        from .pipeline import extract_answer

        rederived = extract_answer(rec.raw_answer_text, scheme)
        if rederived != rec.extracted_answer:
            issues.append(
                f"{prefix}: extracted_answer {rec.extracted_answer!r} is not "
                f"re-derivable from raw_answer_text (rule gives {rederived!r})"
            )
    return issues


def _validate_run(rec: RunRecord) -> list[str]:
    issues = []
    if not rec.question_id:
        issues.append("question_id empty")
    if not rec.paths:
        issues.append("paths empty")
    if not rec.config_fingerprint:
        issues.append("config_fingerprint empty")
    if rec.wall_clock_ms < 0:
        issues.append("wall_clock_ms negative")
    for i, path in enumerate(rec.paths):
        issues.extend(_validate_path(path, rec.scheme, f"paths[{i}]"))
    votable = [p.extracted_answer for p in rec.paths if not p.failed]
    if votable:
        # Re-check against the default normalization profile; local import
        # because evalkit builds on these types.
        from .evalkit import plurality_vote

        winner, _ = plurality_vote(votable)
        if winner != rec.voted_answer:
            issues.append(
                f"voted_answer {rec.voted_answer!r} does not match the "
                f"plurality vote over paths ({winner!r})"
            )
    return issues


def validate(record: Any) -> list[str]:
    """Return every invariant violation for a record; empty means valid.

    Total: never raises on a structurally well-typed record.
    """
    if isinstance(record, QuestionRecord):
        return _validate_question(record)
    if isinstance(record, Exemplar):
        return _validate_exemplar(record)
    if isinstance(record, SamplingParams):
        return _validate_params(record)
    if isinstance(record, RunRecord):
        return _validate_run(record)
    return [f"unsupported record type {type(record).__name__}"]


# ---------------------------------------------------------------------------
# Serialization


class ParseError(ValueError):
    """Raised by deserialize on malformed input; names the offending field
    and, for JSON-level errors, the character offset."""

    def __init__(self, message: str, field_name: str | None = None, offset: int | None = None):
        parts = []
        if field_name is not None:
            parts.append(f"field {field_name!r}")
        if offset is not None:
            parts.append(f"offset {offset}")
        suffix = f" ({', '.join(parts)})" if parts else ""
        super().__init__(message + suffix)
        self.field = field_name
        self.offset = offset


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def stable_hash(obj: Any, length: int = 16) -> str:
    """Platform-stable content hash of a JSON-serializable object."""
    digest = hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()
    return digest[:length]


def _params_to_dict(p: SamplingParams) -> dict:
    return {
        "strategy": p.strategy.value,
        "seed": p.seed,
        "max_tokens": p.max_tokens,
        "k": p.k,
        "temperature": p.temperature,
        "stop_sequences": list(p.stop_sequences),
    }


def _path_to_dict(p: RecitationPath) -> dict:
    return {
        "recitations": list(p.recitations),
        "raw_answer_text": p.raw_answer_text,
        "extracted_answer": p.extracted_answer,
        "backend_meta": dict(p.backend_meta),
    }


def _to_dict(record: Any) -> dict:
    if isinstance(record, QuestionRecord):
        return {
            "kind": "question",
            "id": record.id,
            "dataset": record.dataset.value,
            "question": record.question,
            "gold_answers": list(record.gold_answers),
            "gold_evidence": record.gold_evidence,
            "hop_count": record.hop_count,
        }
    if isinstance(record, Exemplar):
        return {
            "kind": "exemplar",
            "question": record.question,
            "recitations": list(record.recitations),
            "answer": record.answer,
            "rationale": record.rationale,
        }
    if isinstance(record, SamplingParams):
        return {"kind": "sampling_params", **_params_to_dict(record)}
    if isinstance(record, RunRecord):
        return {
            "kind": "run",
            "question_id": record.question_id,
            "scheme": record.scheme.value,
            "paths": [_path_to_dict(p) for p in record.paths],
            "voted_answer": record.voted_answer,
            "config_fingerprint": record.config_fingerprint,
            "wall_clock_ms": record.wall_clock_ms,
        }
    raise TypeError(f"cannot serialize {type(record).__name__}")


def serialize(record: Any) -> str:
    """Serialize a record to one line of UTF-8 text, deterministically."""
    return canonical_json(_to_dict(record))


def _require(obj: Mapping, key: str, types, kind: str):
    if key not in obj:
        raise ParseError(f"{kind} record missing required field", field_name=key)
    value = obj[key]
    if not isinstance(value, types):
        raise ParseError(
            f"{kind} record field has wrong type {type(value).__name__}", field_name=key
        )
    return value


def _optional_str(obj: Mapping, key: str, kind: str) -> str | None:
    value = obj.get(key)
    if value is not None and not isinstance(value, str):
        raise ParseError(f"{kind} record field must be a string or null", field_name=key)
    return value


def _str_list(obj: Mapping, key: str, kind: str) -> tuple[str, ...]:
    value = _require(obj, key, list, kind)
    if not all(isinstance(v, str) for v in value):
        raise ParseError(f"{kind} record field must be a list of strings", field_name=key)
    return tuple(value)


def _enum_value(obj: Mapping, key: str, enum_cls, kind: str):
    raw = _require(obj, key, str, kind)
    try:
        return enum_cls(raw)
    except ValueError:
        raise ParseError(
            f"{kind} record has unknown {enum_cls.__name__} value {raw!r}", field_name=key
        ) from None


def _params_from_dict(obj: Mapping, kind: str = "sampling_params") -> SamplingParams:
    temperature = obj.get("temperature")
    if temperature is not None and not isinstance(temperature, (int, float)):
        raise ParseError(f"{kind} temperature must be a number or null", field_name="temperature")
    k = obj.get("k")
    if k is not None and not isinstance(k, int):
        raise ParseError(f"{kind} k must be an integer or null", field_name="k")
    return SamplingParams(
        strategy=_enum_value(obj, "strategy", Strategy, kind),
        seed=_require(obj, "seed", int, kind),
        max_tokens=_require(obj, "max_tokens", int, kind),
        k=k,
        temperature=float(temperature) if temperature is not None else None,
        stop_sequences=_str_list(obj, "stop_sequences", kind),
    )


def _path_from_dict(obj: Any, field_prefix: str) -> RecitationPath:
    if not isinstance(obj, dict):
        raise ParseError("path entry must be an object", field_name=field_prefix)
    meta = _require(obj, "backend_meta", dict, "path")
    if not all(isinstance(k, str) and isinstance(v, str) for k, v in meta.items()):
        raise ParseError(
            "path backend_meta must map strings to strings",
            field_name=f"{field_prefix}.backend_meta",
        )
    return RecitationPath(
        recitations=_str_list(obj, "recitations", "path"),
        raw_answer_text=_require(obj, "raw_answer_text", str, "path"),
        extracted_answer=_require(obj, "extracted_answer", str, "path"),
        backend_meta=meta,
    )


def _from_dict(obj: Mapping) -> Any:
    kind = _require(obj, "kind", str, "record")
    if kind == "question":
        hop_count = _require(obj, "hop_count", int, kind)
        return QuestionRecord(
            id=_require(obj, "id", str, kind),
            dataset=_enum_value(obj, "dataset", Dataset, kind),
            question=_require(obj, "question", str, kind),
            gold_answers=_str_list(obj, "gold_answers", kind),
            gold_evidence=_optional_str(obj, "gold_evidence", kind),
            hop_count=hop_count,
        )
    if kind == "exemplar":
        return Exemplar(
            question=_require(obj, "question", str, kind),
            recitations=_str_list(obj, "recitations", kind),
            answer=_require(obj, "answer", str, kind),
            rationale=_optional_str(obj, "rationale", kind),
        )
    if kind == "sampling_params":
        return _params_from_dict(obj)
    if kind == "run":
        raw_paths = _require(obj, "paths", list, kind)
        paths = tuple(
            _path_from_dict(p, f"paths[{i}]") for i, p in enumerate(raw_paths)
        )
        return RunRecord(
            question_id=_require(obj, "question_id", str, kind),
            scheme=_enum_value(obj, "scheme", Scheme, kind),
            paths=paths,
            voted_answer=_require(obj, "voted_answer", str, kind),
            config_fingerprint=_require(obj, "config_fingerprint", str, kind),
            wall_clock_ms=_require(obj, "wall_clock_ms", int, kind),
        )
    raise ParseError(f"unknown record kind {kind!r}", field_name="kind")


def deserialize(line: str) -> Any:
    """Parse one serialized line back into its record; inverse of serialize."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", offset=exc.pos) from None
    if not isinstance(obj, dict):
        raise ParseError("record line must hold a JSON object")
    return _from_dict(obj)


def write_records(records: Iterable[Any], handle: TextIO) -> int:
    n = 0
    for record in records:
        handle.write(serialize(record) + "\n")
        n += 1
    return n


def read_records(handle: TextIO) -> Iterator[Any]:
    for line in handle:
        line = line.strip()
        if line:
            yield deserialize(line)
