"""Adapters mapping public dataset distribution formats into question
records, so format drift never touches core logic.

Adapters:
  nq        JSONL, one object per line: {"question", "answer": [...],
            optional "id", optional "long_answer"}
  triviaqa  official JSON: {"Data": [{"QuestionId", "Question",
            "Answer": {"Value", "Aliases": [...]}}]}
  hotpotqa  official JSON array: [{"_id", "question", "answer"}], 2 hops
  records   this package's own line-delimited question records
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable

from .core import Dataset, ParseError, QuestionRecord, deserialize, validate

__all__ = ["DataError", "ADAPTERS", "load_questions", "default_shots"]


class DataError(ValueError):
    pass


def _check(record: QuestionRecord, where: str) -> QuestionRecord:
    issues = validate(record)
    if issues:
        raise DataError(f"{where}: invalid question record: {'; '.join(issues)}")
    return record


def read_nq(path: Path) -> list[QuestionRecord]:
    records = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        where = f"{path}:{lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{where}: invalid JSON: {exc.msg}") from None
        if "question" not in obj or "answer" not in obj:
            raise DataError(f"{where}: record needs question and answer fields")
        answers = obj["answer"]
        if isinstance(answers, str):
            answers = [answers]
        records.append(
            _check(
                QuestionRecord(
                    id=str(obj.get("id", f"nq-{lineno}")),
                    dataset=Dataset.NQ,
                    question=str(obj["question"]).strip(),
                    gold_answers=tuple(str(a) for a in answers),
                    gold_evidence=obj.get("long_answer"),
                    hop_count=1,
                ),
                where,
            )
        )
    return records


def read_triviaqa(path: Path) -> list[QuestionRecord]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc.msg}") from None
    items = data.get("Data")
    if not isinstance(items, list):
        raise DataError(f"{path}: expected a top-level Data array")
    records = []
    for i, item in enumerate(items):
        where = f"{path}: Data[{i}]"
        answer = item.get("Answer", {})
        aliases = [answer.get("Value", "")] + list(answer.get("Aliases", []))
        aliases = [a for a in dict.fromkeys(aliases) if a]
        records.append(
            _check(
                QuestionRecord(
                    id=str(item.get("QuestionId", f"tqa-{i}")),
                    dataset=Dataset.TRIVIA_QA,
                    question=str(item.get("Question", "")).strip(),
                    gold_answers=tuple(aliases),
                    gold_evidence=None,
                    hop_count=1,
                ),
                where,
            )
        )
    return records


def read_hotpotqa(path: Path) -> list[QuestionRecord]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc.msg}") from None
    if not isinstance(data, list):
        raise DataError(f"{path}: expected a top-level array")
    records = []
    for i, item in enumerate(data):
        where = f"{path}: [{i}]"
        records.append(
            _check(
                QuestionRecord(
                    id=str(item.get("_id", f"hqa-{i}")),
                    dataset=Dataset.HOTPOT_QA,
                    question=str(item.get("question", "")).strip(),
                    gold_answers=(str(item.get("answer", "")),),
                    gold_evidence=None,
                    hop_count=2,
                ),
                where,
            )
        )
    return records


def read_native_records(path: Path) -> list[QuestionRecord]:
    records = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        where = f"{path}:{lineno}"
        try:
            record = deserialize(line)
        except ParseError as exc:
            raise DataError(f"{where}: {exc}") from None
        if not isinstance(record, QuestionRecord):
            raise DataError(f"{where}: expected a question record")
        records.append(_check(record, where))
    return records


ADAPTERS: dict[str, Callable[[Path], list[QuestionRecord]]] = {
    "nq": read_nq,
    "triviaqa": read_triviaqa,
    "hotpotqa": read_hotpotqa,
    "records": read_native_records,
}


def load_questions(path: str | Path, adapter: str) -> list[QuestionRecord]:
    if adapter not in ADAPTERS:
        raise DataError(f"unknown dataset adapter {adapter!r}; have {sorted(ADAPTERS)}")
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset file {path} does not exist")
    records = ADAPTERS[adapter](path)
    seen = set()
    for record in records:
        if record.id in seen:
            raise DataError(f"duplicate question id {record.id!r} in {path}")
        seen.add(record.id)
    return records


def default_shots(adapter: str) -> int:
    # Multi-hop evaluation conventionally uses 4 shots; single-hop uses 5.
    return 4 if adapter == "hotpotqa" else 5
