"""Shared test helpers: canonical exemplars matching the golden prompt files
and helpers for scripting end-to-end recite-and-answer runs."""

from __future__ import annotations

import json
from pathlib import Path

from reciteqa.backend import ScriptedBackend
from reciteqa.core import Dataset, Exemplar, QuestionRecord, Scheme
from reciteqa.pipeline import SchemeConfig
from reciteqa.prompting import DEFAULT_DIALECT, PromptSpec, build_qa_prompt, build_recitation_prompt

GOLDEN_DIR = Path(__file__).parent / "golden"
DATA_DIR = Path(__file__).parent / "data"


def golden(name: str) -> str:
    return (GOLDEN_DIR / name).read_text(encoding="utf-8")


LONDON_EXEMPLAR = Exemplar(
    question="who opened the london bridge in 1973",
    recitations=("Queen Elizabeth II opened the London Bridge on 17 March 1973.",),
    answer="Queen Elizabeth II",
)

EIFFEL_EXEMPLAR = Exemplar(
    question="where is the eiffel tower",
    recitations=(
        "The Eiffel Tower is a wrought-iron lattice tower on the Champ de Mars in Paris, France.",
    ),
    answer="Paris",
)

MULTIHOP_EXEMPLAR = Exemplar(
    question="which company operates the hotel that hosted the 1971 national film awards",
    recitations=(
        "The 1971 National Film Awards ceremony was hosted at the Oberoi Hotel in New Delhi.",
        "The Oberoi Group is a hotel company with its head office in Delhi.",
    ),
    answer="The Oberoi Group",
)

COT_EXEMPLAR = Exemplar(
    question="what is the tenth decimal of pi",
    rationale="The first 10 digits of pi are 3.14159 26535.",
    answer="5",
)

HINT_EXEMPLAR = (
    "how is child support enforced",
    "Child support --- Compliance and enforcement issues --- Enforcement --- Paragraph #2",
    "Child support enforcement measures include wage garnishment and the suspension of licenses.",
)


def make_question(
    qid: str,
    question: str,
    golds: tuple[str, ...],
    evidence: str | None = None,
    dataset: Dataset = Dataset.NQ,
    hop_count: int = 1,
) -> QuestionRecord:
    return QuestionRecord(
        id=qid,
        dataset=dataset,
        question=question,
        gold_answers=golds,
        gold_evidence=evidence,
        hop_count=hop_count,
    )


def script_recite_run(
    backend: ScriptedBackend,
    question: QuestionRecord,
    exemplars,
    cfg: SchemeConfig,
    recitations: list[str],
    answer_for,
    dialect=DEFAULT_DIALECT,
) -> None:
    """Register a full recite-and-answer round for one question: the
    recitation prompt serves `recitations` as its queue, and each per-path
    QA prompt answers with answer_for(recitation)."""
    recitation_prompt = build_recitation_prompt(
        PromptSpec(
            scheme=Scheme.RECITE_ANSWER,
            exemplars=tuple(exemplars),
            target_question=question.question,
            dialect=dialect,
        )
    )
    backend.register(recitation_prompt, recitations)
    for recitation in dict.fromkeys(recitations):
        qa_prompt = build_qa_prompt(
            PromptSpec(
                scheme=Scheme.RECITE_ANSWER,
                exemplars=tuple(exemplars),
                target_question=question.question,
                target_recitations=(recitation.strip(),),
                dialect=dialect,
            )
        )
        backend.register(qa_prompt, [answer_for(recitation)])


def dump_script(backend: ScriptedBackend, path: Path) -> Path:
    """Write a ScriptedBackend's entries as a loadable script file."""
    payload = {"entries": {k: list(q) for k, q in backend._entries.items()}}
    path.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
    return path
