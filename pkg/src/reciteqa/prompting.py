"""Byte-exact prompt assembly for every prompting scheme.

Rendering contract (frozen by the golden files under tests/golden/):

* a prompt is a sequence of blocks joined by the dialect's inter-separator
  (default "\\n\\n\\n"), one block per exemplar plus one target block;
* a block is a sequence of components joined by the intra-separator
  (default "\\n\\n");
* components are cue lines: "Question: ...", "Recitation: ...",
  "Recitation <i>: ..." (numbered when a block holds several),
  "Answer: ...", "Hint: ...", "Passage: ...", "Evidence: ...";
* the target block ends with a bare cue ("Recitation:", "Answer:", ...)
  for the model to continue;
* the dialect rewrite is applied last to the fully assembled text.

Component text containing a separator string is rejected outright rather
than escaped, since escaping would change model-visible bytes.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

from .core import Exemplar, Scheme

__all__ = [
    "DialectName",
    "PromptDialect",
    "DEFAULT_DIALECT",
    "UL2_DIALECT",
    "PromptSpec",
    "PromptError",
    "PromptSet",
    "build_recitation_prompt",
    "build_qa_prompt",
    "build_multihop_prompt",
    "build_hint_prompts",
    "build_question_generation_prompt",
    "build_cot_prompt",
    "sample_exemplars",
    "load_prompt_set",
]


class PromptError(ValueError):
    pass


class DialectName(Enum):
    DEFAULT = "default"
    UL2 = "ul2"


@dataclass(frozen=True)
class PromptDialect:
    """Separator conventions plus an optional whole-prompt rewrite for
    models whose vocabulary cannot represent newlines."""

    name: DialectName = DialectName.DEFAULT
    intra_separator: str = "\n\n"
    inter_separator: str = "\n\n\n"
    newline_replacement: str | None = None
    wrapper_prefix: str | None = None
    wrapper_suffix: str | None = None

    def apply(self, text: str) -> str:
        if self.newline_replacement is not None:
            text = text.replace("\n", self.newline_replacement)
        if self.wrapper_prefix:
            text = self.wrapper_prefix + text
        if self.wrapper_suffix:
            text = text + self.wrapper_suffix
        return text


DEFAULT_DIALECT = PromptDialect()
UL2_DIALECT = PromptDialect(
    name=DialectName.UL2,
    newline_replacement=" ; ",
    wrapper_prefix="[NLG]",
    wrapper_suffix="[extra_id_0]",
)


@dataclass(frozen=True)
class PromptSpec:
    """Everything a prompt builder needs: scheme, exemplars, the target
    question, and (for answer prompts) the recitations to condition on."""

    scheme: Scheme
    exemplars: tuple[Exemplar, ...]
    target_question: str
    target_recitations: tuple[str, ...] | None = None
    recitations_per_hop: int = 1
    dialect: PromptDialect = DEFAULT_DIALECT

    def __post_init__(self):
        object.__setattr__(self, "exemplars", tuple(self.exemplars))
        if self.target_recitations is not None:
            object.__setattr__(
                self, "target_recitations", tuple(self.target_recitations)
            )


def _check_component(text: str, dialect: PromptDialect, what: str) -> str:
    if text != text.strip():
        raise PromptError(f"{what} has leading or trailing whitespace: {text!r}")
    for sep, label in (
        (dialect.inter_separator, "inter"),
        (dialect.intra_separator, "intra"),
    ):
        if sep and sep in text:
            raise PromptError(f"{what} contains the {label}-separator {sep!r}")
    return text


def _block(components: Sequence[str], dialect: PromptDialect) -> str:
    return dialect.intra_separator.join(components)


def _assemble(blocks: Sequence[str], dialect: PromptDialect) -> str:
    return dialect.apply(dialect.inter_separator.join(blocks))


def _recitation_cues(recitations: Sequence[str], dialect: PromptDialect, what: str) -> list[str]:
    # A single recitation keeps the bare cue; several get numbered cues.
    if len(recitations) == 1:
        return [f"Recitation: {_check_component(recitations[0], dialect, what)}"]
    return [
        f"Recitation {i}: {_check_component(r, dialect, f'{what}[{i - 1}]')}"
        for i, r in enumerate(recitations, 1)
    ]


def build_recitation_prompt(spec: PromptSpec) -> str:
    """Question/Recitation exemplar blocks followed by the target question
    and a trailing "Recitation:" cue."""
    if spec.scheme is not Scheme.RECITE_ANSWER:
        raise PromptError(
            f"recitation prompts require the recite_answer scheme, got {spec.scheme.value}"
        )
    if not spec.exemplars:
        raise PromptError("recitation prompts require at least one exemplar")
    blocks = []
    for i, ex in enumerate(spec.exemplars):
        if not ex.recitations:
            raise PromptError(f"exemplar {i} has no recitations")
        components = [
            f"Question: {_check_component(ex.question, spec.dialect, f'exemplar {i} question')}"
        ]
        components.extend(
            _recitation_cues(ex.recitations, spec.dialect, f"exemplar {i} recitation")
        )
        blocks.append(_block(components, spec.dialect))
    target = _block(
        [
            f"Question: {_check_component(spec.target_question, spec.dialect, 'target question')}",
            "Recitation:",
        ],
        spec.dialect,
    )
    blocks.append(target)
    return _assemble(blocks, spec.dialect)


def build_qa_prompt(spec: PromptSpec) -> str:
    """Recitation(s)/Question/Answer exemplar blocks; the target block puts
    the target recitations before the target question and ends with the
    "Answer:" cue.

    With the direct scheme (no recitations anywhere) this degenerates to
    plain Question/Answer blocks.
    """
    if not spec.exemplars:
        raise PromptError("answer prompts require at least one exemplar")
    direct = spec.scheme is Scheme.DIRECT
    if not direct and not spec.target_recitations:
        raise PromptError("answer prompts require target recitations")
    if direct and spec.target_recitations:
        raise PromptError("direct prompts must not carry target recitations")
    blocks = []
    for i, ex in enumerate(spec.exemplars):
        if direct and ex.recitations:
            raise PromptError(f"exemplar {i} has recitations under the direct scheme")
        components = []
        if ex.recitations:
            components.extend(
                _recitation_cues(ex.recitations, spec.dialect, f"exemplar {i} recitation")
            )
        components.append(
            f"Question: {_check_component(ex.question, spec.dialect, f'exemplar {i} question')}"
        )
        components.append(
            f"Answer: {_check_component(ex.answer, spec.dialect, f'exemplar {i} answer')}"
        )
        blocks.append(_block(components, spec.dialect))
    target_components = []
    if spec.target_recitations:
        target_components.extend(
            _recitation_cues(spec.target_recitations, spec.dialect, "target recitation")
        )
    target_components.append(
        f"Question: {_check_component(spec.target_question, spec.dialect, 'target question')}"
    )
    target_components.append("Answer:")
    blocks.append(_block(target_components, spec.dialect))
    return _assemble(blocks, spec.dialect)


def build_multihop_prompt(spec: PromptSpec) -> str:
    """Numbered-recitation exemplar blocks; the target block ends at
    "Recitation 1:" so the model decodes all recitations in one pass."""
    if spec.scheme is not Scheme.MULTI_HOP_RECITE:
        raise PromptError(
            f"multihop prompts require the multi_hop_recite scheme, got {spec.scheme.value}"
        )
    if spec.recitations_per_hop < 2:
        raise PromptError(
            f"multihop prompts require recitations_per_hop >= 2, got {spec.recitations_per_hop}"
        )
    if not spec.exemplars:
        raise PromptError("multihop prompts require at least one exemplar")
    blocks = []
    for i, ex in enumerate(spec.exemplars):
        if len(ex.recitations) != spec.recitations_per_hop:
            raise PromptError(
                f"exemplar {i} has {len(ex.recitations)} recitations, "
                f"expected {spec.recitations_per_hop}"
            )
        components = [
            f"Question: {_check_component(ex.question, spec.dialect, f'exemplar {i} question')}"
        ]
        components.extend(
            f"Recitation {j}: {_check_component(r, spec.dialect, f'exemplar {i} recitation[{j - 1}]')}"
            for j, r in enumerate(ex.recitations, 1)
        )
        blocks.append(_block(components, spec.dialect))
    target = _block(
        [
            f"Question: {_check_component(spec.target_question, spec.dialect, 'target question')}",
            "Recitation 1:",
        ],
        spec.dialect,
    )
    blocks.append(target)
    return _assemble(blocks, spec.dialect)


def _triple_parts(exemplar) -> tuple[str, str, str]:
    if hasattr(exemplar, "question") and hasattr(exemplar, "hint"):
        return exemplar.question, exemplar.hint, exemplar.passage
    question, hint, passage = exemplar
    return question, hint, passage


def build_hint_prompts(
    question: str,
    exemplars: Sequence,
    dialect: PromptDialect = DEFAULT_DIALECT,
) -> tuple[str, Callable[[str], str]]:
    """Build the hint-elicitation prompt for a question plus a template that
    expands a hint into its passage.

    Exemplars are (question, hint, passage) triples; their hints must parse
    under the canonical hint grammar.
    """
    if not exemplars:
        raise PromptError("hint prompts require at least one exemplar")
    # Local import: hintcorpus owns the hint grammar and itself builds on
    # this module for question generation.
    from .hintcorpus import HintError, parse_hint

    triples = [_triple_parts(e) for e in exemplars]
    for i, (_, hint, _) in enumerate(triples):
        try:
            parse_hint(hint)
        except HintError as exc:
            raise PromptError(f"exemplar {i} hint is not canonical: {exc}") from None

    hint_blocks = []
    passage_blocks = []
    for i, (ex_question, hint, passage) in enumerate(triples):
        q = _check_component(ex_question, dialect, f"exemplar {i} question")
        h = _check_component(hint, dialect, f"exemplar {i} hint")
        p = _check_component(passage, dialect, f"exemplar {i} passage")
        hint_blocks.append(_block([f"Question: {q}", f"Hint: {h}"], dialect))
        passage_blocks.append(_block([f"Hint: {h}", f"Passage: {p}"], dialect))

    target = _check_component(question, dialect, "target question")
    hint_prompt = _assemble(
        hint_blocks + [_block([f"Question: {target}", "Hint:"], dialect)], dialect
    )

    def passage_prompt_template(hint: str) -> str:
        h = _check_component(hint, dialect, "target hint")
        return _assemble(
            passage_blocks + [_block([f"Hint: {h}", "Passage:"], dialect)], dialect
        )

    return hint_prompt, passage_prompt_template


def build_question_generation_prompt(
    passage: str,
    exemplars: Sequence[tuple[str, str]],
    dialect: PromptDialect = DEFAULT_DIALECT,
) -> str:
    """Evidence/Question exemplar blocks followed by the target passage and
    a bare "Question:" cue; used to synthesize questions for passages."""
    if not passage:
        raise PromptError("question generation requires a nonempty passage")
    if not exemplars:
        raise PromptError("question generation requires at least one exemplar")
    blocks = []
    for i, (evidence, question) in enumerate(exemplars):
        e = _check_component(evidence, dialect, f"exemplar {i} evidence")
        q = _check_component(question, dialect, f"exemplar {i} question")
        blocks.append(_block([f"Evidence: {e}", f"Question: {q}"], dialect))
    target = _check_component(passage, dialect, "target passage")
    blocks.append(_block([f"Evidence: {target}", "Question:"], dialect))
    return _assemble(blocks, dialect)


COT_ANSWER_ANCHOR = "So the answer is"


def build_cot_prompt(spec: PromptSpec, anchor: str = COT_ANSWER_ANCHOR) -> str:
    """Question/Answer blocks where each exemplar answer is its rationale
    followed by "<anchor> <answer>."."""
    if spec.scheme is not Scheme.CHAIN_OF_THOUGHT:
        raise PromptError(
            f"chain-of-thought prompts require the chain_of_thought scheme, got {spec.scheme.value}"
        )
    if not spec.exemplars:
        raise PromptError("chain-of-thought prompts require at least one exemplar")
    blocks = []
    for i, ex in enumerate(spec.exemplars):
        if ex.rationale is None:
            raise PromptError(f"exemplar {i} has no rationale")
        q = _check_component(ex.question, spec.dialect, f"exemplar {i} question")
        rationale = _check_component(ex.rationale, spec.dialect, f"exemplar {i} rationale")
        answer = _check_component(ex.answer, spec.dialect, f"exemplar {i} answer")
        blocks.append(
            _block([f"Question: {q}", f"Answer: {rationale} {anchor} {answer}."], spec.dialect)
        )
    target = _block(
        [
            f"Question: {_check_component(spec.target_question, spec.dialect, 'target question')}",
            "Answer:",
        ],
        spec.dialect,
    )
    blocks.append(target)
    return _assemble(blocks, spec.dialect)


def sample_exemplars(pool: Sequence[Exemplar], n: int, seed: int) -> list[Exemplar]:
    """Uniform sample of n exemplars without replacement, uniformly
    shuffled; deterministic for a given seed."""
    if n < 1:
        raise PromptError(f"sample size must be >= 1, got {n}")
    if n > len(pool):
        raise PromptError(f"pool of {len(pool)} exemplars cannot supply {n}")
    rng = random.Random(seed)
    picked = rng.sample(list(pool), n)
    rng.shuffle(picked)
    return picked


# ---------------------------------------------------------------------------
# Prompt-set loading


@dataclass(frozen=True)
class PromptSet:
    """Exemplar pools loaded from a prompt-set directory."""

    exemplars: tuple[Exemplar, ...] = ()
    hint_exemplars: tuple[tuple[str, str, str], ...] = ()
    question_gen: tuple[tuple[str, str], ...] = ()
    cot_anchor: str = COT_ANSWER_ANCHOR


def _resolve_text(value, directory: Path, what: str) -> str:
    """Manifest values are inline strings or {"file": <relative path>}."""
    if isinstance(value, str):
        return value
    if isinstance(value, dict) and isinstance(value.get("file"), str):
        target = directory / value["file"]
        if not target.is_file():
            raise PromptError(f"{what}: referenced file {target} does not exist")
        return target.read_text(encoding="utf-8").strip()
    raise PromptError(f"{what}: expected a string or a file reference, got {value!r}")


def load_prompt_set(directory: str | Path) -> PromptSet:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise PromptError(f"prompt set {directory} has no manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PromptError(f"{manifest_path}: invalid JSON: {exc}") from None

    exemplars = []
    for i, entry in enumerate(manifest.get("exemplars", [])):
        what = f"exemplars[{i}]"
        rationale = entry.get("rationale")
        exemplars.append(
            Exemplar(
                question=_resolve_text(entry["question"], directory, what),
                answer=_resolve_text(entry["answer"], directory, what),
                recitations=tuple(
                    _resolve_text(r, directory, what) for r in entry.get("recitations", [])
                ),
                rationale=(
                    _resolve_text(rationale, directory, what)
                    if rationale is not None
                    else None
                ),
            )
        )
    hint_exemplars = []
    for i, entry in enumerate(manifest.get("hint_exemplars", [])):
        what = f"hint_exemplars[{i}]"
        hint_exemplars.append(
            (
                _resolve_text(entry["question"], directory, what),
                _resolve_text(entry["hint"], directory, what),
                _resolve_text(entry["passage"], directory, what),
            )
        )
    question_gen = []
    for i, entry in enumerate(manifest.get("question_gen", [])):
        what = f"question_gen[{i}]"
        question_gen.append(
            (
                _resolve_text(entry["evidence"], directory, what),
                _resolve_text(entry["question"], directory, what),
            )
        )
    return PromptSet(
        exemplars=tuple(exemplars),
        hint_exemplars=tuple(hint_exemplars),
        question_gen=tuple(question_gen),
        cot_anchor=manifest.get("cot_anchor", COT_ANSWER_ANCHOR),
    )
