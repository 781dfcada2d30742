"""Passage-hint corpus construction and synthetic question generation.

A hint is the canonical identifier of a corpus paragraph: the page title,
the section-title path, and the 1-based in-section paragraph number, joined
by " --- ", e.g.

    Child support --- Compliance and enforcement issues --- Enforcement --- Paragraph #2

Corpora ingest a pre-flattened structured dump (one JSON record per line:
page / section / text), with an adapter for plain-text dumps that mark
headings with ``= Title =`` / ``== Section ==`` lines. Paragraph text is
whitespace-normalized, so passages never contain prompt separators.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .backend import Backend, BackendError, GenerationRequest
from .core import SamplingParams, Strategy, canonical_json
from .prompting import build_question_generation_prompt

__all__ = [
    "HINT_DELIMITER",
    "HintError",
    "HintedPassage",
    "SyntheticTriple",
    "Document",
    "Corpus",
    "make_hint",
    "parse_hint",
    "build_corpus",
    "read_dump",
    "read_heading_dump",
    "generate_synthetic_triples",
    "export_triples",
    "load_triples",
]

HINT_DELIMITER = " --- "
_PARAGRAPH_PREFIX = "Paragraph #"


class HintError(ValueError):
    pass


class CorpusError(ValueError):
    pass


def make_hint(page_title: str, section_path: Sequence[str], para_index: int) -> str:
    """Join title, section path, and "Paragraph #<index>" with the canonical
    delimiter; components containing the delimiter are rejected."""
    if not page_title:
        raise HintError("page title must be nonempty")
    if para_index < 1:
        raise HintError(f"paragraph index must be >= 1, got {para_index}")
    components = [page_title, *section_path]
    for component in components:
        if not component:
            raise HintError("hint components must be nonempty")
        if HINT_DELIMITER in component:
            raise HintError(
                f"hint component contains the delimiter {HINT_DELIMITER!r}: {component!r}"
            )
    components.append(f"{_PARAGRAPH_PREFIX}{para_index}")
    return HINT_DELIMITER.join(components)


def parse_hint(hint: str) -> tuple[str, tuple[str, ...], int]:
    """Inverse of make_hint; raises HintError naming the offending position
    on grammar violations."""
    components = hint.split(HINT_DELIMITER)
    if len(components) < 2:
        raise HintError(
            f"hint must have at least a title and a paragraph component "
            f"(position 0): {hint!r}"
        )
    offset = 0
    for component in components[:-1]:
        if not component or component != component.strip():
            raise HintError(f"malformed hint component at position {offset}: {component!r}")
        offset += len(component) + len(HINT_DELIMITER)
    tail = components[-1]
    if not tail.startswith(_PARAGRAPH_PREFIX):
        raise HintError(
            f"hint must end with {_PARAGRAPH_PREFIX!r}<index> (position {offset}): {tail!r}"
        )
    digits = tail[len(_PARAGRAPH_PREFIX):]
    if not digits.isdigit() or int(digits) < 1:
        raise HintError(
            f"paragraph index must be a positive integer "
            f"(position {offset + len(_PARAGRAPH_PREFIX)}): {digits!r}"
        )
    return components[0], tuple(components[1:-1]), int(digits)


@dataclass(frozen=True)
class HintedPassage:
    """A corpus paragraph with its canonical hint."""

    page_title: str
    section_path: tuple[str, ...]
    para_index: int
    text: str
    hint: str

    def __post_init__(self):
        object.__setattr__(self, "section_path", tuple(self.section_path))


@dataclass(frozen=True)
class SyntheticTriple:
    """A generated question paired with the hint and passage it came from."""

    question: str
    hint: str
    passage: str


@dataclass(frozen=True)
class Document:
    """One structured page: title plus ordered (section path, paragraph)
    pairs; lead paragraphs carry an empty section path."""

    title: str
    items: tuple[tuple[tuple[str, ...], str], ...]


class Corpus:
    """Immutable store of hinted passages with id lookup, hint lookup, and
    seeded uniform sampling."""

    def __init__(self, passages: Sequence[HintedPassage]):
        self._passages = tuple(passages)
        self._by_hint: dict[str, HintedPassage] = {}
        for passage in self._passages:
            expected = make_hint(passage.page_title, passage.section_path, passage.para_index)
            if passage.hint != expected:
                raise CorpusError(
                    f"passage hint {passage.hint!r} does not match its components "
                    f"(expected {expected!r})"
                )
            if passage.hint in self._by_hint:
                raise CorpusError(f"duplicate passage hint: {passage.hint!r}")
            self._by_hint[passage.hint] = passage

    def __len__(self) -> int:
        return len(self._passages)

    def __iter__(self) -> Iterator[HintedPassage]:
        return iter(self._passages)

    def __getitem__(self, index: int) -> HintedPassage:
        return self._passages[index]

    def lookup(self, hint: str) -> HintedPassage | None:
        return self._by_hint.get(hint)

    def __contains__(self, hint: str) -> bool:
        return hint in self._by_hint

    def sample(self, n: int, seed: int) -> list[HintedPassage]:
        """Uniform sample without replacement; deterministic per seed."""
        if n > len(self._passages):
            raise CorpusError(f"cannot sample {n} of {len(self._passages)} passages")
        return random.Random(seed).sample(list(self._passages), n)

    # -- persistence --------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        """Write passages.jsonl plus a hint -> byte-offset index file."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        passages_path = directory / "passages.jsonl"
        index_path = directory / "hints.idx.jsonl"
        offsets: list[tuple[str, int]] = []
        with passages_path.open("w", encoding="utf-8") as handle:
            for passage in self._passages:
                offsets.append((passage.hint, handle.tell()))
                handle.write(_passage_to_line(passage) + "\n")
        with index_path.open("w", encoding="utf-8") as handle:
            for hint, offset in offsets:
                handle.write(canonical_json({"hint": hint, "offset": offset}) + "\n")

    @classmethod
    def load(cls, directory: str | Path) -> "Corpus":
        directory = Path(directory)
        passages_path = directory / "passages.jsonl"
        index_path = directory / "hints.idx.jsonl"
        if not passages_path.is_file():
            raise CorpusError(f"{passages_path} does not exist")
        passages = []
        offsets: dict[str, int] = {}
        with passages_path.open("r", encoding="utf-8") as handle:
            while True:
                offset = handle.tell()
                line = handle.readline()
                if not line:
                    break
                if not line.strip():
                    continue
                passage = _passage_from_line(line)
                passages.append(passage)
                offsets[passage.hint] = offset
        if index_path.is_file():
            for line in index_path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                row = json.loads(line)
                if offsets.get(row["hint"]) != row["offset"]:
                    raise CorpusError(
                        f"index offset mismatch for hint {row['hint']!r}"
                    )
        return cls(passages)


def _passage_to_line(passage: HintedPassage) -> str:
    return canonical_json(
        {
            "kind": "passage",
            "page_title": passage.page_title,
            "section_path": list(passage.section_path),
            "para_index": passage.para_index,
            "text": passage.text,
            "hint": passage.hint,
        }
    )


def _passage_from_line(line: str) -> HintedPassage:
    obj = json.loads(line)
    return HintedPassage(
        page_title=obj["page_title"],
        section_path=tuple(obj["section_path"]),
        para_index=obj["para_index"],
        text=obj["text"],
        hint=obj["hint"],
    )


def _normalize_paragraph(text: str) -> str:
    return " ".join(text.split())


def build_corpus(docs: Iterable[Document]) -> Corpus:
    """One HintedPassage per paragraph; in-section paragraph numbers start
    at 1 and duplicate (title, path, index) triples are a hard error."""
    passages = []
    for doc in docs:
        counters: dict[tuple[str, ...], int] = {}
        for section_path, text in doc.items:
            normalized = _normalize_paragraph(text)
            if not normalized:
                continue
            path = tuple(section_path)
            counters[path] = counters.get(path, 0) + 1
            index = counters[path]
            passages.append(
                HintedPassage(
                    page_title=doc.title,
                    section_path=path,
                    para_index=index,
                    text=normalized,
                    hint=make_hint(doc.title, path, index),
                )
            )
    return Corpus(passages)


def read_dump(path: str | Path) -> Iterator[Document]:
    """Native dump format: one JSON record per line, {"page": title} starts
    a page, {"section": [titles...]} switches the section path, and
    {"text": paragraph} appends a paragraph (split on blank lines)."""
    path = Path(path)
    title: str | None = None
    section: tuple[str, ...] = ()
    items: list[tuple[tuple[str, ...], str]] = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None
            if not isinstance(record, dict):
                raise CorpusError(f"{path}:{lineno}: record must be an object")
            if "page" in record:
                if title is not None:
                    yield Document(title=title, items=tuple(items))
                title = record["page"]
                section = ()
                items = []
            elif "section" in record:
                if title is None:
                    raise CorpusError(f"{path}:{lineno}: section record before any page")
                section = tuple(record["section"])
            elif "text" in record:
                if title is None:
                    raise CorpusError(f"{path}:{lineno}: text record before any page")
                for block in record["text"].split("\n\n"):
                    if block.strip():
                        items.append((section, block))
            else:
                raise CorpusError(
                    f"{path}:{lineno}: record needs one of page/section/text"
                )
    if title is not None:
        yield Document(title=title, items=tuple(items))


def _heading_level(line: str) -> tuple[int, str] | None:
    stripped = line.strip()
    if len(stripped) < 3 or not stripped.startswith("=") or not stripped.endswith("="):
        return None
    level = 0
    while level < len(stripped) and stripped[level] == "=":
        level += 1
    if not stripped.endswith("=" * level):
        return None
    inner = stripped[level:-level].strip()
    if not inner:
        return None
    return level, inner


def read_heading_dump(path: str | Path) -> Iterator[Document]:
    """Adapter for plain-text dumps: ``= Title =`` starts a page,
    ``== Section ==`` / ``=== Subsection ===`` set the section path, and
    blank-line-separated blocks are paragraphs."""
    path = Path(path)
    title: str | None = None
    section: list[str] = []
    items: list[tuple[tuple[str, ...], str]] = []
    paragraph: list[str] = []

    def flush_paragraph():
        if paragraph:
            items.append((tuple(section), " ".join(paragraph)))
            paragraph.clear()

    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            heading = _heading_level(line)
            if heading is not None:
                flush_paragraph()
                level, text = heading
                if level == 1:
                    if title is not None:
                        yield Document(title=title, items=tuple(items))
                    title = text
                    section = []
                    items = []
                else:
                    if title is None:
                        raise CorpusError(f"{path}:{lineno}: section heading before any page")
                    depth = level - 2
                    section = section[:depth] + [text]
                continue
            if not line.strip():
                flush_paragraph()
                continue
            if title is None:
                raise CorpusError(f"{path}:{lineno}: text before any page heading")
            paragraph.append(line.strip())
    flush_paragraph()
    if title is not None:
        yield Document(title=title, items=tuple(items))


# ---------------------------------------------------------------------------
# Synthetic question generation

SYNTHETIC_EXEMPLAR_COUNT = 5


def _default_question_params(seed: int) -> SamplingParams:
    return SamplingParams(
        strategy=Strategy.TOP_K,
        k=40,
        temperature=0.7,
        seed=seed,
        max_tokens=64,
        stop_sequences=("\n\n",),
    )


def generate_synthetic_triples(
    corpus: Corpus,
    n: int,
    exemplars: Sequence[tuple[str, str]],
    backend: Backend,
    seed: int,
    params: SamplingParams | None = None,
    max_in_flight: int = 4,
) -> tuple[list[SyntheticTriple], int]:
    """Sample n passages, generate one question per passage, and pair each
    question with the passage's hint and text.

    Returns (triples, dropped) where dropped counts passages whose
    generation failed or came back empty. Requires exactly 5 evidence ->
    question exemplar pairs.
    """
    if len(exemplars) != SYNTHETIC_EXEMPLAR_COUNT:
        raise CorpusError(
            f"synthetic generation requires exactly {SYNTHETIC_EXEMPLAR_COUNT} "
            f"exemplar pairs, got {len(exemplars)}"
        )
    picked = corpus.sample(n, seed)
    base = params if params is not None else _default_question_params(seed)
    requests_list = [
        GenerationRequest(
            prompt=build_question_generation_prompt(passage.text, exemplars),
            params=replace(base, seed=(base.seed + i) % 2**64),
            n_samples=1,
        )
        for i, passage in enumerate(picked)
    ]
    results = backend.generate_batch(requests_list, max_in_flight=max_in_flight)
    triples: list[SyntheticTriple] = []
    dropped = 0
    for passage, result in zip(picked, results):
        if isinstance(result, BackendError):
            dropped += 1
            continue
        question = result.texts[0].split("\n")[0].strip()
        if not question:
            dropped += 1
            continue
        triples.append(
            SyntheticTriple(question=question, hint=passage.hint, passage=passage.text)
        )
    return triples, dropped


def export_triples(triples: Iterable[SyntheticTriple], path: str | Path) -> int:
    path = Path(path)
    n = 0
    with path.open("w", encoding="utf-8") as handle:
        for triple in triples:
            handle.write(
                canonical_json(
                    {
                        "kind": "triple",
                        "question": triple.question,
                        "hint": triple.hint,
                        "passage": triple.passage,
                    }
                )
                + "\n"
            )
            n += 1
    return n


def load_triples(path: str | Path) -> list[SyntheticTriple]:
    path = Path(path)
    triples = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        triples.append(
            SyntheticTriple(
                question=obj["question"], hint=obj["hint"], passage=obj["passage"]
            )
        )
    return triples
