"""Answer normalization, EM/F1 scoring, plurality voting, per-question and
per-path error classification, report aggregation, and the path-count
subsampling analysis."""

from __future__ import annotations

import random
import re
import statistics
import string
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .core import QuestionRecord, RecitationPath, RunRecord

__all__ = [
    "NormProfile",
    "DEFAULT_PROFILE",
    "ErrorCategory",
    "PathQuadrant",
    "EvalReport",
    "CurvePoint",
    "EvalError",
    "normalize",
    "exact_match",
    "token_f1",
    "plurality_vote",
    "classify_question",
    "per_path_quadrant",
    "aggregate_report",
    "path_subsample_curve",
    "format_category_table",
    "format_quadrant_table",
    "report_to_dict",
]

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b", re.IGNORECASE)
_PUNCT = set(string.punctuation)


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class NormProfile:
    """Which normalization steps apply, with optional per-dataset overrides.

    The default profile enables all four steps (the common open-domain QA
    convention); overrides map a dataset tag to a replacement profile.
    """

    lowercase: bool = True
    strip_articles: bool = True
    strip_punct: bool = True
    collapse_whitespace: bool = True
    overrides: Mapping[str, "NormProfile"] = field(default_factory=dict)

    def for_dataset(self, dataset: str) -> "NormProfile":
        return self.overrides.get(dataset, self)


DEFAULT_PROFILE = NormProfile()


class ErrorCategory(Enum):
    """Mutually exclusive per-question outcomes of the error analysis."""

    HITS_AT_MAJORITY = "hits_at_majority"
    HITS_AT_20_PATH = "hits_at_20_path"
    HITS_AT_20_RECIT = "hits_at_20_recit"
    NOT_RECIT = "not_recit"


_CATEGORY_LABELS = {
    ErrorCategory.HITS_AT_MAJORITY: "Hits@Majority",
    ErrorCategory.HITS_AT_20_PATH: "Hits@20-Path",
    ErrorCategory.HITS_AT_20_RECIT: "Hits@20-Recit",
    ErrorCategory.NOT_RECIT: "Not-Recit",
}


class PathQuadrant(Enum):
    """Per-path cross of (recitation contains a gold answer) x (extracted
    answer is correct)."""

    RECIT_HIT_ANSWER_HIT = "recit_hit_answer_hit"
    RECIT_HIT_ANSWER_MISS = "recit_hit_answer_miss"
    RECIT_MISS_ANSWER_HIT = "recit_miss_answer_hit"
    RECIT_MISS_ANSWER_MISS = "recit_miss_answer_miss"


_QUADRANT_LABELS = {
    PathQuadrant.RECIT_HIT_ANSWER_HIT: ("yes", "yes"),
    PathQuadrant.RECIT_HIT_ANSWER_MISS: ("yes", "no"),
    PathQuadrant.RECIT_MISS_ANSWER_HIT: ("no", "yes"),
    PathQuadrant.RECIT_MISS_ANSWER_MISS: ("no", "no"),
}


def normalize(text: str, profile: NormProfile = DEFAULT_PROFILE) -> str:
    """Lowercase, remove punctuation and standalone articles, and collapse
    whitespace, in that order; idempotent."""
    if profile.lowercase:
        text = text.lower()
    if profile.strip_punct:
        text = "".join(ch for ch in text if ch not in _PUNCT)
    if profile.strip_articles:
        text = _ARTICLE_RE.sub(" ", text)
    if profile.collapse_whitespace:
        text = " ".join(text.split())
    return text


def exact_match(
    pred: str, golds: Sequence[str], profile: NormProfile = DEFAULT_PROFILE
) -> bool:
    """True iff the normalized prediction equals any normalized gold alias."""
    if not golds:
        raise EvalError("exact_match requires at least one gold answer")
    norm_pred = normalize(pred, profile)
    return any(norm_pred == normalize(g, profile) for g in golds)


def _f1_single(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(pred_tokens)
    recall = num_same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(
    pred: str, golds: Sequence[str], profile: NormProfile = DEFAULT_PROFILE
) -> float:
    """Token-multiset F1 between normalized prediction and each gold alias;
    returns the max over aliases."""
    if not golds:
        raise EvalError("token_f1 requires at least one gold answer")
    pred_tokens = normalize(pred, profile).split()
    return max(
        _f1_single(pred_tokens, normalize(g, profile).split()) for g in golds
    )


def plurality_vote(
    answers: Sequence[str], profile: NormProfile = DEFAULT_PROFILE
) -> tuple[str, dict[str, int]]:
    """Group answers by normalized form and return the winning group's first
    raw answer plus the per-group counts.

    Ties break to the group whose first occurrence comes earliest in the
    given order, which makes the vote deterministic for any fixed path order.
    """
    if not answers:
        raise EvalError("plurality_vote requires at least one answer")
    counts: dict[str, int] = {}
    first_raw: dict[str, str] = {}
    for answer in answers:
        key = normalize(answer, profile)
        if key not in counts:
            counts[key] = 0
            first_raw[key] = answer
        counts[key] += 1
    # dicts preserve first-occurrence order, so max() lands ties on the
    # earliest group.
    winner_key = max(counts, key=counts.get)
    return first_raw[winner_key], counts


def _gold_in_recitations(
    norm_golds: Sequence[str], path: RecitationPath, profile: NormProfile
) -> bool:
    for recitation in path.recitations:
        norm_recitation = normalize(recitation, profile)
        if any(g and g in norm_recitation for g in norm_golds):
            return True
    return False


def classify_question(
    golds: Sequence[str],
    paths: Sequence[RecitationPath],
    voted: str,
    profile: NormProfile = DEFAULT_PROFILE,
) -> ErrorCategory:
    """Classify one question's outcome.

    HitsAtMajority when the voted answer is correct; else HitsAt20Path when
    any path's extracted answer is correct; else HitsAt20Recit when any gold
    alias occurs (normalized, as a substring) in any recitation; else
    NotRecit. Exactly one category applies.
    """
    if not paths:
        raise EvalError("classify_question requires at least one path")
    norm_golds = [normalize(g, profile) for g in golds]
    if normalize(voted, profile) in norm_golds:
        return ErrorCategory.HITS_AT_MAJORITY
    if any(normalize(p.extracted_answer, profile) in norm_golds for p in paths):
        return ErrorCategory.HITS_AT_20_PATH
    if any(_gold_in_recitations(norm_golds, p, profile) for p in paths):
        return ErrorCategory.HITS_AT_20_RECIT
    return ErrorCategory.NOT_RECIT


def per_path_quadrant(
    golds: Sequence[str],
    path: RecitationPath,
    profile: NormProfile = DEFAULT_PROFILE,
) -> PathQuadrant:
    """Place one path in the recitation-hit x answer-correct quadrant."""
    norm_golds = [normalize(g, profile) for g in golds]
    recit_hit = _gold_in_recitations(norm_golds, path, profile)
    answer_hit = exact_match(path.extracted_answer, golds, profile)
    if recit_hit:
        return (
            PathQuadrant.RECIT_HIT_ANSWER_HIT
            if answer_hit
            else PathQuadrant.RECIT_HIT_ANSWER_MISS
        )
    return (
        PathQuadrant.RECIT_MISS_ANSWER_HIT
        if answer_hit
        else PathQuadrant.RECIT_MISS_ANSWER_MISS
    )


@dataclass(frozen=True)
class EvalReport:
    """Aggregate EM/F1 plus error-category and per-path-quadrant fractions.

    Fractions are computed from integer counts with a single division, so
    each family sums to exactly 1.0. n_paths_per_question is None when the
    records disagree on path count.
    """

    em: float
    f1: float
    category_fractions: Mapping[ErrorCategory, float]
    category_counts: Mapping[ErrorCategory, int]
    quadrant_fractions: Mapping[PathQuadrant, float]
    quadrant_counts: Mapping[PathQuadrant, int]
    n_questions: int
    n_paths_per_question: int | None
    n_failed_questions: int = 0


def aggregate_report(
    run_records: Sequence[RunRecord],
    questions: Iterable[QuestionRecord],
    profile: NormProfile = DEFAULT_PROFILE,
) -> EvalReport:
    """Score a run: EM/F1 means and category fractions over questions,
    quadrant fractions over all paths."""
    by_id = {q.id: q for q in questions}
    if not run_records:
        raise EvalError("aggregate_report requires at least one run record")
    em_hits = 0
    f1_total = 0.0
    category_counts = {c: 0 for c in ErrorCategory}
    quadrant_counts = {q: 0 for q in PathQuadrant}
    n_failed = 0
    path_counts = set()
    for record in run_records:
        question = by_id.get(record.question_id)
        if question is None:
            raise EvalError(f"run record references unknown question {record.question_id!r}")
        prof = profile.for_dataset(question.dataset.value)
        golds = question.gold_answers
        em_hits += int(exact_match(record.voted_answer, golds, prof))
        f1_total += token_f1(record.voted_answer, golds, prof)
        category = classify_question(golds, record.paths, record.voted_answer, prof)
        category_counts[category] += 1
        for path in record.paths:
            quadrant_counts[per_path_quadrant(golds, path, prof)] += 1
        if all(p.failed for p in record.paths):
            n_failed += 1
        path_counts.add(len(record.paths))
    n_questions = len(run_records)
    n_paths = sum(quadrant_counts.values())
    return EvalReport(
        em=em_hits / n_questions,
        f1=f1_total / n_questions,
        category_fractions={c: n / n_questions for c, n in category_counts.items()},
        category_counts=category_counts,
        quadrant_fractions={q: n / n_paths for q, n in quadrant_counts.items()},
        quadrant_counts=quadrant_counts,
        n_questions=n_questions,
        n_paths_per_question=path_counts.pop() if len(path_counts) == 1 else None,
        n_failed_questions=n_failed,
    )


@dataclass(frozen=True)
class CurvePoint:
    path_count: int
    mean_em: float
    std_em: float
    mean_f1: float
    std_f1: float


def path_subsample_curve(
    run_records: Sequence[RunRecord],
    questions: Iterable[QuestionRecord],
    path_counts: Sequence[int],
    trials: int = 5,
    seed: int = 0,
    profile: NormProfile = DEFAULT_PROFILE,
) -> list[CurvePoint]:
    """Re-vote on random path subsets of each size and report the mean and
    sample standard deviation of EM/F1 over the trials.

    Subsets are drawn without replacement per question and kept in canonical
    path order, so the full-size subset reproduces the stored vote exactly.
    """
    by_id = {q.id: q for q in questions}
    if not run_records:
        raise EvalError("path_subsample_curve requires at least one run record")
    stored_k = min(len(r.paths) for r in run_records)
    points = []
    for count in path_counts:
        if count < 1 or count > stored_k:
            raise EvalError(
                f"path_count {count} outside the stored range 1..{stored_k}"
            )
        em_means, f1_means = [], []
        for trial in range(trials):
            rng = random.Random(f"{seed}:{count}:{trial}")
            em_hits = 0
            f1_total = 0.0
            for record in run_records:
                question = by_id.get(record.question_id)
                if question is None:
                    raise EvalError(
                        f"run record references unknown question {record.question_id!r}"
                    )
                prof = profile.for_dataset(question.dataset.value)
                chosen = sorted(rng.sample(range(len(record.paths)), count))
                answers = [
                    record.paths[i].extracted_answer
                    for i in chosen
                    if not record.paths[i].failed
                ]
                if answers:
                    voted, _ = plurality_vote(answers, prof)
                    em_hits += int(exact_match(voted, question.gold_answers, prof))
                    f1_total += token_f1(voted, question.gold_answers, prof)
            em_means.append(em_hits / len(run_records))
            f1_means.append(f1_total / len(run_records))
        points.append(
            CurvePoint(
                path_count=count,
                mean_em=statistics.mean(em_means),
                std_em=statistics.stdev(em_means) if trials > 1 else 0.0,
                mean_f1=statistics.mean(f1_means),
                std_f1=statistics.stdev(f1_means) if trials > 1 else 0.0,
            )
        )
    return points


# ---------------------------------------------------------------------------
# Report rendering


def format_category_table(report: EvalReport) -> str:
    lines = [f"{'category':<16}{'fraction':>10}{'count':>8}"]
    for category in ErrorCategory:
        frac = report.category_fractions[category]
        lines.append(
            f"{_CATEGORY_LABELS[category]:<16}{frac * 100:>9.2f}%"
            f"{report.category_counts[category]:>8}"
        )
    return "\n".join(lines)


def format_quadrant_table(report: EvalReport) -> str:
    lines = [f"{'recit':<7}{'answer':<8}{'fraction':>10}{'count':>8}"]
    for quadrant in PathQuadrant:
        recit, answer = _QUADRANT_LABELS[quadrant]
        frac = report.quadrant_fractions[quadrant]
        lines.append(
            f"{recit:<7}{answer:<8}{frac * 100:>9.2f}%"
            f"{report.quadrant_counts[quadrant]:>8}"
        )
    return "\n".join(lines)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "em": report.em,
        "f1": report.f1,
        "category_fractions": {
            c.value: report.category_fractions[c] for c in ErrorCategory
        },
        "category_counts": {c.value: report.category_counts[c] for c in ErrorCategory},
        "quadrant_fractions": {
            q.value: report.quadrant_fractions[q] for q in PathQuadrant
        },
        "quadrant_counts": {q.value: report.quadrant_counts[q] for q in PathQuadrant},
        "n_questions": report.n_questions,
        "n_paths_per_question": report.n_paths_per_question,
        "n_failed_questions": report.n_failed_questions,
    }
