"""Brute-force EM/F1 reference scorer, independent of the package.

Kept deliberately primitive: character loops instead of regexes, sorted-list
multiset intersection instead of Counter. Used to freeze the expected values
in tests/data/em_f1_cases.json; run as a script to regenerate that file.
"""

from __future__ import annotations

import json
import string
import sys
from pathlib import Path

ARTICLES = ("a", "an", "the")


def oracle_normalize(text: str) -> str:
    out = []
    for ch in text:
        low = ch.lower()
        if low in string.punctuation:
            continue
        out.append(low)
    words = "".join(out).split()
    kept = [w for w in words if w not in ARTICLES]
    return " ".join(kept)


def oracle_em(pred: str, golds: list[str]) -> bool:
    np = oracle_normalize(pred)
    for g in golds:
        if np == oracle_normalize(g):
            return True
    return False


def _multiset_overlap(a: list[str], b: list[str]) -> int:
    a = sorted(a)
    b = sorted(b)
    i = j = shared = 0
    while i < len(a) and j < len(b):
        if a[i] == b[j]:
            shared += 1
            i += 1
            j += 1
        elif a[i] < b[j]:
            i += 1
        else:
            j += 1
    return shared


def oracle_f1_single(pred: str, gold: str) -> float:
    p_tokens = oracle_normalize(pred).split()
    g_tokens = oracle_normalize(gold).split()
    if not p_tokens and not g_tokens:
        return 1.0
    if not p_tokens or not g_tokens:
        return 0.0
    shared = _multiset_overlap(p_tokens, g_tokens)
    if shared == 0:
        return 0.0
    precision = shared / len(p_tokens)
    recall = shared / len(g_tokens)
    return 2 * precision * recall / (precision + recall)


def oracle_f1(pred: str, golds: list[str]) -> float:
    return max(oracle_f1_single(pred, g) for g in golds)


# 50 hand-constructed (pred, golds) pairs covering aliasing, punctuation,
# articles, casing, unicode, numerics, multisets, and degenerate inputs.
CASES: list[tuple[str, list[str]]] = [
    ("17 March 1973", ["17 march 1973"]),
    ("march 1973", ["17 march 1973"]),
    ("open heart surgery", ["heart surgery"]),
    ("The London Bridge.", ["london bridge"]),
    ("Queen Elizabeth II", ["queen elizabeth ii", "Elizabeth II"]),
    ("Elizabeth the Second", ["Queen Elizabeth II"]),
    ("paris", ["Paris", "Paris, France"]),
    ("Paris, France", ["Paris"]),
    ("a an the", ["the an a"]),
    ("", ["anything"]),
    ("the", [""]),
    ("the", ["a"]),
    ("5", ["5"]),
    ("5.", ["5"]),
    ("five", ["5"]),
    ("3.14159", ["314159"]),
    ("one two three", ["three two one"]),
    ("one one two", ["one two"]),
    ("one two", ["one one two"]),
    ("mother-in-law", ["mother in law"]),
    ("U.S.A.", ["USA"]),
    ("U. S. A.", ["USA"]),
    ("cafe", ["café"]),
    ("café au lait", ["café au lait"]),
    ("naïve approach", ["naive approach"]),
    ("The Great Wall of China", ["Great Wall"]),
    ("wall great", ["Great Wall"]),
    ("New York City", ["New York"]),
    ("York New New", ["New York"]),
    ("he said \"hello\"", ["he said hello"]),
    ("it's", ["its"]),
    ("rock 'n' roll", ["rock n roll"]),
    ("AC/DC", ["ACDC"]),
    ("  spaced   out  ", ["spaced out"]),
    ("tab\tseparated", ["tab separated"]),
    ("Answer: 42", ["42"]),
    ("42", ["42.0"]),
    ("World War II", ["WWII", "World War 2", "Second World War"]),
    ("the second world war", ["WWII", "World War 2", "Second World War"]),
    ("war world second", ["Second World War"]),
    ("Barack Obama", ["Barack Hussein Obama II", "Obama"]),
    ("Obama Barack", ["Barack Obama"]),
    ("1970s", ["the 1970s"]),
    ("nineteen seventies", ["the 1970s"]),
    ("An Apple", ["apple"]),
    ("apple pie", ["apple", "pie"]),
    ("a b c d", ["b c"]),
    ("x y", ["a b c x y"]),
    ("!!!", [""]),
    ("!!!", ["!?"]),
]


def main() -> None:
    rows = []
    for pred, golds in CASES:
        rows.append(
            {
                "pred": pred,
                "golds": golds,
                "em": oracle_em(pred, golds),
                "f1": oracle_f1(pred, golds),
            }
        )
    out = Path(__file__).resolve().parents[1] / "data" / "em_f1_cases.json"
    out.write_text(json.dumps(rows, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"wrote {len(rows)} cases to {out}", file=sys.stderr)


if __name__ == "__main__":
    main()
