"""Revision taxonomy, dataset statistics and human-rating sheets."""
from __future__ import annotations

import csv
import io
import logging
import random
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Dataset
from .metrics import normalize_answer

logger = logging.getLogger(__name__)


class RevisionType(str, Enum):
    PRESERVATION = "Preservation"
    REDUCTION = "Reduction"
    EXPANSION = "Expansion"
    MULTIPLE_REVISION = "MultipleRevision"
    COMPLETE_CHANGE = "CompleteChange"


class Connectivity(str, Enum):
    DEPENDENT = "Dependent"
    INDEPENDENT = "Independent"
    UNNATURAL = "Unnatural"


class Correctness(str, Enum):
    CORRECT = "Correct"
    PARTIALLY_CORRECT = "PartiallyCorrect"
    INCORRECT = "Incorrect"


CRITERIA = {
    Connectivity.DEPENDENT: "The current question refers to previous turns (pronouns, ellipsis).",
    Connectivity.INDEPENDENT: "The current question does not depend on previous turns.",
    Connectivity.UNNATURAL: "The current question is ungrammatical or repeats previous turns.",
    Correctness.CORRECT: "The answer is correct for the question.",
    Correctness.PARTIALLY_CORRECT: "The answer is incomplete or contains unnecessary information.",
    Correctness.INCORRECT: "The answer does not answer the question.",
}


def _is_infix(needle: list[str], hay: list[str]) -> bool:
    n = len(needle)
    return any(hay[i:i + n] == needle for i in range(len(hay) - n + 1))


def classify_revision(span_text: str, revised: str) -> RevisionType:
    """Relation between an extracted span and its revision, on normalized tokens."""
    s = normalize_answer(span_text)
    r = normalize_answer(revised)
    if s == r:
        return RevisionType.PRESERVATION
    if _is_infix(r, s):
        return RevisionType.REDUCTION
    if _is_infix(s, r):
        return RevisionType.EXPANSION
    if set(s) & set(r):
        return RevisionType.MULTIPLE_REVISION
    return RevisionType.COMPLETE_CHANGE


def revision_distribution(conversations: Iterable) -> dict[str, float]:
    """Fraction of turns per revision type; empty input gives an empty dict."""
    counts = Counter(
        classify_revision(t.span_text, t.answer).value for conv in conversations for t in conv.turns
    )
    total = sum(counts.values())
    if not total:
        return {}
    return {rt.value: counts.get(rt.value, 0) / total for rt in RevisionType}


@dataclass(frozen=True)
class DatasetStatistics:
    words_per_question: float
    words_per_answer: float
    turns_per_passage: float
    passages: int
    turns: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def dataset_statistics(ds: Dataset | Sequence) -> DatasetStatistics:
    """Whitespace word counts averaged over turns, turns averaged over conversations.

    Accepts a :class:`Dataset` or a list of synthetic conversations.
    """
    convs = ds.conversations if isinstance(ds, Dataset) else list(ds)
    q_words = a_words = turns = 0
    for conv in convs:
        for t in conv.turns:
            q_words += len(t.question.split())
            a_words += len(t.answer.split())
            turns += 1
    n_conv = sum(1 for c in convs if c.turns)
    return DatasetStatistics(
        words_per_question=q_words / turns if turns else 0.0,
        words_per_answer=a_words / turns if turns else 0.0,
        turns_per_passage=turns / n_conv if n_conv else 0.0,
        passages=n_conv,
        turns=turns,
    )


# ---------------------------------------------------------------------------
# rating sheets

SHEET_HEADER = ["example_id", "passage_id", "turn", "question", "answer", "connectivity", "correctness", "rater"]


def sample_for_rating(conversations: Sequence, sample_per_domain: int, seed: int = 0) -> list[dict]:
    """Stratified sample of turns, ``sample_per_domain`` from each domain."""
    by_domain: dict[str, list] = defaultdict(list)
    for conv in conversations:
        for i, t in enumerate(conv.turns, start=1):
            by_domain[conv.domain or "unknown"].append((conv.passage_id, i, t))
    rng = random.Random(seed)
    rows = []
    for domain in sorted(by_domain):
        pool = by_domain[domain]
        if len(pool) < sample_per_domain:
            logger.warning("domain %r has only %d turns; taking all", domain, len(pool))
            picked = list(pool)
        else:
            picked = rng.sample(pool, sample_per_domain)
        for pid, turn, t in picked:
            rows.append(
                {
                    "example_id": f"{domain}-{len(rows):04d}",
                    "passage_id": pid,
                    "turn": turn,
                    "question": t.question,
                    "answer": t.answer,
                    "connectivity": "",
                    "correctness": "",
                    "rater": "",
                }
            )
    return rows


def export_rating_sheets(conversations: Sequence, sample_per_domain: int, seed: int = 0,
                         path: str | Path | None = None) -> str:
    """Blank CSV rating sheet; also written to ``path`` when given."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SHEET_HEADER, lineterminator="\n")
    writer.writeheader()
    writer.writerows(sample_for_rating(conversations, sample_per_domain, seed))
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def tally_ratings(sheets: Iterable[str]) -> dict[str, dict[str, float]]:
    """Percentages per criterion over all filled rows of one or more CSV sheets."""
    counts = {"connectivity": Counter(), "correctness": Counter()}
    enums = {"connectivity": Connectivity, "correctness": Correctness}
    for text in sheets:
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames != SHEET_HEADER:
            raise ValueError(f"unexpected rating sheet header: {reader.fieldnames}")
        for row in reader:
            for column, enum in enums.items():
                value = row[column].strip()
                if value:
                    counts[column][enum(value).value] += 1
    table = {}
    for column, enum in enums.items():
        total = sum(counts[column].values())
        table[column] = {e.value: (100.0 * counts[column][e.value] / total if total else 0.0) for e in enum}
    return table
