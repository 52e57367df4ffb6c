"""Positive and corrupted (expanded / reduced) answer spans for revision training."""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

from sklearn.base import BaseEstimator, TransformerMixin

from .corpus import AnswerSpan, Conversation, Dataset, Passage, QAPair, word_offsets
from .metrics import normalize_answer


class Polarity(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class Method(str, Enum):
    IDENTITY = "identity"
    EXPANSION = "expansion"
    REDUCTION = "reduction"


@dataclass
class RevisionExample:
    passage_id: str
    history: list[QAPair]
    span: AnswerSpan
    revised: str
    polarity: Polarity
    method: Method
    question: str = ""
    span_text: str = field(default="", compare=False)

    def __post_init__(self):
        if (self.polarity is Polarity.POSITIVE) != (self.method is Method.IDENTITY):
            raise ValueError(f"polarity {self.polarity.value} is inconsistent with method {self.method.value}")

    def to_record(self) -> dict:
        return {
            "passage_id": self.passage_id,
            "history": [{"q": t.question, "a": t.answer} for t in self.history],
            "question": self.question,
            "span": self.span.to_list(),
            "span_text": self.span_text,
            "revised": self.revised,
            "polarity": self.polarity.value,
            "method": self.method.value,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "RevisionExample":
        history = [QAPair(i, h["q"], h["a"]) for i, h in enumerate(rec["history"], start=1)]
        return cls(
            rec["passage_id"],
            history,
            AnswerSpan(*rec["span"]),
            rec["revised"],
            Polarity(rec["polarity"]),
            Method(rec["method"]),
            rec.get("question", ""),
            rec.get("span_text", ""),
        )


def dumps_examples(examples: Sequence[RevisionExample]) -> str:
    return "".join(json.dumps(e.to_record(), ensure_ascii=False, sort_keys=True) + "\n" for e in examples)


def loads_examples(text: str) -> list[RevisionExample]:
    return [RevisionExample.from_record(json.loads(line)) for line in text.splitlines() if line.strip()]


def make_positive(conv: Conversation, t: int, passage: Passage | None = None) -> RevisionExample:
    """Gold span and gold answer of turn ``t`` (1-based) as a positive pair."""
    turn = conv.turns[t - 1]
    if turn.answer_span is None:
        raise ValueError(f"turn {t} of {conv.passage_id!r} has no answer span")
    return RevisionExample(
        conv.passage_id,
        list(conv.turns[: t - 1]),
        turn.answer_span,
        turn.answer,
        Polarity.POSITIVE,
        Method.IDENTITY,
        question=turn.question,
        span_text=turn.answer_span.text(passage.text) if passage else "",
    )


def _covered_words(words: list[tuple[int, int]], span: AnswerSpan) -> tuple[int, int] | None:
    idx = [k for k, (s, e) in enumerate(words) if s < span.end_char and e > span.start_char]
    return (idx[0], idx[-1]) if idx else None


def legal_growth(
    words: list[tuple[int, int]], span: AnswerSpan, other_answers: Sequence[AnswerSpan], max_len: int
) -> tuple[int, int]:
    """Largest number of words the span can grow by at the front and at the rear."""
    if any(span.overlaps(o) for o in other_answers):
        return 0, 0
    cover = _covered_words(words, span)
    if cover is None:
        return 0, 0
    lo, hi = cover
    front = 0
    while front < max_len and lo - front - 1 >= 0:
        s, _ = words[lo - front - 1]
        grown = AnswerSpan(s, span.end_char)
        if any(grown.overlaps(o) for o in other_answers):
            break
        front += 1
    rear = 0
    while rear < max_len and hi + rear + 1 < len(words):
        _, e = words[hi + rear + 1]
        grown = AnswerSpan(span.start_char, e)
        if any(grown.overlaps(o) for o in other_answers):
            break
        rear += 1
    return front, rear


def expand_span(
    passage: Passage,
    span: AnswerSpan,
    other_answers: Sequence[AnswerSpan],
    rng: random.Random,
    max_len: int = 5,
) -> AnswerSpan | None:
    """Grow the span by 1..max_len surrounding words at the front, rear or both.

    Growth stops before touching another turn's answer. Directions that allow
    no growth are not drawn; None means no legal expansion exists.
    """
    words = word_offsets(passage.text)
    front, rear = legal_growth(words, span, other_answers, max_len)
    directions = [d for d, ok in (("front", front), ("rear", rear), ("both", front and rear)) if ok]
    if not directions:
        return None
    direction = rng.choice(directions)
    lo, hi = _covered_words(words, span)
    start, end = span.start_char, span.end_char
    if direction in ("front", "both"):
        start = words[lo - rng.randint(1, front)][0]
    if direction in ("rear", "both"):
        end = words[hi + rng.randint(1, rear)][1]
    return AnswerSpan(start, end)


def reduce_span(span: AnswerSpan, passage: Passage, rng: random.Random) -> AnswerSpan:
    """Drop ``f`` words from the front and ``r`` from the rear, ``f + r >= 1``, keeping one or more."""
    words = word_offsets(passage.text, span.start_char, span.end_char)
    n = len(words)
    if n < 2:
        raise ValueError("cannot reduce a span of fewer than two words")
    removed = rng.randint(1, n - 1)
    f = rng.randint(0, removed)
    r = removed - f
    kept = words[f:n - r]
    return AnswerSpan(kept[0][0], kept[-1][1])


def _negative(
    passage: Passage, span: AnswerSpan, others: list[AnswerSpan], revised: str, rng: random.Random, max_expand: int
) -> tuple[AnswerSpan, Method] | None:
    methods = [Method.EXPANSION, Method.REDUCTION]
    rng.shuffle(methods)
    gold = normalize_answer(revised)
    for method in methods:
        if method is Method.EXPANSION:
            new = expand_span(passage, span, others, rng, max_expand)
        elif len(word_offsets(passage.text, span.start_char, span.end_char)) >= 2:
            new = reduce_span(span, passage, rng)
        else:
            new = None
        # a corruption that only adds/removes articles or punctuation is not improper
        if new is not None and normalize_answer(new.text(passage.text)) != gold:
            return new, method
    return None


def build_revision_training_set(
    ds: Dataset, neg_ratio: float = 1.0, rng_seed: int = 0, max_expand: int = 5
) -> list[RevisionExample]:
    """One positive per turn plus ``neg_ratio`` negatives per turn in expectation.

    The integer part of ``neg_ratio`` is drawn for every turn and the
    fractional part with that probability. Negatives keep the gold answer as
    the revision target.
    """
    if neg_ratio < 0:
        raise ValueError("neg_ratio must be >= 0")
    rng = random.Random(rng_seed)
    passages = ds.passage_map()
    whole, frac = int(neg_ratio), neg_ratio - int(neg_ratio)
    out = []
    for conv in ds.conversations:
        passage = passages[conv.passage_id]
        spans = [t.answer_span for t in conv.turns]
        for t, turn in enumerate(conv.turns, start=1):
            if turn.answer_span is None:
                continue
            pos = make_positive(conv, t, passage)
            out.append(pos)
            n_neg = whole + (1 if frac and rng.random() < frac else 0)
            others = [s for k, s in enumerate(spans) if s is not None and k != t - 1]
            for _ in range(n_neg):
                drawn = _negative(passage, turn.answer_span, others, turn.answer, rng, max_expand)
                if drawn is None:
                    break
                span, method = drawn
                out.append(
                    RevisionExample(
                        conv.passage_id,
                        pos.history,
                        span,
                        turn.answer,
                        Polarity.NEGATIVE,
                        method,
                        question=turn.question,
                        span_text=span.text(passage.text),
                    )
                )
    return out


class NegativeSampler(TransformerMixin, BaseEstimator):
    """``transform(dataset)`` -> list of :class:`RevisionExample`."""

    def __init__(self, neg_ratio: float = 1.0, max_expand: int = 5, seed: int = 0):
        self.neg_ratio = neg_ratio
        self.max_expand = max_expand
        self.seed = seed

    def fit(self, X: Dataset, y=None):
        from .validation import check_dataset

        check_dataset(X, require_spans=True)
        return self

    def transform(self, X: Dataset) -> list[RevisionExample]:
        return build_revision_training_set(X, self.neg_ratio, self.seed, self.max_expand)
