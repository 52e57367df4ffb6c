"""Answer normalization and QA scoring: token F1, exact match, METEOR-lite."""
from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

_ARTICLES = frozenset({"a", "an", "the"})
_PUNCT = frozenset(string.punctuation)
# a period between two digits survives punctuation stripping ("2.06")
_NUMERIC_PERIOD = re.compile(r"(?<=\d)\.(?=\d)")
_KEEP = "\x00"


def _strip_punct(s: str) -> str:
    s = _NUMERIC_PERIOD.sub(_KEEP, s)
    s = "".join(ch for ch in s if ch not in _PUNCT)
    return s.replace(_KEEP, ".")


def normalize_answer(s: str) -> list[str]:
    """Lowercase, drop punctuation and articles, split on whitespace."""
    return [tok for tok in _strip_punct(s.lower()).split() if tok not in _ARTICLES]


def token_f1(pred: str, gold: str) -> float:
    pred_toks = normalize_answer(pred)
    gold_toks = normalize_answer(gold)
    if not pred_toks and not gold_toks:
        return 1.0
    if not pred_toks or not gold_toks:
        return 0.0
    common = sum((Counter(pred_toks) & Counter(gold_toks)).values())
    if common == 0:
        return 0.0
    precision = common / len(pred_toks)
    recall = common / len(gold_toks)
    return 2 * precision * recall / (precision + recall)


def exact_match(pred: str, gold: str) -> int:
    return int(normalize_answer(pred) == normalize_answer(gold))


def _meteor_tokens(s: str) -> list[str]:
    # no article removal here: METEOR scores word order, articles included
    return _strip_punct(s.lower()).split()


def meteor_lite(pred: str, gold: str) -> float:
    """Exact-unigram METEOR without stemming or synonym matching.

    Each prediction token is aligned left to right to the earliest unused
    identical gold token; ``chunks`` counts maximal runs that are contiguous
    in both strings.
    """
    p = _meteor_tokens(pred)
    g = _meteor_tokens(gold)
    if not p or not g:
        return 0.0
    free: dict[str, list[int]] = {}
    for idx, tok in enumerate(g):
        free.setdefault(tok, []).append(idx)
    alignment: list[tuple[int, int]] = []
    for i, tok in enumerate(p):
        slots = free.get(tok)
        if slots:
            alignment.append((i, slots.pop(0)))
    m = len(alignment)
    if m == 0:
        return 0.0
    chunks = 1
    for (pi, gi), (pj, gj) in zip(alignment, alignment[1:]):
        if not (pj == pi + 1 and gj == gi + 1):
            chunks += 1
    precision = m / len(p)
    recall = m / len(g)
    fmean = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (chunks / m) ** 3
    return fmean * (1 - penalty)


@dataclass(frozen=True)
class MetricReport:
    f1: float
    em: float
    count: int

    def to_dict(self) -> dict:
        return asdict(self)


def max_over_references(metric, pred: str, golds: Sequence[str]) -> float:
    if not golds:
        raise ValueError("at least one reference answer is required")
    return max(metric(pred, g) for g in golds)


def aggregate(pairs: Iterable[tuple[str, Sequence[str]]]) -> MetricReport:
    """Mean F1/EM over examples, each scored against its best reference."""
    f1_total = em_total = 0.0
    n = 0
    for pred, golds in pairs:
        f1_total += max_over_references(token_f1, pred, golds)
        em_total += max_over_references(exact_match, pred, golds)
        n += 1
    if n == 0:
        return MetricReport(0.0, 0.0, 0)
    return MetricReport(f1_total / n, em_total / n, n)
