"""Input checks shared by the estimators and the CLI."""
from __future__ import annotations

from typing import Iterable

from .corpus import AnswerType, Dataset, Passage


def check_dataset(ds, require_spans: bool = False, open_ended: bool = False) -> Dataset:
    if not isinstance(ds, Dataset):
        raise TypeError(f"expected a Dataset, got {type(ds).__name__}")
    texts = {p.id: p.text for p in ds.passages}
    for conv in ds.conversations:
        for turn in conv.turns:
            if open_ended and turn.answer_type is not AnswerType.OPEN_ENDED:
                raise ValueError(
                    f"{conv.passage_id} turn {turn.turn_index}: {turn.answer_type.value} turn in an open-ended dataset"
                )
            if turn.answer_span is not None and turn.answer_span.end_char > len(texts[conv.passage_id]):
                raise ValueError(f"{conv.passage_id} turn {turn.turn_index}: span beyond passage end")
    if require_spans and not any(t.answer_span for c in ds.conversations for t in c.turns):
        raise ValueError(f"dataset {ds.name!r} has no answer spans; run resolve_answer_spans first")
    return ds


def check_passages(passages: Iterable) -> list[Passage]:
    out = list(passages)
    bad = [type(p).__name__ for p in out if not isinstance(p, Passage)]
    if bad:
        raise TypeError(f"expected Passage objects, got {sorted(set(bad))}")
    ids = [p.id for p in out]
    if len(ids) != len(set(ids)):
        raise ValueError("passage ids must be unique")
    return out
