"""Dataset types, CoQA/QuAC ingestion, open-ended filtering and domain splits."""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .metrics import normalize_answer, token_f1

logger = logging.getLogger(__name__)


class CorpusError(ValueError):
    """Malformed input file or a record that fails an integrity check."""


class AnswerType(str, Enum):
    OPEN_ENDED = "open_ended"
    YES = "yes"
    NO = "no"
    UNANSWERABLE = "unanswerable"


@dataclass(frozen=True, order=True)
class AnswerSpan:
    """Half-open character range into a passage."""

    start_char: int
    end_char: int

    def __post_init__(self):
        if not 0 <= self.start_char < self.end_char:
            raise ValueError(f"invalid span [{self.start_char}, {self.end_char})")

    def text(self, passage_text: str) -> str:
        return passage_text[self.start_char:self.end_char]

    def overlaps(self, other: "AnswerSpan") -> bool:
        return self.start_char < other.end_char and other.start_char < self.end_char

    def contains(self, other: "AnswerSpan") -> bool:
        return self.start_char <= other.start_char and other.end_char <= self.end_char

    def to_list(self) -> list[int]:
        return [self.start_char, self.end_char]


@dataclass(frozen=True)
class Passage:
    id: str
    domain: str
    text: str

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"passage {self.id!r} has empty text")


@dataclass(frozen=True)
class QAPair:
    turn_index: int
    question: str
    answer: str
    answer_span: AnswerSpan | None = None
    answer_type: AnswerType = AnswerType.OPEN_ENDED
    # CoQA supporting evidence; resolved into answer_span by rationale_to_span
    rationale: AnswerSpan | None = None
    # every human reference answer, used for max-over-references scoring
    references: tuple[str, ...] = ()

    @property
    def golds(self) -> list[str]:
        return list(self.references) if self.references else [self.answer]


@dataclass
class Conversation:
    passage_id: str
    turns: list[QAPair] = field(default_factory=list)

    def __post_init__(self):
        for expected, turn in enumerate(self.turns, start=1):
            if turn.turn_index != expected:
                raise ValueError(
                    f"conversation {self.passage_id!r}: turn_index {turn.turn_index} at position {expected}"
                )


@dataclass
class Dataset:
    name: str
    split: str = "train"
    passages: list[Passage] = field(default_factory=list)
    conversations: list[Conversation] = field(default_factory=list)

    def __post_init__(self):
        if self.split not in ("train", "dev", "test"):
            raise ValueError(f"unknown split {self.split!r}")
        ids = [p.id for p in self.passages]
        if len(set(ids)) != len(ids):
            raise ValueError(f"dataset {self.name!r} has duplicate passage ids")
        known = set(ids)
        for conv in self.conversations:
            if conv.passage_id not in known:
                raise ValueError(f"conversation refers to unknown passage {conv.passage_id!r}")

    def passage_map(self) -> dict[str, Passage]:
        return {p.id: p for p in self.passages}

    @property
    def n_turns(self) -> int:
        return sum(len(c.turns) for c in self.conversations)


# ---------------------------------------------------------------------------
# parsing


def _load_json(raw: bytes | str, source: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{source}: malformed JSON at line {exc.lineno} col {exc.colno}: {exc.msg}") from exc


def _require(record: dict, key: str, path: str):
    try:
        return record[key]
    except (KeyError, TypeError):
        raise CorpusError(f"{path}: missing field {key!r}") from None


def _trimmed_span(text: str, start: int, end: int) -> AnswerSpan | None:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return AnswerSpan(start, end) if start < end else None


def _classify_coqa(answer: dict) -> AnswerType:
    norm = normalize_answer(answer.get("input_text", ""))
    if norm == ["yes"]:
        return AnswerType.YES
    if norm == ["no"]:
        return AnswerType.NO
    if norm == ["unknown"] or answer.get("span_start", 0) < 0:
        return AnswerType.UNANSWERABLE
    return AnswerType.OPEN_ENDED


def parse_coqa(raw_bytes: bytes | str, split: str = "train", name: str = "coqa") -> Dataset:
    """Parse a CoQA-format JSON document.

    The rationale of each answer is kept as ``QAPair.rationale``; the
    extractive ``answer_span`` is left empty until :func:`resolve_answer_spans`.
    """
    doc = _load_json(raw_bytes, name)
    records = _require(doc, "data", name)
    passages, conversations = [], []
    for i, rec in enumerate(records):
        path = f"data[{i}]"
        story = _require(rec, "story", path)
        pid = str(_require(rec, "id", path))
        passages.append(Passage(pid, str(rec.get("source", "unknown")), story))
        questions = _require(rec, "questions", path)
        answers = _require(rec, "answers", path)
        if len(questions) != len(answers):
            raise CorpusError(f"{path} ({pid}): {len(questions)} questions but {len(answers)} answers")
        extra = rec.get("additional_answers") or {}
        turns = []
        for j, (q, a) in enumerate(zip(questions, answers)):
            tpath = f"{path}.answers[{j}] ({pid})"
            atype = _classify_coqa(a)
            rationale = None
            start = a.get("span_start", -1)
            if start is not None and start >= 0:
                end = _require(a, "span_end", tpath)
                span_text = a.get("span_text", "")
                if story[start:end].strip() != span_text.strip():
                    raise CorpusError(
                        f"{tpath}: span_text {span_text!r} does not match story[{start}:{end}]"
                        f" = {story[start:end]!r}"
                    )
                rationale = _trimmed_span(story, start, end)
            turn_id = int(a.get("turn_id", j + 1))
            refs = [a["input_text"]]
            for alt in extra.values():
                if j < len(alt) and alt[j].get("input_text"):
                    refs.append(alt[j]["input_text"])
            turns.append(
                QAPair(
                    turn_index=turn_id,
                    question=_require(q, "input_text", f"{path}.questions[{j}]"),
                    answer=a["input_text"],
                    answer_type=atype,
                    rationale=rationale,
                    references=tuple(refs),
                )
            )
        conversations.append(Conversation(pid, turns))
    return Dataset(name, split, passages, conversations)


def parse_quac(
    raw_bytes: bytes | str, split: str = "train", name: str = "quac", domain: str = "wikipedia"
) -> Dataset:
    """Parse QuAC-format JSON (also used by DoQA; pass ``domain="cooking"``)."""
    doc = _load_json(raw_bytes, name)
    records = _require(doc, "data", name)
    passages, conversations = [], []
    for i, article in enumerate(records):
        for k, para in enumerate(_require(article, "paragraphs", f"data[{i}]")):
            path = f"data[{i}].paragraphs[{k}]"
            context = _require(para, "context", path)
            pid = str(para.get("id", f"{name}-{i}-{k}"))
            passages.append(Passage(pid, domain, context))
            turns = []
            for j, qa in enumerate(_require(para, "qas", path)):
                tpath = f"{path}.qas[{j}] ({pid})"
                orig = _require(qa, "orig_answer", tpath)
                text = _require(orig, "text", tpath)
                refs = tuple(a["text"] for a in qa.get("answers", []) if a.get("text")) or (text,)
                yesno = qa.get("yesno", "x")
                span = None
                if text == "CANNOTANSWER":
                    atype = AnswerType.UNANSWERABLE
                else:
                    start = int(_require(orig, "answer_start", tpath))
                    if context[start:start + len(text)] != text:
                        raise CorpusError(
                            f"{tpath}: answer {text!r} not found at offset {start}"
                        )
                    span = _trimmed_span(context, start, start + len(text))
                    if span is None:
                        raise CorpusError(f"{tpath}: whitespace-only answer")
                    atype = {"y": AnswerType.YES, "n": AnswerType.NO}.get(yesno, AnswerType.OPEN_ENDED)
                turns.append(
                    QAPair(
                        turn_index=j + 1,
                        question=_require(qa, "question", tpath),
                        answer=text,
                        answer_span=span,
                        answer_type=atype,
                        references=refs,
                    )
                )
            conversations.append(Conversation(pid, turns))
    return Dataset(name, split, passages, conversations)


# ---------------------------------------------------------------------------
# transformations


def filter_open_ended(ds: Dataset) -> Dataset:
    """Keep only open-ended turns, re-index them, drop emptied conversations."""
    convs = []
    for conv in ds.conversations:
        kept = [t for t in conv.turns if t.answer_type is AnswerType.OPEN_ENDED]
        if kept:
            turns = [replace(t, turn_index=i) for i, t in enumerate(kept, start=1)]
            convs.append(Conversation(conv.passage_id, turns))
    return Dataset(ds.name, ds.split, list(ds.passages), convs)


def split_by_domain(ds: Dataset, in_domains: Iterable[str]) -> tuple[Dataset, Dataset]:
    in_domains = set(in_domains)
    present = {p.domain for p in ds.passages}
    for unknown in sorted(in_domains - present):
        logger.warning("domain %r does not occur in dataset %r", unknown, ds.name)
    inside = {p.id for p in ds.passages if p.domain in in_domains}

    def part(keep) -> Dataset:
        return Dataset(
            ds.name,
            ds.split,
            [p for p in ds.passages if keep(p.id)],
            [c for c in ds.conversations if keep(c.passage_id)],
        )

    return part(lambda pid: pid in inside), part(lambda pid: pid not in inside)


_WORD = re.compile(r"\S+")


def word_offsets(text: str, start: int = 0, end: int | None = None) -> list[tuple[int, int]]:
    """Character ranges of whitespace-delimited words within ``text[start:end]``."""
    end = len(text) if end is None else end
    return [(m.start(), m.end()) for m in _WORD.finditer(text, start, end)]


def rationale_to_span(passage_text: str, rationale: AnswerSpan, free_form: str) -> AnswerSpan:
    """Best-F1 contiguous word span of the rationale against a free-form answer.

    Ties go to the shorter span, then the earlier start. With no token overlap
    at all the whole rationale is returned.
    """
    if not free_form.strip():
        raise ValueError("free-form answer is empty")
    words = word_offsets(passage_text, rationale.start_char, rationale.end_char)
    if not words:
        raise ValueError(f"rationale {rationale} has no tokens")
    gold = normalize_answer(free_form)
    norm = [normalize_answer(passage_text[s:e]) for s, e in words]
    if not gold:
        # only a span that also normalizes to nothing scores F1 = 1
        for (s, e), n in zip(words, norm):
            if not n:
                return AnswerSpan(s, e)
        return AnswerSpan(words[0][0], words[-1][1])
    gold_set = set(gold)
    best = None  # (f1, -length, -start)
    best_span = None
    for i in range(len(words)):
        # a span whose first word shares nothing with the answer is dominated
        # by the same span without that word, except when it is a lone word
        if not gold_set.intersection(norm[i]):
            continue
        for j in range(i, len(words)):
            if not gold_set.intersection(norm[j]):
                continue
            s, e = words[i][0], words[j][1]
            f1 = token_f1(passage_text[s:e], free_form)
            key = (f1, -(j - i), -i)
            if best is None or key > best:
                best, best_span = key, (s, e)
    if best_span is None or best[0] == 0.0:
        return AnswerSpan(words[0][0], words[-1][1])
    return AnswerSpan(*best_span)


def resolve_answer_spans(ds: Dataset) -> Dataset:
    """Fill ``answer_span`` for rationale-bearing open-ended turns."""
    texts = {p.id: p.text for p in ds.passages}
    convs = []
    for conv in ds.conversations:
        turns = []
        for t in conv.turns:
            if t.answer_span is None and t.rationale is not None and t.answer_type is AnswerType.OPEN_ENDED:
                t = replace(t, answer_span=rationale_to_span(texts[conv.passage_id], t.rationale, t.answer))
            turns.append(t)
        convs.append(Conversation(conv.passage_id, turns))
    return Dataset(ds.name, ds.split, list(ds.passages), convs)


# ---------------------------------------------------------------------------
# canonical JSON-lines format


def conversation_record(passage: Passage, conv: Conversation | None) -> dict:
    turns = []
    for t in conv.turns if conv else []:
        rec = {"q": t.question, "a": t.answer, "span": t.answer_span.to_list() if t.answer_span else None}
        if t.answer_type is not AnswerType.OPEN_ENDED:
            rec["type"] = t.answer_type.value
        if t.rationale is not None:
            rec["rationale"] = t.rationale.to_list()
        if t.references and list(t.references) != [t.answer]:
            rec["refs"] = list(t.references)
        turns.append(rec)
    return {"passage_id": passage.id, "domain": passage.domain, "text": passage.text, "turns": turns}


def iter_records(ds: Dataset) -> Iterator[dict]:
    convs = {c.passage_id: c for c in ds.conversations}
    for p in ds.passages:
        yield conversation_record(p, convs.get(p.id))


def dumps_jsonl(ds: Dataset) -> str:
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in iter_records(ds))


def write_jsonl(ds: Dataset, path: str | Path) -> None:
    Path(path).write_text(dumps_jsonl(ds), encoding="utf-8")


def _span(value) -> AnswerSpan | None:
    return AnswerSpan(int(value[0]), int(value[1])) if value else None


def loads_jsonl(text: str, name: str = "dataset", split: str = "train") -> Dataset:
    passages, convs = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            passages.append(Passage(str(rec["passage_id"]), rec.get("domain", "unknown"), rec["text"]))
            turns = [
                QAPair(
                    turn_index=i,
                    question=t["q"],
                    answer=t["a"],
                    answer_span=_span(t.get("span")),
                    answer_type=AnswerType(t.get("type", "open_ended")),
                    rationale=_span(t.get("rationale")),
                    references=tuple(t.get("refs", ())),
                )
                for i, t in enumerate(rec.get("turns", []), start=1)
            ]
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{name}:{lineno}: malformed JSON: {exc.msg}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"{name}:{lineno}: schema mismatch: {exc!r}") from exc
        if turns:
            convs.append(Conversation(passages[-1].id, turns))
    return Dataset(name, split, passages, convs)


def read_jsonl(path: str | Path, split: str = "train") -> Dataset:
    path = Path(path)
    return loads_jsonl(path.read_text(encoding="utf-8"), name=path.stem, split=split)
