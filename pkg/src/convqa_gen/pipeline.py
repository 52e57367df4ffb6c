"""Autoregressive conversation synthesis: extract a span, ask and revise, repeat."""
from __future__ import annotations

import json
import logging
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin, clone
from sklearn.utils.validation import check_is_fitted

from .cae import select_answer
from .config import GenerationConfig
from .corpus import AnswerSpan, Conversation, Dataset, Passage, QAPair
from .cqg_ar import GenerationMalformed, encode_cqg_input, generate_qa
from .metrics import normalize_answer

logger = logging.getLogger(__name__)


class Termination(str, Enum):
    DEDUP_EXHAUSTED = "dedup_exhausted"
    MAX_TURNS = "max_turns"
    GENERATION_ERROR = "generation_error"


@dataclass
class SyntheticTurn:
    question: str
    pre_revision_span: AnswerSpan
    span_text: str
    # the revised answer; this is the turn's final answer
    answer: str


@dataclass
class SyntheticConversation:
    passage_id: str
    turns: list[SyntheticTurn] = field(default_factory=list)
    termination_reason: Termination = Termination.MAX_TURNS
    domain: str = ""

    def history(self) -> list[QAPair]:
        return [QAPair(i, t.question, t.answer) for i, t in enumerate(self.turns, start=1)]

    def to_record(self, passage_text: str | None = None) -> dict:
        rec = {
            "passage_id": self.passage_id,
            "domain": self.domain,
            "termination": self.termination_reason.value,
            "turns": [
                {"q": t.question, "a": t.answer, "span": t.pre_revision_span.to_list(), "span_text": t.span_text}
                for t in self.turns
            ],
        }
        if passage_text is not None:
            rec["text"] = passage_text
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "SyntheticConversation":
        turns = [SyntheticTurn(t["q"], AnswerSpan(*t["span"]), t.get("span_text", ""), t["a"]) for t in rec["turns"]]
        return cls(rec["passage_id"], turns, Termination(rec.get("termination", "max_turns")), rec.get("domain", ""))


def generate_conversation(
    passage: Passage, scorer, generator, config: GenerationConfig
) -> SyntheticConversation:
    """Synthesize one conversation; each turn sees only earlier synthetic turns.

    Models receive revised answers as history. Extraction dedups against
    earlier pre-revision spans (``config.dedup_on == "span"``) or earlier
    revised answers (``"revised"``); in the latter mode a turn whose revised
    answer repeats an earlier one is discarded and its span is not offered again.
    """
    conv = SyntheticConversation(passage.id, domain=passage.domain)
    history: list[QAPair] = []
    rejected: list[str] = []
    attempts = 0
    while True:
        if len(conv.turns) >= config.max_turns or attempts >= 2 * config.max_turns:
            conv.termination_reason = Termination.MAX_TURNS
            break
        attempts += 1
        if config.dedup_on == "span":
            used = [t.span_text for t in conv.turns]
        else:
            used = [t.answer for t in conv.turns] + rejected
        span = select_answer(passage, history, scorer, config, used_answers=used)
        if span is None:
            conv.termination_reason = Termination.DEDUP_EXHAUSTED
            break
        try:
            enc = encode_cqg_input(
                passage,
                span,
                history,
                generator.tokenizer,
                max_input_len=config.max_input_len,
                tail_tokens=config.passage_tail_tokens,
                history_turns=config.cqg_history_turns,
            )
            question, answer = generate_qa(
                generator, enc, config.beam_size, config.max_new_tokens, config.length_penalty
            )
        except (GenerationMalformed, ValueError) as exc:
            logger.info("passage %s turn %d: %s", passage.id, len(conv.turns) + 1, exc)
            conv.termination_reason = Termination.GENERATION_ERROR
            break
        span_text = span.text(passage.text)
        if config.dedup_on == "revised":
            seen = {tuple(normalize_answer(t.answer)) for t in conv.turns}
            if tuple(normalize_answer(answer)) in seen:
                rejected.append(span_text)
                continue
        conv.turns.append(SyntheticTurn(question, span, span_text, answer))
        history.append(QAPair(len(history) + 1, question, answer))
    return conv


@dataclass
class RunReport:
    passages: int = 0
    conversations: int = 0
    dropped_empty: int = 0
    failed: int = 0
    turn_count: int = 0
    termination: dict = field(default_factory=dict)
    revision_types: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "counts": {
                "passages": self.passages,
                "conversations": self.conversations,
                "dropped_empty": self.dropped_empty,
                "failed": self.failed,
                "turns": self.turn_count,
            },
            "termination": self.termination,
            "revision_types": self.revision_types,
            "failures": self.failures,
            "config": self.config,
            "seed": self.seed,
        }


def generate_dataset(
    passages: Sequence[Passage], scorer, generator, config: GenerationConfig, workers: int = 1
) -> tuple[list[SyntheticConversation], RunReport]:
    """One synthetic conversation per passage, in input order; empty ones are dropped.

    Passages are processed concurrently only when both backends declare
    ``concurrent_safe``.
    """
    from .analysis import revision_distribution

    random.seed(config.seed)
    np.random.seed(config.seed)

    def run(p: Passage):
        try:
            return generate_conversation(p, scorer, generator, config), None
        except Exception as exc:  # one bad passage must not sink the run
            logger.warning("passage %s failed: %s", p.id, exc)
            return None, f"{type(exc).__name__}: {exc}"

    parallel = workers > 1 and getattr(scorer, "concurrent_safe", False) and getattr(generator, "concurrent_safe", False)
    if parallel:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, passages))
    else:
        results = [run(p) for p in passages]

    report = RunReport(passages=len(passages), config=config.to_dict(), seed=config.seed)
    kept: list[SyntheticConversation] = []
    reasons: Counter = Counter()
    for p, (conv, error) in zip(passages, results):
        if conv is None:
            report.failed += 1
            report.failures.append({"passage_id": p.id, "error": error})
            continue
        reasons[conv.termination_reason.value] += 1
        if conv.turns:
            kept.append(conv)
        else:
            report.dropped_empty += 1
    report.conversations = len(kept)
    report.turn_count = sum(len(c.turns) for c in kept)
    report.termination = {r.value: reasons.get(r.value, 0) for r in Termination}
    report.revision_types = revision_distribution(kept)
    return kept, report


def to_dataset(convs: Iterable[SyntheticConversation], passages: Sequence[Passage], name: str = "synthetic") -> Dataset:
    """Synthetic conversations as a regular :class:`Dataset` of (question, revised answer) turns."""
    by_id = {p.id: p for p in passages}
    convs = list(convs)
    used = {c.passage_id for c in convs}
    out = []
    for c in convs:
        turns = [QAPair(i, t.question, t.answer) for i, t in enumerate(c.turns, start=1)]
        out.append(Conversation(c.passage_id, turns))
    return Dataset(name, "train", [p for p in passages if p.id in used and p.id in by_id], out)


def dumps_synthetic(convs: Iterable[SyntheticConversation], passages: Sequence[Passage]) -> str:
    texts = {p.id: p.text for p in passages}
    return "".join(
        json.dumps(c.to_record(texts.get(c.passage_id)), ensure_ascii=False, sort_keys=True) + "\n" for c in convs
    )


def loads_synthetic(text: str) -> list[SyntheticConversation]:
    return [SyntheticConversation.from_record(json.loads(line)) for line in text.splitlines() if line.strip()]


class ConversationSynthesizer(TransformerMixin, BaseEstimator):
    """Fit both stages on a human-annotated dataset, then ``transform`` passages.

    ``extractor`` and ``reviser`` are unfitted estimators
    (:class:`~convqa_gen.cae.ContextualAnswerExtractor`,
    :class:`~convqa_gen.cqg_ar.AnswerRevisingQuestionGenerator`); they are
    cloned on fit.
    """

    def __init__(
        self,
        extractor=None,
        reviser=None,
        neg_ratio: float = 1.0,
        k: int = 10,
        max_turns: int = 20,
        beam_size: int = 4,
        dedup_on: str = "span",
        workers: int = 1,
        seed: int = 0,
    ):
        self.extractor = extractor
        self.reviser = reviser
        self.neg_ratio = neg_ratio
        self.k = k
        self.max_turns = max_turns
        self.beam_size = beam_size
        self.dedup_on = dedup_on
        self.workers = workers
        self.seed = seed

    def config(self) -> GenerationConfig:
        return GenerationConfig(
            k=self.k, max_turns=self.max_turns, beam_size=self.beam_size, dedup_on=self.dedup_on, seed=self.seed
        )

    def fit(self, X: Dataset, y=None):
        from .cae import ContextualAnswerExtractor
        from .corpus import filter_open_ended, resolve_answer_spans
        from .cqg_ar import AnswerRevisingQuestionGenerator
        from .negative_sampling import NegativeSampler
        from .validation import check_dataset

        check_dataset(X)
        ds = resolve_answer_spans(filter_open_ended(X))
        self.extractor_ = clone(self.extractor or ContextualAnswerExtractor(seed=self.seed)).fit(ds)
        examples = NegativeSampler(neg_ratio=self.neg_ratio, seed=self.seed).fit_transform(ds)
        reviser = clone(self.reviser or AnswerRevisingQuestionGenerator(seed=self.seed))
        self.reviser_ = reviser.fit((examples, ds.passage_map()))
        return self

    def transform(self, X: Sequence[Passage]) -> list[SyntheticConversation]:
        from .validation import check_passages

        check_is_fitted(self, ["extractor_", "reviser_"])
        convs, self.report_ = generate_dataset(
            check_passages(X), self.extractor_.scorer_, self.reviser_.generator_, self.config(), self.workers
        )
        return convs
