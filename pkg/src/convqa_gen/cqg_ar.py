"""Question generation with answer revision: input layout, decoding protocol, parsing."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import AnswerSpan, Passage, QAPair
from .metrics import meteor_lite


class GenerationMalformed(ValueError):
    """Generated sequence does not follow ``[Q] question [A] answer [EOS]``."""

    def __init__(self, message: str, raw=None):
        super().__init__(message)
        self.raw = raw


@dataclass
class CqgEncoding:
    input_ids: list[int]
    target_ids: list[int] | None = None
    # passage text under the highlight, after snapping to token boundaries
    span_text: str = ""


def encode_cqg_input(
    passage: Passage,
    span: AnswerSpan,
    history: Sequence[QAPair],
    tokenizer,
    max_input_len: int = 512,
    tail_tokens: int = 32,
    history_turns: int = 4,
) -> CqgEncoding:
    """``prefix [HL] span [/HL] tail [SEP] ([A] a [Q] q)* [A] span``.

    The passage is cut ``tail_tokens`` tokens after the span. On overflow the
    passage prefix is left-truncated first, then the oldest history turns are
    dropped, then the tail is shortened.
    """
    ptoks = tokenizer.tokenize_with_offsets(passage.text)
    inside = [k for k, t in enumerate(ptoks) if t.start < span.end_char and t.end > span.start_char]
    if not inside:
        raise ValueError(f"span {span} covers no token of passage {passage.id!r}")
    i0, i1 = inside[0], inside[-1]
    span_text = passage.text[ptoks[i0].start:ptoks[i1].end]
    prefix = [t.id for t in ptoks[:i0]]
    middle = [tokenizer.hl_open_id] + [t.id for t in ptoks[i0:i1 + 1]] + [tokenizer.hl_close_id]
    tail = [t.id for t in ptoks[i1 + 1:i1 + 1 + tail_tokens]]
    turns = [
        [tokenizer.a_id] + tokenizer.encode(t.answer) + [tokenizer.q_id] + tokenizer.encode(t.question)
        for t in (list(history)[-history_turns:] if history_turns else [])
    ]
    closing = [tokenizer.a_id] + tokenizer.encode(span_text)

    def total() -> int:
        return len(prefix) + len(middle) + len(tail) + 1 + sum(map(len, turns)) + len(closing)

    overflow = total() - max_input_len
    if overflow > 0:
        prefix = prefix[min(overflow, len(prefix)):]
    while total() > max_input_len and turns:
        turns.pop(0)
    if total() > max_input_len:
        tail = tail[: max(0, len(tail) - (total() - max_input_len))]
    if total() > max_input_len:
        raise ValueError(f"span of {i1 - i0 + 1} tokens does not fit in {max_input_len} input tokens")
    ids = prefix + middle + tail + [tokenizer.sep_id]
    for turn in turns:
        ids += turn
    return CqgEncoding(ids + closing, None, span_text)


def encode_cqg_target(question: str, revised: str, tokenizer) -> list[int]:
    if not question.strip() or not revised.strip():
        raise ValueError("question and revised answer must be non-empty")
    return (
        [tokenizer.q_id] + tokenizer.encode(question) + [tokenizer.a_id] + tokenizer.encode(revised) + [tokenizer.eos_id]
    )


def highlighted_text(enc: CqgEncoding, tokenizer) -> str:
    ids = enc.input_ids
    lo = ids.index(tokenizer.hl_open_id)
    hi = ids.index(tokenizer.hl_close_id)
    return tokenizer.decode(ids[lo + 1:hi])


def parse_generation(output: Sequence[int], tokenizer) -> tuple[str, str]:
    """Split ``[Q] question [A] answer [EOS]`` into its two parts.

    A missing EOS (length-capped output) is tolerated; anything after the
    first EOS is ignored.
    """
    ids = [i for i in output if i != tokenizer.pad_id]
    if tokenizer.eos_id in ids:
        ids = ids[: ids.index(tokenizer.eos_id)]
    if not ids or ids[0] != tokenizer.q_id:
        raise GenerationMalformed("output does not start with [Q]", output)
    if ids.count(tokenizer.q_id) > 1:
        raise GenerationMalformed("output contains more than one [Q]", output)
    if tokenizer.a_id not in ids:
        raise GenerationMalformed("output has no [A] marker", output)
    split = ids.index(tokenizer.a_id)
    if tokenizer.a_id in ids[split + 1:]:
        raise GenerationMalformed("output contains more than one [A]", output)
    question = tokenizer.decode(ids[1:split]).strip()
    answer = tokenizer.decode(ids[split + 1:]).strip()
    if not question or not answer:
        raise GenerationMalformed("empty question or answer", output)
    return question, answer


def generate_qa(
    gen,
    enc: CqgEncoding,
    beam_size: int = 4,
    max_new_tokens: int = 128,
    length_penalty: float = 1.0,
) -> tuple[str, str]:
    """Decode a question and then the revised answer in one pass from ``[Q]``."""
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    tk = gen.tokenizer
    out = gen.generate(
        enc.input_ids,
        beam_size=beam_size,
        max_new_tokens=max_new_tokens,
        bos_id=tk.q_id,
        eos_id=tk.eos_id,
        length_penalty=length_penalty,
    )
    return parse_generation(out, tk)


def cqg_loss(gen, enc: CqgEncoding) -> float:
    if enc.target_ids is None:
        raise ValueError("encoding has no target")
    return gen.loss(enc.input_ids, enc.target_ids)


def encode_revision_example(example, passage: Passage, tokenizer, **kwargs) -> CqgEncoding:
    """Input/target pair for one training tuple; the target always holds the gold answer."""
    enc = encode_cqg_input(passage, example.span, example.history, tokenizer, **kwargs)
    enc.target_ids = encode_cqg_target(example.question, example.revised, tokenizer)
    return enc


class AnswerRevisingQuestionGenerator(BaseEstimator):
    """Estimator over a sequence generator trained on revision examples.

    ``fit(X)`` takes ``(examples, passages)`` where ``examples`` are
    :class:`~convqa_gen.negative_sampling.RevisionExample` and ``passages``
    maps passage id to :class:`Passage`.
    """

    def __init__(
        self,
        generator=None,
        beam_size: int = 4,
        history_turns: int = 4,
        tail_tokens: int = 32,
        max_input_len: int = 512,
        max_new_tokens: int = 128,
        epochs: int = 2,
        learning_rate: float = 3e-5,
        batch_size: int = 4,
        warmup_ratio: float = 0.1,
        model_size: str = "tiny",
        seed: int = 0,
    ):
        self.generator = generator
        self.beam_size = beam_size
        self.history_turns = history_turns
        self.tail_tokens = tail_tokens
        self.max_input_len = max_input_len
        self.max_new_tokens = max_new_tokens
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.warmup_ratio = warmup_ratio
        self.model_size = model_size
        self.seed = seed

    def _enc_kwargs(self) -> dict:
        return dict(max_input_len=self.max_input_len, tail_tokens=self.tail_tokens, history_turns=self.history_turns)

    def fit(self, X, y=None):
        from .models import T5Generator

        examples, passages = X
        gen = self.generator
        if gen is None:
            texts = [p.text for p in passages.values()]
            texts += [e.question + " " + e.revised for e in examples]
            gen = T5Generator.from_texts(texts, size=self.model_size, seed=self.seed)
        if hasattr(gen, "fit_pairs"):
            encs = [encode_revision_example(e, passages[e.passage_id], gen.tokenizer, **self._enc_kwargs())
                    for e in examples]
            gen.fit_pairs([(e.input_ids, e.target_ids) for e in encs], epochs=self.epochs, lr=self.learning_rate,
                          batch_size=self.batch_size, warmup_ratio=self.warmup_ratio, seed=self.seed)
        self.generator_ = gen
        return self

    def predict(self, X: Iterable[tuple[Passage, AnswerSpan, Sequence[QAPair]]]) -> list[tuple[str, str]]:
        check_is_fitted(self, "generator_")
        out = []
        for passage, span, history in X:
            enc = encode_cqg_input(passage, span, history, self.generator_.tokenizer, **self._enc_kwargs())
            out.append(generate_qa(self.generator_, enc, self.beam_size, self.max_new_tokens))
        return out

    def score(self, X, y=None) -> float:
        """Mean METEOR-lite of generated ``question + answer`` against the gold pair."""
        check_is_fitted(self, "generator_")
        examples, passages = X
        scores = []
        for ex in examples:
            enc = encode_cqg_input(passages[ex.passage_id], ex.span, ex.history, self.generator_.tokenizer,
                                   **self._enc_kwargs())
            try:
                q, a = generate_qa(self.generator_, enc, self.beam_size, self.max_new_tokens)
            except GenerationMalformed:
                scores.append(0.0)
                continue
            scores.append(meteor_lite(f"{q} {a}", f"{ex.question} {ex.revised}"))
        return float(np.mean(scores)) if scores else 0.0
