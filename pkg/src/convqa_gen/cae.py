"""Contextual answer extraction: windowed encoding, span ranking, dedup, termination."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import GenerationConfig
from .corpus import AnswerSpan, Dataset, Passage, QAPair
from .metrics import normalize_answer, token_f1

logger = logging.getLogger(__name__)


@dataclass
class EncodedWindow:
    """One ``[CLS] history [SEP] passage-slice [SEP]`` input.

    ``char_spans[pos]`` is the passage character range of token ``pos``, or
    None for CLS/history/separator positions.
    """

    token_ids: list[int]
    char_spans: list[tuple[int, int] | None]
    window_offset: int
    passage_start: int
    passage_id: str = ""
    turn: int = 1

    @property
    def passage_positions(self) -> range:
        return range(self.passage_start, self.passage_start + self.n_passage_tokens)

    @property
    def n_passage_tokens(self) -> int:
        return sum(1 for c in self.char_spans if c is not None)

    def position_of_char(self, char: int) -> int | None:
        for pos in self.passage_positions:
            s, e = self.char_spans[pos]
            if s <= char < e:
                return pos
        return None


@dataclass(frozen=True)
class SpanCandidate:
    span: AnswerSpan
    score: float
    text: str = field(default="", compare=False)


class SpanScorer(Protocol):
    tokenizer: object
    max_input_len: int

    def score(self, window: EncodedWindow) -> tuple[np.ndarray, np.ndarray]:
        """Start and end distributions over the window's positions."""


def encode_cae_input(
    passage: Passage,
    history: Sequence[QAPair],
    tokenizer,
    max_input_len: int = 512,
    stride: int = 128,
    history_turns: int = 2,
) -> list[EncodedWindow]:
    """Encode ``[CLS] q a q a [SEP] passage [SEP]`` windows for one turn.

    Only the last ``history_turns`` turns are used. Passages longer than the
    remaining budget are cut into windows whose starts are ``stride`` passage
    tokens apart.
    """
    hist_ids: list[int] = []
    for turn in list(history)[-history_turns:] if history_turns else []:
        if not turn.question.strip() or not turn.answer.strip():
            raise ValueError(f"history turn {turn.turn_index} has empty text")
        hist_ids += tokenizer.encode(turn.question) + tokenizer.encode(turn.answer)
    # keep the most recent history if it would crowd out the passage
    hist_ids = hist_ids[-(max_input_len // 2):]
    budget = max_input_len - 3 - len(hist_ids)
    ptoks = tokenizer.tokenize_with_offsets(passage.text)
    head = [tokenizer.cls_id] + hist_ids + [tokenizer.sep_id]
    windows = []
    start = 0
    while True:
        chunk = ptoks[start:start + budget]
        windows.append(
            EncodedWindow(
                token_ids=head + [t.id for t in chunk] + [tokenizer.sep_id],
                char_spans=[None] * len(head) + [(t.start, t.end) for t in chunk] + [None],
                window_offset=start,
                passage_start=len(head),
                passage_id=passage.id,
                turn=len(history) + 1,
            )
        )
        if start + budget >= len(ptoks):
            return windows
        start += stride


def rank_spans(
    windows: Sequence[EncodedWindow],
    probs: Sequence[tuple[np.ndarray, np.ndarray]],
    k: int,
    max_span_tokens: int,
    passage_text: str = "",
) -> list[SpanCandidate]:
    """Top-``k`` character spans by start-prob + end-prob across windows.

    A span seen in several windows keeps its best score. Ties order by
    earlier start, then shorter span.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    best: dict[tuple[int, int], float] = {}
    for win, (start_p, end_p) in zip(windows, probs):
        lo, n = win.passage_start, win.n_passage_tokens
        if n == 0:
            continue
        s = np.asarray(start_p, dtype=np.float64)[lo:lo + n]
        e = np.asarray(end_p, dtype=np.float64)[lo:lo + n]
        scores = s[:, None] + e[None, :]
        offs = np.subtract.outer(np.arange(n), np.arange(n))  # i - j
        valid = (offs <= 0) & (offs > -max_span_tokens)
        flat = np.where(valid, scores, -np.inf).ravel()
        n_valid = int(valid.sum())
        # a global top-k span is within the top-k of the window holding its max
        if n_valid > k:
            threshold = np.partition(flat, -k)[-k]
            idx = np.flatnonzero(flat >= threshold)
        else:
            idx = np.flatnonzero(valid.ravel())
        for flat_idx in idx:
            i, j = divmod(int(flat_idx), n)
            key = (win.char_spans[lo + i][0], win.char_spans[lo + j][1])
            score = float(flat[flat_idx])
            if score > best.get(key, -math.inf):
                best[key] = score
    ordered = sorted(best.items(), key=lambda kv: (-kv[1], kv[0][0], kv[0][1] - kv[0][0]))[:k]
    return [SpanCandidate(AnswerSpan(s, e), score, passage_text[s:e]) for (s, e), score in ordered]


def extract_candidates(
    windows: Sequence[EncodedWindow],
    scorer: SpanScorer,
    k: int,
    max_span_tokens: int,
    passage_text: str = "",
) -> list[SpanCandidate]:
    probs = [scorer.score(w) for w in windows]
    return rank_spans(windows, probs, k, max_span_tokens, passage_text)


def _answer_text(item) -> str:
    return item if isinstance(item, str) else item.answer


def dedup_candidates(
    cands: Sequence[SpanCandidate], history: Iterable[QAPair | str], normalize: bool = True
) -> list[SpanCandidate]:
    """Drop candidates whose text matches an answer already used."""
    key = (lambda s: tuple(normalize_answer(s))) if normalize else (lambda s: s.strip())
    used = {key(_answer_text(h)) for h in history}
    return [c for c in cands if key(c.text) not in used]


def select_answer(
    passage: Passage,
    history: Sequence[QAPair],
    scorer: SpanScorer,
    config: GenerationConfig,
    used_answers: Iterable[QAPair | str] | None = None,
) -> AnswerSpan | None:
    """Best new span for the next turn, or None when generation should stop.

    ``used_answers`` overrides what candidates are deduplicated against
    (default: the answers in ``history``).
    """
    windows = encode_cae_input(
        passage,
        history,
        scorer.tokenizer,
        max_input_len=min(config.max_input_len, scorer.max_input_len),
        stride=config.stride,
        history_turns=config.cae_history_turns,
    )
    cands = extract_candidates(windows, scorer, config.k, config.max_span_tokens, passage.text)
    cands = dedup_candidates(cands, history if used_answers is None else used_answers)
    return cands[0].span if cands else None


def span_loss(start_probs, end_probs, gold_start: int, gold_end: int, eps: float = 1e-12) -> float:
    """Summed cross-entropy of the start and end heads at the gold positions."""
    start_probs = np.asarray(start_probs, dtype=np.float64)
    end_probs = np.asarray(end_probs, dtype=np.float64)
    for idx, probs in ((gold_start, start_probs), (gold_end, end_probs)):
        if not 0 <= idx < len(probs):
            raise IndexError(f"gold index {idx} outside window of {len(probs)} positions")
    return float(-np.log(max(start_probs[gold_start], eps)) - np.log(max(end_probs[gold_end], eps)))


# ---------------------------------------------------------------------------
# training data


@dataclass
class SpanTrainingSet:
    examples: list[tuple[EncodedWindow, int, int]]
    skipped_windows: int = 0
    skipped_turns: int = 0


def gold_positions(window: EncodedWindow, span: AnswerSpan) -> tuple[int, int] | None:
    """Window positions of the tokens holding the span's first and last characters."""
    i = window.position_of_char(span.start_char)
    j = window.position_of_char(span.end_char - 1)
    if i is None or j is None:
        return None
    return i, j


def build_span_training_set(
    ds: Dataset, tokenizer, max_input_len: int = 512, stride: int = 128, history_turns: int = 2
) -> SpanTrainingSet:
    """Windows paired with gold positions; windows missing the gold span are skipped."""
    passages = ds.passage_map()
    out = SpanTrainingSet([])
    for conv in ds.conversations:
        passage = passages[conv.passage_id]
        for t, turn in enumerate(conv.turns):
            if turn.answer_span is None:
                out.skipped_turns += 1
                continue
            windows = encode_cae_input(passage, conv.turns[:t], tokenizer, max_input_len, stride, history_turns)
            for win in windows:
                pos = gold_positions(win, turn.answer_span)
                if pos is None:
                    out.skipped_windows += 1
                else:
                    out.examples.append((win, *pos))
    return out


# ---------------------------------------------------------------------------
# estimator


class ContextualAnswerExtractor(BaseEstimator):
    """Estimator wrapper: ``fit`` trains the span scorer, ``predict`` picks spans.

    ``scorer`` may be a ready :class:`SpanScorer` (mock or trained); when it is
    None a small :class:`~convqa_gen.models.TorchSpanScorer` is built on fit.
    """

    def __init__(
        self,
        scorer=None,
        k: int = 10,
        max_span_tokens: int = 30,
        history_turns: int = 2,
        max_input_len: int = 512,
        stride: int = 128,
        epochs: int = 2,
        learning_rate: float = 3e-5,
        batch_size: int = 4,
        warmup_ratio: float = 0.1,
        model_size: str = "tiny",
        seed: int = 0,
    ):
        self.scorer = scorer
        self.k = k
        self.max_span_tokens = max_span_tokens
        self.history_turns = history_turns
        self.max_input_len = max_input_len
        self.stride = stride
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.warmup_ratio = warmup_ratio
        self.model_size = model_size
        self.seed = seed

    def _config(self) -> GenerationConfig:
        return GenerationConfig(
            k=self.k,
            max_span_tokens=self.max_span_tokens,
            cae_history_turns=self.history_turns,
            max_input_len=self.max_input_len,
            stride=self.stride,
        )

    def fit(self, X: Dataset, y=None):
        from .models import TorchSpanScorer
        from .validation import check_dataset

        check_dataset(X, require_spans=True)
        scorer = self.scorer
        if scorer is None:
            scorer = TorchSpanScorer.from_corpus(X, size=self.model_size, max_input_len=self.max_input_len,
                                                 seed=self.seed)
        train = build_span_training_set(X, scorer.tokenizer, min(self.max_input_len, scorer.max_input_len),
                                        self.stride, self.history_turns)
        if train.skipped_windows:
            logger.info("skipped %d windows without the gold span", train.skipped_windows)
        if hasattr(scorer, "fit_windows"):
            scorer.fit_windows(train.examples, epochs=self.epochs, lr=self.learning_rate,
                               batch_size=self.batch_size, warmup_ratio=self.warmup_ratio, seed=self.seed)
        self.scorer_ = scorer
        self.n_skipped_windows_ = train.skipped_windows
        return self

    def predict(self, X: Iterable[tuple[Passage, Sequence[QAPair]]]) -> list[AnswerSpan | None]:
        check_is_fitted(self, "scorer_")
        config = self._config()
        return [select_answer(p, h, self.scorer_, config) for p, h in X]

    def score(self, X: Dataset, y=None) -> float:
        """Mean token F1 of the top span against the gold span (no dedup)."""
        check_is_fitted(self, "scorer_")
        passages = X.passage_map()
        config = self._config()
        scores = []
        for conv in X.conversations:
            p = passages[conv.passage_id]
            for t, turn in enumerate(conv.turns):
                if turn.answer_span is None:
                    continue
                span = select_answer(p, conv.turns[:t], self.scorer_, config, used_answers=())
                pred = span.text(p.text) if span else ""
                scores.append(token_f1(pred, turn.answer_span.text(p.text)))
        return float(np.mean(scores)) if scores else 0.0
