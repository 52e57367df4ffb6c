import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import extractive_dataset, span_of
from convqa_gen.corpus import AnswerSpan, Conversation, Passage, QAPair, word_offsets
from convqa_gen.metrics import normalize_answer
from convqa_gen.negative_sampling import (
    Method,
    NegativeSampler,
    Polarity,
    RevisionExample,
    build_revision_training_set,
    dumps_examples,
    expand_span,
    legal_growth,
    loads_examples,
    make_positive,
    reduce_span,
)

TEXT = "w0 w1 w2 w3 w4 w5 w6 w7 w8 w9 w10 w11"
P = Passage("p", "d", TEXT)
WORDS = word_offsets(TEXT)


def words_span(i, j):
    return AnswerSpan(WORDS[i][0], WORDS[j][1])


class FixedRng:
    """Replays a fixed choice and fixed integers."""

    def __init__(self, direction, *ints):
        self.direction = direction
        self.ints = list(ints)

    def choice(self, seq):
        assert self.direction in seq, seq
        return self.direction

    def randint(self, a, b):
        value = self.ints.pop(0)
        assert a <= value <= b
        return value


def test_expand_front_two():
    assert expand_span(P, words_span(5, 6), [], FixedRng("front", 2)) == words_span(3, 6)


def test_expand_redirects_when_front_blocked():
    # the answer at words 3..4 touches the front of 5..6
    other = [words_span(3, 4)]
    assert legal_growth(WORDS, words_span(5, 6), other, 5) == (0, 5)
    legal = {words_span(5, j) for j in range(7, 12)}
    for seed in range(30):
        assert expand_span(P, words_span(5, 6), other, random.Random(seed)) in legal


def test_expand_sentinel_when_no_move():
    assert expand_span(P, words_span(0, 1), [words_span(2, 3)], random.Random(0)) is None


def test_reduce_examples():
    text = "Bucks is in south east england"
    p = Passage("b", "d", text)
    span = span_of(text, "south east england")
    assert reduce_span(span, p, FixedRng(None, 1, 1)).text(text) == "east england"
    five = Passage("f", "d", "a b c d e")
    assert reduce_span(AnswerSpan(0, 9), five, FixedRng(None, 4, 2)).text(five.text) == "c"
    with pytest.raises(ValueError):
        reduce_span(span_of(text, "Bucks"), p, random.Random(0))


def enumerate_expansions(span_words, others, max_len=5):
    """All spans that grow the word range by 1..max_len per side without touching others."""
    i, j = span_words
    out = set()
    for f in range(0, max_len + 1):
        for r in range(0, max_len + 1):
            if f + r == 0 or i - f < 0 or j + r >= len(WORDS):
                continue
            cand = words_span(i - f, j + r)
            if not any(cand.overlaps(o) for o in others):
                out.add(cand)
    return out


@settings(max_examples=100)
@given(st.integers(0, 11), st.integers(0, 3), st.integers(0, 2**31), st.lists(st.integers(0, 11), max_size=2))
def test_expansion_is_legal(i, width, seed, other_starts):
    j = min(i + width, 11)
    span = words_span(i, j)
    others = [words_span(k, k) for k in other_starts if not (i <= k <= j)]
    out = expand_span(P, span, others, random.Random(seed))
    legal = enumerate_expansions((i, j), others)
    if out is None:
        assert not legal
    else:
        assert out in legal and out.contains(span) and out != span


@settings(max_examples=100)
@given(st.integers(0, 10), st.integers(1, 6), st.integers(0, 2**31))
def test_reduction_is_strict_infix(i, width, seed):
    j = min(i + width, 11)
    span = words_span(i, j)
    out = reduce_span(span, P, random.Random(seed))
    kept = word_offsets(TEXT, out.start_char, out.end_char)
    full = word_offsets(TEXT, span.start_char, span.end_char)
    assert 1 <= len(kept) < len(full)
    assert any(full[k:k + len(kept)] == kept for k in range(len(full)))


def test_make_positive():
    ds = extractive_dataset(TEXT, ["w1 w2", "w5", "w8 w9"])
    conv = ds.conversations[0]
    first = make_positive(conv, 1, P)
    assert first.history == [] and first.span_text == first.revised == "w1 w2"
    third = make_positive(conv, 3, P)
    assert [h.answer for h in third.history] == ["w1 w2", "w5"]
    assert third.polarity is Polarity.POSITIVE and third.method is Method.IDENTITY
    bare = Conversation("p", [QAPair(1, "q", "free form")])
    with pytest.raises(ValueError):
        make_positive(bare, 1)


def test_polarity_method_invariant():
    with pytest.raises(ValueError):
        RevisionExample("p", [], AnswerSpan(0, 2), "w0", Polarity.POSITIVE, Method.EXPANSION)
    with pytest.raises(ValueError):
        RevisionExample("p", [], AnswerSpan(0, 2), "w0", Polarity.NEGATIVE, Method.IDENTITY)


def test_training_set_ratios_and_determinism():
    ds = extractive_dataset(TEXT, ["w1 w2", "w5 w6", "w9 w10"])
    none = build_revision_training_set(ds, neg_ratio=0)
    assert len(none) == 3 and all(e.polarity is Polarity.POSITIVE for e in none)
    one = build_revision_training_set(ds, neg_ratio=1, rng_seed=4)
    assert len(one) == 6
    assert dumps_examples(one) == dumps_examples(build_revision_training_set(ds, neg_ratio=1, rng_seed=4))
    for ex in one:
        same = normalize_answer(ex.span.text(TEXT)) == normalize_answer(ex.revised)
        assert same == (ex.polarity is Polarity.POSITIVE)
    with pytest.raises(ValueError):
        build_revision_training_set(ds, neg_ratio=-1)


def test_fractional_ratio_expectation():
    answers = [f"w{i}" for i in range(0, 12, 2)]
    ds = extractive_dataset(TEXT, answers)
    counts = [len(build_revision_training_set(ds, neg_ratio=0.5, rng_seed=s)) - len(answers) for s in range(200)]
    assert 2.4 < sum(counts) / len(counts) < 3.6


def test_examples_jsonl_round_trip():
    ds = extractive_dataset(TEXT, ["w1 w2", "w5 w6"])
    exs = build_revision_training_set(ds, neg_ratio=1, rng_seed=1)
    text = dumps_examples(exs)
    assert dumps_examples(loads_examples(text)) == text


def test_sampler_estimator(coqa_open):
    out = NegativeSampler(neg_ratio=1.0, seed=3).fit_transform(coqa_open)
    assert sum(e.polarity is Polarity.POSITIVE for e in out) == coqa_open.n_turns
    texts = coqa_open.passage_map()
    for e in out:
        if e.polarity is Polarity.NEGATIVE:
            assert normalize_answer(e.span.text(texts[e.passage_id].text)) != normalize_answer(e.revised)
