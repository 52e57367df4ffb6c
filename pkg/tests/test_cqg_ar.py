import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import span_of
from convqa_gen.corpus import AnswerSpan, Passage, QAPair
from convqa_gen.cqg_ar import (
    CqgEncoding,
    GenerationMalformed,
    cqg_loss,
    encode_cqg_input,
    encode_cqg_target,
    encode_revision_example,
    generate_qa,
    highlighted_text,
    parse_generation,
)
from convqa_gen.models import EchoGenerator, ScriptedGenerator, SequenceGenerator, TargetMockGenerator
from convqa_gen.negative_sampling import Method, Polarity, RevisionExample
from convqa_gen.tokenization import WordTokenizer

BUCKS = (
    "Buckinghamshire, abbreviated Bucks, is a county in South East England which borders Greater London "
    "to the south east. The county town is Aylesbury."
)


@pytest.fixture
def tk():
    return WordTokenizer().fit([BUCKS, "where is it located? how many labels? over 1 million Who was he?",
                                "a former Yale University medical school librarian"])


def test_layout_first_turn(tk):
    p = Passage("b", "wikipedia", BUCKS)
    span = span_of(BUCKS, "Bucks, is a county in South East England")
    enc = encode_cqg_input(p, span, [], tk)
    ids = enc.input_ids
    assert ids.count(tk.hl_open_id) == 1 and ids.count(tk.hl_close_id) == 1
    assert highlighted_text(enc, tk) == "Bucks, is a county in South East England"
    sep = ids.index(tk.sep_id)
    assert ids[sep + 1] == tk.a_id
    assert ids[sep + 2:] == tk.encode("Bucks, is a county in South East England")


def test_tail_truncation(tk):
    text = "start " + " ".join(["filler"] * 50)
    p = Passage("t", "d", text)
    tk.fit([text])
    enc = encode_cqg_input(p, AnswerSpan(0, 5), [], tk, tail_tokens=32)
    close = enc.input_ids.index(tk.hl_close_id)
    assert enc.input_ids.index(tk.sep_id) - close - 1 == 32
    near_end = encode_cqg_input(p, span_of(text, "filler", 48), [], tk)
    close = near_end.input_ids.index(tk.hl_close_id)
    assert near_end.input_ids.index(tk.sep_id) - close - 1 == 1


def test_history_keeps_last_four(tk):
    p = Passage("b", "wikipedia", BUCKS)
    history = [QAPair(i, f"question {i}?", f"answer {i}") for i in range(1, 7)]
    tk.fit([h.question + " " + h.answer for h in history])
    enc = encode_cqg_input(p, span_of(BUCKS, "Aylesbury"), history, tk)
    ids = enc.input_ids
    block = ids[ids.index(tk.sep_id) + 1:]
    expected = []
    for h in history[2:]:
        expected += [tk.a_id] + tk.encode(h.answer) + [tk.q_id] + tk.encode(h.question)
    expected += [tk.a_id] + tk.encode("Aylesbury")
    assert block == expected


def test_span_snaps_to_token_boundaries(tk):
    p = Passage("b", "wikipedia", BUCKS)
    start = BUCKS.index("ounty")
    enc = encode_cqg_input(p, AnswerSpan(start, start + 3), [], tk)
    assert enc.span_text == "county"
    with pytest.raises(ValueError):
        encode_cqg_input(Passage("x", "d", "a  b"), AnswerSpan(1, 2), [], tk)


def test_overflow_left_truncates_prefix(tk):
    text = " ".join(["filler"] * 600) + " Aylesbury"
    tk.fit([text])
    enc = encode_cqg_input(Passage("x", "d", text), span_of(text, "Aylesbury"), [], tk, max_input_len=64)
    assert len(enc.input_ids) <= 64
    assert highlighted_text(enc, tk) == "Aylesbury"
    with pytest.raises(ValueError):
        encode_cqg_input(Passage("x", "d", text), AnswerSpan(0, len(text)), [], tk, max_input_len=64)


@settings(max_examples=60)
@given(st.data())
def test_highlight_round_trip(data):
    tk = WordTokenizer().fit([BUCKS])
    words = [(m.start(), m.end()) for m in __import__("re").finditer(r"\S+", BUCKS)]
    i = data.draw(st.integers(0, len(words) - 1))
    j = data.draw(st.integers(i, min(i + 6, len(words) - 1)))
    span = AnswerSpan(words[i][0], words[j][1])
    enc = encode_cqg_input(Passage("b", "d", BUCKS), span, [], tk)
    assert highlighted_text(enc, tk) == span.text(BUCKS)


# -- targets and parsing --------------------------------------------------------------


def test_target_order(tk):
    ids = encode_cqg_target("Who was he?", "a former Yale University medical school librarian", tk)
    assert ids[0] == tk.q_id and ids[-1] == tk.eos_id
    a = ids.index(tk.a_id)
    assert ids[1:a] == tk.encode("Who was he?")
    assert parse_generation(ids, tk) == ("Who was he?", "a former Yale University medical school librarian")
    with pytest.raises(ValueError):
        encode_cqg_target(" ", "x", tk)


def test_parse_examples(tk):
    assert parse_generation(tk.encode("[Q] how many labels? [A] over 1 million [EOS]"), tk) == (
        "how many labels?", "over 1 million")
    assert parse_generation(tk.encode("[Q] how many labels? [A] over 1 million"), tk) == (
        "how many labels?", "over 1 million")
    padded = tk.encode("[Q] q [A] a [EOS]") + [tk.pad_id] * 3
    assert parse_generation(padded, tk) == ("q", "a")


@pytest.mark.parametrize(
    "raw",
    [
        "[Q] question with no answer marker",
        "question [A] answer",
        "[Q] [A] answer [EOS]",
        "[Q] question [A] [EOS]",
        "[Q] one [Q] two [A] x [EOS]",
        "[Q] one [A] x [A] y [EOS]",
        "",
    ],
)
def test_malformed(raw, tk):
    ids = tk.encode(raw)
    with pytest.raises(GenerationMalformed) as err:
        parse_generation(ids, tk)
    assert err.value.raw == ids


# -- generation with mocks ------------------------------------------------------------------


def test_echo_preserves_span(tk):
    p = Passage("b", "wikipedia", BUCKS)
    enc = encode_cqg_input(p, span_of(BUCKS, "South East England"), [], tk)
    q, a = generate_qa(EchoGenerator(tk), enc, beam_size=4)
    assert a == "South East England"
    assert q == "What about South East England?"
    assert generate_qa(EchoGenerator(tk), enc, beam_size=1) == (q, a)


def test_scripted_reduction(tk):
    p = Passage("b", "wikipedia", BUCKS)
    enc = encode_cqg_input(p, span_of(BUCKS, "Bucks, is a county in South East England"), [], tk)
    gen = ScriptedGenerator(tk, {tk.decode(enc.input_ids): "[Q] where is it located? [A] South East England [EOS]"})
    assert generate_qa(gen, enc, beam_size=4) == ("where is it located?", "South East England")
    with pytest.raises(KeyError):
        generate_qa(ScriptedGenerator(tk, {}), enc)


def test_malformed_generation_surfaces(tk):
    p = Passage("b", "wikipedia", BUCKS)
    enc = encode_cqg_input(p, span_of(BUCKS, "Aylesbury"), [], tk)
    gen = ScriptedGenerator(tk, lambda _: "[Q] where is it [EOS]")
    with pytest.raises(GenerationMalformed):
        generate_qa(gen, enc)
    with pytest.raises(ValueError):
        generate_qa(EchoGenerator(tk), enc, beam_size=0)


class UniformGenerator(SequenceGenerator):
    def __init__(self, tokenizer):
        self.tokenizer = tokenizer

    def next_token_logprobs(self, input_ids, prefixes):
        return np.full((len(prefixes), len(self.tokenizer)), -math.log(len(self.tokenizer)))


def test_loss_closed_forms(tk):
    p = Passage("b", "wikipedia", BUCKS)
    enc = encode_cqg_input(p, span_of(BUCKS, "Aylesbury"), [], tk)
    enc.target_ids = encode_cqg_target("where?", "Aylesbury", tk)
    perfect = TargetMockGenerator(tk, lambda _: enc.target_ids)
    assert cqg_loss(perfect, enc) == 0.0
    assert cqg_loss(UniformGenerator(tk), enc) == pytest.approx(math.log(len(tk)))
    with pytest.raises(ValueError):
        cqg_loss(perfect, CqgEncoding(enc.input_ids))


def test_negative_target_uses_gold(tk):
    p = Passage("b", "wikipedia", BUCKS)
    neg = RevisionExample("b", [], span_of(BUCKS, "Bucks, is a county in South East England"),
                          "South East England", Polarity.NEGATIVE, Method.EXPANSION, question="Where is it?")
    enc = encode_revision_example(neg, p, tk)
    assert parse_generation(enc.target_ids, tk) == ("Where is it?", "South East England")
    assert highlighted_text(enc, tk) == "Bucks, is a county in South East England"
