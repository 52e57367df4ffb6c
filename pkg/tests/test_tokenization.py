import pytest
from hypothesis import given
from hypothesis import strategies as st

from convqa_gen.tokenization import A, EOS, HL_CLOSE, HL_OPEN, MARKERS, Q, SPACE, WordTokenizer, load_tokenizer

WORDS = ["Slovenia", "has", "2.06", "million", "people", "346,000", "don't", "(", ")", "Bucks,", "England."]


def test_markers_have_fixed_ids():
    tk = WordTokenizer()
    assert [tk.token_to_id(m) for m in MARKERS] == list(range(len(MARKERS)))
    assert tk.q_id == tk.token_to_id(Q) and tk.eos_id == tk.token_to_id(EOS)
    assert len(tk.marker_ids) == len(MARKERS)


def test_fit_registers_both_forms():
    tk = WordTokenizer().fit(["how are you"])
    ids = tk.encode("how are you")
    assert len(ids) == 3
    assert tk.vocab[ids[0]] == "how" and tk.vocab[ids[1]] == SPACE + "are"


def test_oov_falls_back_to_characters():
    tk = WordTokenizer()
    toks = tk.tokenize_with_offsets("zebra")
    assert [(t.start, t.end) for t in toks] == [(i, i + 1) for i in range(5)]
    assert tk.decode(tk.encode("a zebra")) == "a zebra"


def test_offsets_respect_bounds():
    tk = WordTokenizer().fit(["one two three"])
    text = "one two three"
    toks = tk.tokenize_with_offsets(text, 4, 13)
    assert [text[t.start:t.end] for t in toks] == ["two", "three"]


def test_encode_marker_aware():
    tk = WordTokenizer().fit(["who is he", "a man"])
    ids = tk.encode(f"{Q} who is he {A} a man {EOS}")
    assert ids[0] == tk.q_id and ids[-1] == tk.eos_id and tk.a_id in ids
    assert tk.decode(ids, skip_special_tokens=True) == "who is he a man"
    assert tk.decode(ids) == f"{Q} who is he {A} a man {EOS}"
    assert tk.decode(tk.encode(f"x {HL_OPEN} y {HL_CLOSE} z")) == f"x {HL_OPEN} y {HL_CLOSE} z"


@given(st.lists(st.sampled_from(WORDS + ["zq"]), min_size=1, max_size=12))
def test_single_spaced_round_trip(words):
    tk = WordTokenizer().fit([" ".join(WORDS)])
    text = " ".join(words)
    assert tk.decode(tk.encode(text)) == text


def test_save_load(tmp_path):
    tk = WordTokenizer().fit(["alpha beta"])
    tk.save(tmp_path)
    again = load_tokenizer(tmp_path)
    assert again.vocab == tk.vocab
    tk.save(tmp_path / "v.json")
    assert load_tokenizer(tmp_path / "v.json").vocab == tk.vocab


def test_unknown_token_lookup_raises():
    with pytest.raises(KeyError):
        WordTokenizer().token_to_id("nope-not-there")


def test_unseen_non_ascii_maps_to_unk():
    tk = WordTokenizer()
    assert tk.encode("Ü") == [tk.token_to_id("[UNK]")]
