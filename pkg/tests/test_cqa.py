import pytest

from conftest import extractive_dataset
from convqa_gen.corpus import Conversation, Dataset, Passage, QAPair
from convqa_gen.cqa import (
    CqaRegime,
    EvaluationReport,
    RegimeName,
    Stage,
    answer,
    domain_table,
    encode_cqa_input,
    encode_cqa_target,
    evaluate,
    evaluate_predictions,
    format_table,
    regime_em_table,
    run_regime,
)
from convqa_gen.metrics import MetricReport
from convqa_gen.models import TargetMockGenerator
from convqa_gen.tokenization import WordTokenizer

TEXT = "Discogs was founded by Kevin Lewandowski in 2000."


@pytest.fixture
def tk():
    return WordTokenizer().fit([TEXT, "who founded it when"])


def test_encoding_layout(tk):
    p = Passage("p", "d", TEXT)
    ids = encode_cqa_input(p, [], "who founded it?", tk)
    assert ids == tk.encode(TEXT) + [tk.sep_id, tk.q_id] + tk.encode("who founded it?")
    h = [QAPair(1, "who founded it?", "Kevin"), QAPair(2, "when?", "2000")]
    ids = encode_cqa_input(p, h, "where?", tk)
    tail = ids[ids.index(tk.sep_id) + 1:]
    assert tk.decode(tail) == "[Q] who founded it? [A] Kevin [Q] when? [A] 2000 [Q] where?"
    with pytest.raises(ValueError):
        encode_cqa_input(p, [], "  ", tk)


def test_long_passage_keeps_suffix(tk):
    text = " ".join(["word"] * 10_000)
    tk.fit([text])
    h = [QAPair(1, "who founded it?", "Kevin")]
    ids = encode_cqa_input(Passage("p", "d", text), h, "when?", tk, max_input_len=512)
    assert len(ids) == 512
    suffix = [tk.sep_id, tk.q_id] + tk.encode("who founded it?") + [tk.a_id] + tk.encode("Kevin") + [tk.q_id]
    suffix += tk.encode("when?")
    assert ids[-len(suffix):] == suffix


def test_target(tk):
    assert encode_cqa_target("Kevin", tk) == [tk.a_id] + tk.encode("Kevin") + [tk.eos_id]


def oracle(tk, ds, drop_last=False):
    """Generator that answers every question with its gold answer."""
    golds = {}
    for conv in ds.conversations:
        for t, turn in enumerate(conv.turns):
            p = ds.passage_map()[conv.passage_id]
            key = tuple(encode_cqa_input(p, conv.turns[:t], turn.question, tk))
            gold = tk.encode(turn.answer)
            golds[key] = [tk.a_id] + (gold[:-1] if drop_last else gold) + [tk.eos_id]
    return TargetMockGenerator(tk, lambda ids: golds[tuple(ids)])


def two_domain(tk):
    a = extractive_dataset(TEXT, ["Kevin Lewandowski", "2000"], pid="a", domain="wikipedia")
    b_text = "The county town is Aylesbury in Bucks."
    tk.fit([b_text])
    b = extractive_dataset(b_text, ["Aylesbury", "Bucks", "The county town"], pid="b", domain="cnn")
    return Dataset("toy", "test", a.passages + b.passages, a.conversations + b.conversations)


def test_perfect_mock(tk):
    ds = two_domain(tk)
    rep = evaluate(oracle(tk, ds), ds)
    assert set(rep.per_domain) == {"wikipedia", "cnn"}
    assert all(r.f1 == r.em == 1.0 for r in rep.per_domain.values())
    assert rep.overall == MetricReport(1.0, 1.0, 5)


def test_near_miss_and_weighting(tk):
    ds = two_domain(tk)
    rep = evaluate(oracle(tk, ds, drop_last=True), ds)
    assert rep.overall.em < 1.0
    weighted = sum(r.f1 * r.count for r in rep.per_domain.values()) / rep.overall.count
    assert rep.overall.f1 == pytest.approx(weighted, abs=1e-12)
    # "Kevin Lewandowski" minus its last token: P=1, R=1/2
    assert rep.per_domain["wikipedia"].f1 == pytest.approx((2 / 3 + 0.0) / 2)
    for r in [*rep.per_domain.values(), rep.overall]:
        assert r.em <= r.f1 + 1e-9


def test_answer_is_deterministic(tk):
    ds = two_domain(tk)
    gen = oracle(tk, ds)
    p = ds.passages[0]
    ids = encode_cqa_input(p, [], ds.conversations[0].turns[0].question, tk)
    assert answer(gen, ids) == answer(gen, ids) == "Kevin Lewandowski"


def test_evaluation_leaves_dataset_untouched(tk):
    ds = two_domain(tk)
    before = repr(ds)
    evaluate(oracle(tk, ds), ds)
    assert repr(ds) == before


def test_evaluate_predictions(tk):
    ds = two_domain(tk)
    preds = {("a", 1): "Kevin Lewandowski", ("b", 2): "Bucks"}
    rep = evaluate_predictions(preds, ds)
    assert rep.overall.count == 5 and rep.overall.em == pytest.approx(2 / 5)
    d = rep.to_dict()
    assert [row["domain"] for row in d["per_domain"]] == ["cnn", "wikipedia"]
    assert set(d) == {"dataset", "regime", "per_domain", "overall"}


# -- regimes ------------------------------------------------------------------------


def test_regime_constructors():
    assert CqaRegime.in_man("human").stages == [Stage("human")]
    two = CqaRegime.in_man_then_out_syn("human", "syn")
    assert two.stages[1] == Stage("syn", 1, 1e-6, 1)
    with pytest.raises(ValueError):
        CqaRegime(RegimeName.IN_MAN_THEN_OUT_SYN, [Stage("human")])
    with pytest.raises(ValueError):
        CqaRegime.in_man_then_out_syn("human", "syn", finetune_lr=1e-5)
    assert CqaRegime.from_dict(two.to_dict()) == two


def test_run_regime_order_and_missing(tk):
    calls = []

    def trainer(model, ds, epochs, lr, batch_size):
        calls.append((ds.name, epochs, lr, batch_size))
        return model

    ds = two_domain(tk)
    human = Dataset("human", "train", ds.passages, ds.conversations)
    syn = Dataset("syn", "train", ds.passages, ds.conversations)
    regime = CqaRegime.in_man_then_out_syn("human", "syn", finetune_lr=5e-7)
    gen = oracle(tk, ds)
    model, report = run_regime(regime, {"human": human, "syn": syn}, trainer, gen, eval_dataset=ds)
    assert model is gen
    assert calls == [("human", 2, 3e-5, 4), ("syn", 1, 5e-7, 1)]
    assert report["regime"] == regime.to_dict()
    assert report["evaluation"]["regime"] == "InManThenOutSyn"
    calls.clear()
    with pytest.raises(KeyError):
        run_regime(regime, {"human": human}, trainer, gen)
    assert calls == []


def test_tables():
    rep = EvaluationReport({"cnn": MetricReport(0.831, 0.738, 10)}, MetricReport(0.831, 0.738, 10))
    rows = domain_table({"In-Man": rep}, ["cnn", "race"])
    assert rows == [["Training data", "cnn", "race"], ["In-Man", "83.1 / 73.8", "-"]]
    em = regime_em_table({"InMan": {"cnn": rep}, "OutSyn": {}}, ["cnn"])
    assert em == [["Regime", "cnn"], ["InMan", "73.8"], ["OutSyn", "-"]]
    assert format_table(rows).splitlines()[1].startswith("In-Man")


def test_size_table():
    from convqa_gen.cqa import size_table

    rep = EvaluationReport({"cooking": MetricReport(0.451, 0.3, 10)}, MetricReport(0.451, 0.3, 10))
    rows = size_table({"Human-annotated": (3700, rep), "Synthetic": (470, rep)})
    assert rows == [["Training data", "#Training examples", "F1"], ["Human-annotated", "3.7k", "45.1"],
                    ["Synthetic", "470", "45.1"]]
