"""Downstream conversational QA: input encoding, answering, evaluation, adaptation regimes."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .corpus import Dataset, Passage, QAPair
from .metrics import MetricReport, aggregate


def encode_cqa_input(
    passage: Passage, history: Sequence[QAPair], question: str, tokenizer, max_input_len: int = 512
) -> list[int]:
    """``passage [SEP] ([Q] q [A] a)* [Q] question``, cutting the passage tail first.

    If history and question alone exceed the budget, the oldest turns go.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    turns = [
        [tokenizer.q_id] + tokenizer.encode(t.question) + [tokenizer.a_id] + tokenizer.encode(t.answer)
        for t in history
    ]
    tail = [tokenizer.q_id] + tokenizer.encode(question)
    while turns and 1 + sum(map(len, turns)) + len(tail) > max_input_len:
        turns.pop(0)
    suffix = [tokenizer.sep_id] + [i for turn in turns for i in turn] + tail
    budget = max(0, max_input_len - len(suffix))
    passage_ids = [t.id for t in tokenizer.tokenize_with_offsets(passage.text)][:budget]
    return passage_ids + suffix


def encode_cqa_target(answer: str, tokenizer) -> list[int]:
    return [tokenizer.a_id] + tokenizer.encode(answer) + [tokenizer.eos_id]


def answer(gen, input_ids: Sequence[int], beam_size: int = 1, max_new_tokens: int = 64) -> str:
    """Decode an answer starting from ``[A]``; markers are stripped."""
    tk = gen.tokenizer
    out = gen.generate(input_ids, beam_size=beam_size, max_new_tokens=max_new_tokens, bos_id=tk.a_id, eos_id=tk.eos_id)
    return tk.decode(out, skip_special_tokens=True).strip()


@dataclass
class EvaluationReport:
    per_domain: dict[str, MetricReport]
    overall: MetricReport
    dataset: str = ""
    regime: str = ""

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "regime": self.regime,
            "per_domain": [{"domain": d, **asdict(r)} for d, r in sorted(self.per_domain.items())],
            "overall": asdict(self.overall),
        }


def cqa_examples(ds: Dataset) -> Iterable[tuple[Passage, list[QAPair], QAPair]]:
    """(passage, gold history, turn) for every turn of every conversation."""
    passages = ds.passage_map()
    for conv in ds.conversations:
        for t, turn in enumerate(conv.turns):
            yield passages[conv.passage_id], conv.turns[:t], turn


def evaluate(gen, ds: Dataset, beam_size: int = 1, max_input_len: int = 512, name: str = "") -> EvaluationReport:
    """Per-domain and overall F1/EM with gold previous turns as history."""
    pairs: dict[str, list] = defaultdict(list)
    for passage, history, turn in cqa_examples(ds):
        ids = encode_cqa_input(passage, history, turn.question, gen.tokenizer, max_input_len)
        pairs[passage.domain].append((answer(gen, ids, beam_size), turn.golds))
    per_domain = {d: aggregate(p) for d, p in pairs.items()}
    overall = aggregate(x for p in pairs.values() for x in p)
    return EvaluationReport(per_domain, overall, dataset=name or ds.name)


def evaluate_predictions(predictions: Mapping[tuple[str, int], str], ds: Dataset, name: str = "") -> EvaluationReport:
    """Score precomputed answers keyed by ``(passage_id, turn_index)``; missing ones score as empty."""
    domains = {p.id: p.domain for p in ds.passages}
    pairs: dict[str, list] = defaultdict(list)
    for conv in ds.conversations:
        for turn in conv.turns:
            pred = predictions.get((conv.passage_id, turn.turn_index), "")
            pairs[domains[conv.passage_id]].append((pred, turn.golds))
    per_domain = {d: aggregate(p) for d, p in pairs.items()}
    overall = aggregate(x for p in pairs.values() for x in p)
    return EvaluationReport(per_domain, overall, dataset=name or ds.name)


# ---------------------------------------------------------------------------
# regimes


class RegimeName(str, Enum):
    IN_MAN = "InMan"
    OUT_SYN = "OutSyn"
    IN_MAN_THEN_OUT_SYN = "InManThenOutSyn"


@dataclass
class Stage:
    dataset: str
    epochs: int = 2
    lr: float = 3e-5
    batch_size: int = 4


@dataclass
class CqaRegime:
    name: RegimeName
    stages: list[Stage] = field(default_factory=list)

    def __post_init__(self):
        self.name = RegimeName(self.name)
        self.stages = [s if isinstance(s, Stage) else Stage(**s) for s in self.stages]
        expected = 2 if self.name is RegimeName.IN_MAN_THEN_OUT_SYN else 1
        if len(self.stages) != expected:
            raise ValueError(f"{self.name.value} needs exactly {expected} stage(s), got {len(self.stages)}")

    @classmethod
    def in_man(cls, human: str, epochs: int = 2, lr: float = 3e-5, batch_size: int = 4) -> "CqaRegime":
        return cls(RegimeName.IN_MAN, [Stage(human, epochs, lr, batch_size)])

    @classmethod
    def out_syn(cls, synthetic: str, epochs: int = 2, lr: float = 3e-5, batch_size: int = 4) -> "CqaRegime":
        return cls(RegimeName.OUT_SYN, [Stage(synthetic, epochs, lr, batch_size)])

    @classmethod
    def in_man_then_out_syn(
        cls, human: str, synthetic: str, epochs: int = 2, lr: float = 3e-5, finetune_lr: float = 1e-6
    ) -> "CqaRegime":
        """Second stage: one epoch, batch size 1, a learning rate in [1e-7, 1e-6]."""
        if not 1e-7 <= finetune_lr <= 1e-6:
            raise ValueError("fine-tuning learning rate must lie in [1e-7, 1e-6]")
        return cls(RegimeName.IN_MAN_THEN_OUT_SYN, [Stage(human, epochs, lr, 4), Stage(synthetic, 1, finetune_lr, 1)])

    def to_dict(self) -> dict:
        return {"name": self.name.value, "stages": [asdict(s) for s in self.stages]}

    @classmethod
    def from_dict(cls, data: dict) -> "CqaRegime":
        return cls(data["name"], data["stages"])


Trainer = Callable[..., object]


def run_regime(
    regime: CqaRegime,
    datasets: Mapping[str, Dataset],
    trainer: Trainer,
    model,
    eval_dataset: Dataset | None = None,
    beam_size: int = 1,
) -> tuple[object, dict]:
    """Run the stages in order with ``trainer(model, dataset, epochs=, lr=, batch_size=)``.

    All stage datasets are checked before any training starts.
    """
    missing = [s.dataset for s in regime.stages if s.dataset not in datasets]
    if missing:
        raise KeyError(f"regime {regime.name.value} needs missing dataset(s): {missing}")
    for stage in regime.stages:
        model = trainer(model, datasets[stage.dataset], epochs=stage.epochs, lr=stage.lr, batch_size=stage.batch_size)
    report = {"regime": regime.to_dict()}
    if eval_dataset is not None:
        ev = evaluate(model, eval_dataset, beam_size=beam_size)
        ev.regime = regime.name.value
        report["evaluation"] = ev.to_dict()
    return model, report


def t5_trainer(gen, ds: Dataset, epochs: int, lr: float, batch_size: int, max_input_len: int = 512, seed: int = 0):
    """Trainer for :class:`~convqa_gen.models.T5Generator` backends."""
    pairs = [
        (encode_cqa_input(p, h, t.question, gen.tokenizer, max_input_len), encode_cqa_target(t.answer, gen.tokenizer))
        for p, h, t in cqa_examples(ds)
    ]
    gen.fit_pairs(pairs, epochs=epochs, lr=lr, batch_size=batch_size, seed=seed)
    return gen


# ---------------------------------------------------------------------------
# result tables


def domain_table(reports: Mapping[str, EvaluationReport], domains: Sequence[str]) -> list[list[str]]:
    """Rows of ``training data | F1 / EM per domain`` in percent, one row per report."""
    rows = [["Training data", *domains]]
    for label, rep in reports.items():
        cells = []
        for d in domains:
            r = rep.per_domain.get(d)
            cells.append(f"{100 * r.f1:.1f} / {100 * r.em:.1f}" if r else "-")
        rows.append([label, *cells])
    return rows


def size_table(reports: Mapping[str, tuple[int, EvaluationReport]]) -> list[list[str]]:
    """Rows of ``training data | #training examples | overall F1`` for single-domain test sets."""
    rows = [["Training data", "#Training examples", "F1"]]
    for label, (n_train, rep) in reports.items():
        rows.append([label, f"{n_train / 1000:.1f}k" if n_train >= 1000 else str(n_train), f"{100 * rep.overall.f1:.1f}"])
    return rows


def regime_em_table(reports: Mapping[str, Mapping[str, EvaluationReport]], domains: Sequence[str]) -> list[list[str]]:
    """EM (percent) per domain for each regime; ``reports[regime][domain]`` is the
    evaluation of the model trained for that domain."""
    rows = [["Regime", *domains]]
    for regime, by_domain in reports.items():
        cells = []
        for d in domains:
            rep = by_domain.get(d)
            r = rep.per_domain.get(d) if rep else None
            cells.append(f"{100 * r.em:.1f}" if r else "-")
        rows.append([regime, *cells])
    return rows


def format_table(rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    return "\n".join(" | ".join(str(c).ljust(w) for c, w in zip(r, widths)) for r in rows)


class ConversationalQAModel(BaseEstimator):
    """Estimator over a sequence generator that answers conversational questions."""

    def __init__(
        self,
        generator=None,
        beam_size: int = 1,
        max_input_len: int = 512,
        epochs: int = 2,
        learning_rate: float = 3e-5,
        batch_size: int = 4,
        model_size: str = "tiny",
        seed: int = 0,
    ):
        self.generator = generator
        self.beam_size = beam_size
        self.max_input_len = max_input_len
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.model_size = model_size
        self.seed = seed

    def fit(self, X: Dataset, y=None):
        from .models import T5Generator
        from .validation import check_dataset

        check_dataset(X)
        gen = self.generator
        if gen is None:
            texts = [p.text for p in X.passages] + [t.question + " " + t.answer for c in X.conversations for t in c.turns]
            gen = T5Generator.from_texts(texts, size=self.model_size, seed=self.seed)
        if hasattr(gen, "fit_pairs"):
            t5_trainer(gen, X, self.epochs, self.learning_rate, self.batch_size, self.max_input_len, self.seed)
        self.generator_ = gen
        return self

    def predict(self, X: Iterable[tuple[Passage, Sequence[QAPair], str]]) -> list[str]:
        check_is_fitted(self, "generator_")
        return [
            answer(self.generator_, encode_cqa_input(p, h, q, self.generator_.tokenizer, self.max_input_len),
                   self.beam_size)
            for p, h, q in X
        ]

    def score(self, X: Dataset, y=None) -> float:
        check_is_fitted(self, "generator_")
        return evaluate(self.generator_, X, self.beam_size, self.max_input_len).overall.f1
