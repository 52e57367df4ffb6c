from __future__ import annotations

from pathlib import Path

import pytest

from convqa_gen.corpus import (
    AnswerSpan,
    Conversation,
    Dataset,
    Passage,
    QAPair,
    filter_open_ended,
    parse_coqa,
    parse_quac,
    resolve_answer_spans,
)
from convqa_gen.tokenization import WordTokenizer

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def coqa_raw() -> bytes:
    return (DATA / "coqa_sample.json").read_bytes()


@pytest.fixture(scope="session")
def quac_raw() -> bytes:
    return (DATA / "quac_sample.json").read_bytes()


@pytest.fixture
def coqa_ds(coqa_raw) -> Dataset:
    return parse_coqa(coqa_raw)


@pytest.fixture
def coqa_open(coqa_ds) -> Dataset:
    return resolve_answer_spans(filter_open_ended(coqa_ds))


@pytest.fixture
def quac_ds(quac_raw) -> Dataset:
    return parse_quac(quac_raw)


def span_of(text: str, phrase: str, occurrence: int = 0) -> AnswerSpan:
    start = -1
    for _ in range(occurrence + 1):
        start = text.index(phrase, start + 1)
    return AnswerSpan(start, start + len(phrase))


def extractive_dataset(text: str, answers: list[str], pid: str = "p", domain: str = "wikipedia") -> Dataset:
    """One conversation whose answers are the given passage phrases, in order."""
    turns = [
        QAPair(i, f"question {i}?", a, answer_span=span_of(text, a)) for i, a in enumerate(answers, start=1)
    ]
    return Dataset("toy", "train", [Passage(pid, domain, text)], [Conversation(pid, turns)])


@pytest.fixture
def word_tokenizer(coqa_ds, quac_ds) -> WordTokenizer:
    texts = [p.text for p in coqa_ds.passages + quac_ds.passages]
    texts += [t.question + " " + t.answer for d in (coqa_ds, quac_ds) for c in d.conversations for t in c.turns]
    return WordTokenizer().fit(texts)


LEARN_VOCAB = "alpha beta gamma delta river mountain city king queen stone forest bridge tower castle lake village".split()


def learnability_dataset(seed: int = 0) -> Dataset:
    """4 passages of 40 random words, 4 extractive turns each: 16 fixed examples."""
    import random
    import re

    rng = random.Random(seed)
    passages, convs = [], []
    for k in range(4):
        text = " ".join(rng.choice(LEARN_VOCAB) for _ in range(40))
        offs = [(m.start(), m.end()) for m in re.finditer(r"\S+", text)]
        turns = []
        for t in range(1, 5):
            i = rng.randrange(0, 36)
            j = i + rng.randrange(0, 3)
            span = AnswerSpan(offs[i][0], offs[j][1])
            turns.append(QAPair(t, f"what is number {t} {k}?", span.text(text), answer_span=span))
        passages.append(Passage(f"p{k}", "wikipedia", text))
        convs.append(Conversation(f"p{k}", turns))
    return Dataset("learn", "train", passages, convs)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
