"""Tokenizer adapters shared by the span scorer and the sequence generators.

Every adapter exposes the same small surface: character offsets for passage
tokens, marker-aware ``encode``/``decode`` and the ids of the fixed marker
vocabulary below.
"""
from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

PAD = "[PAD]"
UNK = "[UNK]"
CLS = "[CLS]"
SEP = "[SEP]"
Q = "[Q]"
A = "[A]"
HL_OPEN = "[HL]"
HL_CLOSE = "[/HL]"
EOS = "[EOS]"

MARKERS = (PAD, UNK, CLS, SEP, Q, A, HL_OPEN, HL_CLOSE, EOS)
_MARKER_RE = re.compile("(" + "|".join(re.escape(m) for m in MARKERS) + ")")

SPACE = "▁"
WORD_VOCAB_FILE = "word_vocab.json"
# numerals and contractions stay whole ("2.06", "346,000", "don't")
_PIECE_RE = re.compile(r"\w+(?:[.,'’]\w+)*|[^\w\s]")


@dataclass(frozen=True)
class Token:
    id: int
    start: int
    end: int


class TokenizerBase:
    """Marker-id properties on top of ``token_to_id``."""

    def token_to_id(self, token: str) -> int:
        raise NotImplementedError

    @property
    def pad_id(self) -> int:
        return self.token_to_id(PAD)

    @property
    def cls_id(self) -> int:
        return self.token_to_id(CLS)

    @property
    def sep_id(self) -> int:
        return self.token_to_id(SEP)

    @property
    def q_id(self) -> int:
        return self.token_to_id(Q)

    @property
    def a_id(self) -> int:
        return self.token_to_id(A)

    @property
    def hl_open_id(self) -> int:
        return self.token_to_id(HL_OPEN)

    @property
    def hl_close_id(self) -> int:
        return self.token_to_id(HL_CLOSE)

    @property
    def eos_id(self) -> int:
        return self.token_to_id(EOS)

    @property
    def marker_ids(self) -> frozenset[int]:
        return frozenset(self.token_to_id(m) for m in MARKERS)


class WordTokenizer(TokenizerBase):
    """Word-level tokenizer with a leading-space marker and character fallback.

    Pieces carry ``▁`` when preceded by whitespace, so ``decode`` inverts
    ``encode`` on single-spaced text. Out-of-vocabulary words fall back to
    single characters, which are always in the vocabulary.
    """

    def __init__(self, vocab: Iterable[str] | None = None):
        base = list(MARKERS)
        for ch in string.printable:
            if not ch.isspace():
                base += [ch, SPACE + ch]
        seen = dict.fromkeys(base)
        for tok in vocab or ():
            seen.setdefault(tok)
        self.vocab = list(seen)
        self._ids = {tok: i for i, tok in enumerate(self.vocab)}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def __len__(self) -> int:
        return len(self.vocab)

    def token_to_id(self, token: str) -> int:
        return self._ids[token]

    @staticmethod
    def _pieces(text: str, start: int = 0, end: int | None = None):
        end = len(text) if end is None else end
        for m in _PIECE_RE.finditer(text, start, end):
            spaced = m.start() > 0 and text[m.start() - 1].isspace()
            yield (SPACE if spaced else "") + m.group(), m.start(), m.end()

    def fit(self, texts: Iterable[str], min_count: int = 1) -> "WordTokenizer":
        counts: dict[str, int] = {}
        for text in texts:
            for chunk in _MARKER_RE.split(text):
                if chunk in MARKERS:
                    continue
                for piece, _, _ in self._pieces(chunk):
                    word = piece.removeprefix(SPACE)
                    counts[word] = counts.get(word, 0) + 1
        new = []
        for word, c in sorted(counts.items()):
            if c >= min_count:
                new += [word, SPACE + word]
        self.__init__(self.vocab + new)
        return self

    def tokenize_with_offsets(self, text: str, start: int = 0, end: int | None = None) -> list[Token]:
        out = []
        for piece, s, e in self._pieces(text, start, end):
            if piece in self._ids:
                out.append(Token(self._ids[piece], s, e))
                continue
            for k, ch in enumerate(text[s:e]):
                form = (SPACE + ch) if k == 0 and piece.startswith(SPACE) else ch
                out.append(Token(self._ids.get(form, self._ids[UNK]), s + k, s + k + 1))
        return out

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        pos = 0
        for chunk in _MARKER_RE.split(text):
            if chunk in MARKERS:
                ids.append(self._ids[chunk])
            elif chunk:
                # tokenized in place so the leading-space flag sees the marker gap
                ids.extend(t.id for t in self.tokenize_with_offsets(text, pos, pos + len(chunk)))
            pos += len(chunk)
        return ids

    def decode(self, ids: Iterable[int], skip_special_tokens: bool = False) -> str:
        parts = []
        for i in ids:
            tok = self.vocab[i]
            if tok in MARKERS:
                if not skip_special_tokens:
                    parts.append(" " + tok + " ")
                continue
            parts.append(" " + tok[1:] if tok.startswith(SPACE) else tok)
        return re.sub(r" {2,}", " ", "".join(parts)).strip()

    def save(self, path: str | Path) -> None:
        path = Path(path)
        if path.is_dir():
            path = path / WORD_VOCAB_FILE
        path.write_text(json.dumps({"kind": "word", "vocab": self.vocab}, ensure_ascii=False))

    @classmethod
    def load(cls, path: str | Path) -> "WordTokenizer":
        data = json.loads(Path(path).read_text())
        return cls(data["vocab"])


class HFTokenizer(TokenizerBase):
    """Adapter over a Hugging Face fast tokenizer with the markers added."""

    def __init__(self, tokenizer):
        existing = set(tokenizer.get_vocab())
        missing = [m for m in MARKERS if m not in existing]
        if missing:
            tokenizer.add_special_tokens({"additional_special_tokens": missing})
        self.tk = tokenizer

    @classmethod
    def from_pretrained(cls, name_or_path: str) -> "HFTokenizer":
        from transformers import AutoTokenizer

        return cls(AutoTokenizer.from_pretrained(name_or_path, use_fast=True))

    @property
    def vocab_size(self) -> int:
        return len(self.tk)

    def __len__(self) -> int:
        return len(self.tk)

    def token_to_id(self, token: str) -> int:
        return self.tk.convert_tokens_to_ids(token)

    def tokenize_with_offsets(self, text: str) -> list[Token]:
        enc = self.tk(text, add_special_tokens=False, return_offsets_mapping=True)
        return [Token(i, s, e) for i, (s, e) in zip(enc["input_ids"], enc["offset_mapping"]) if e > s]

    def encode(self, text: str) -> list[int]:
        return self.tk(text, add_special_tokens=False)["input_ids"]

    def decode(self, ids: Iterable[int], skip_special_tokens: bool = False) -> str:
        return self.tk.decode(list(ids), skip_special_tokens=skip_special_tokens).strip()

    def save(self, path: str | Path) -> None:
        self.tk.save_pretrained(str(path))


def load_tokenizer(path: str | Path):
    path = Path(path)
    if path.is_file():
        return WordTokenizer.load(path)
    if (path / WORD_VOCAB_FILE).is_file():
        return WordTokenizer.load(path / WORD_VOCAB_FILE)
    return HFTokenizer.from_pretrained(str(path))
