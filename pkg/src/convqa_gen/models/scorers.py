"""Span scorers: a scripted mock and a BERT-style encoder with two span heads."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from torch import nn

from ..cae import EncodedWindow
from ..tokenization import WordTokenizer, load_tokenizer
from .training import seed_everything, train_loop

_PUNCT_END = frozenset(",.;:!?)")


def _softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max())
    return z / z.sum()


class ScriptedSpanScorer:
    """Deterministic mock scorer.

    ``script`` maps ``(passage_id, turn)`` to one or more ``(start_char,
    end_char)`` peaks; the start/end mass is split evenly across peaks that
    fall inside the window. Unscripted turns use a surface heuristic that
    prefers capitalized or numeric starts and ends before punctuation.
    """

    concurrent_safe = True

    def __init__(self, tokenizer=None, script: Mapping | None = None, max_input_len: int = 512):
        self.tokenizer = tokenizer or WordTokenizer()
        self.script = {}
        for key, peaks in (script or {}).items():
            if peaks and isinstance(peaks[0], int):
                peaks = [peaks]
            self.script[tuple(key)] = [tuple(p) for p in peaks]
        self.max_input_len = max_input_len

    @classmethod
    def from_file(cls, path: str | Path, tokenizer=None, **kwargs) -> "ScriptedSpanScorer":
        """Load a script: ``[{"passage_id", "turn", "peaks": [[s, e], ...]}, ...]``."""
        rows = json.loads(Path(path).read_text())
        script = {(r["passage_id"], int(r["turn"])): r["peaks"] for r in rows}
        return cls(tokenizer, script, **kwargs)

    def score(self, window: EncodedWindow) -> tuple[np.ndarray, np.ndarray]:
        n = len(window.token_ids)
        positions = list(window.passage_positions)
        start = np.zeros(n)
        end = np.zeros(n)
        if not positions:
            # nothing to point at; uniform keeps each vector a distribution
            return np.full(n, 1.0 / n), np.full(n, 1.0 / n)
        peaks = self.script.get((window.passage_id, window.turn))
        if peaks is not None:
            hits = []
            for s, e in peaks:
                i, j = window.position_of_char(s), window.position_of_char(e - 1)
                if i is not None and j is not None:
                    hits.append((i, j))
            if hits:
                for i, j in hits:
                    start[i] += 1.0 / len(hits)
                    end[j] += 1.0 / len(hits)
                return start, end
            start[positions] = end[positions] = 1.0 / len(positions)
            return start, end
        return self._heuristic(window, positions)

    def _heuristic(self, window: EncodedWindow, positions: list[int]):
        n = len(window.token_ids)
        words = [self.tokenizer.decode([window.token_ids[p]]) for p in positions]
        s_logit = np.empty(len(positions))
        e_logit = np.empty(len(positions))
        for idx, w in enumerate(words):
            salient = w[:1].isupper() or w[:1].isdigit()
            after_break = idx == 0 or words[idx - 1] in _PUNCT_END
            before_break = idx + 1 == len(words) or words[idx + 1] in _PUNCT_END
            s_logit[idx] = 2.0 * salient + 1.0 * after_break - 0.01 * idx - 3.0 * (w in _PUNCT_END)
            e_logit[idx] = 2.0 * before_break + 1.0 * salient - 0.01 * idx - 3.0 * (w in _PUNCT_END)
        start = np.zeros(n)
        end = np.zeros(n)
        start[positions] = _softmax(s_logit)
        end[positions] = _softmax(e_logit)
        return start, end


class SpanHeadModel(nn.Module):
    """Bidirectional encoder with independent start and end projections."""

    def __init__(self, encoder):
        super().__init__()
        self.encoder = encoder
        hidden = encoder.config.hidden_size
        self.start_head = nn.Linear(hidden, 1)
        self.end_head = nn.Linear(hidden, 1)

    def forward(self, input_ids, attention_mask, passage_mask):
        h = self.encoder(input_ids=input_ids, attention_mask=attention_mask).last_hidden_state
        neg = torch.finfo(h.dtype).min
        start = self.start_head(h).squeeze(-1).masked_fill(~passage_mask, neg)
        end = self.end_head(h).squeeze(-1).masked_fill(~passage_mask, neg)
        return start.log_softmax(-1), end.log_softmax(-1)


_SIZES = {
    "tiny": dict(hidden_size=64, num_hidden_layers=2, num_attention_heads=2, intermediate_size=128),
    "small": dict(hidden_size=256, num_hidden_layers=4, num_attention_heads=4, intermediate_size=1024),
}


class TorchSpanScorer:
    """Trainable span scorer over a Hugging Face BERT encoder.

    Probabilities are restricted to passage positions of the window.
    """

    concurrent_safe = False

    def __init__(self, model: SpanHeadModel, tokenizer, max_input_len: int = 512):
        self.model = model.eval()
        self.tokenizer = tokenizer
        self.max_input_len = max_input_len

    @classmethod
    def from_config(cls, tokenizer, size: str = "tiny", max_input_len: int = 512, seed: int = 0):
        from transformers import BertConfig, BertModel

        seed_everything(seed)
        config = BertConfig(
            vocab_size=len(tokenizer),
            max_position_embeddings=max_input_len,
            pad_token_id=tokenizer.pad_id,
            **_SIZES[size],
        )
        return cls(SpanHeadModel(BertModel(config, add_pooling_layer=False)), tokenizer, max_input_len)

    @classmethod
    def from_corpus(cls, ds, size: str = "tiny", max_input_len: int = 512, seed: int = 0):
        texts = [p.text for p in ds.passages]
        texts += [t.question + " " + t.answer for c in ds.conversations for t in c.turns]
        return cls.from_config(WordTokenizer().fit(texts), size, max_input_len, seed)

    @classmethod
    def from_pretrained(cls, path: str | Path, max_input_len: int = 512):
        """Load a saved scorer, or wrap a plain pretrained encoder directory."""
        from transformers import AutoModel

        path = Path(path)
        tokenizer = load_tokenizer(path)
        if (path / "span_heads.pt").is_file():
            meta = json.loads((path / "scorer.json").read_text())
            encoder = AutoModel.from_pretrained(str(path / "encoder"))
            model = SpanHeadModel(encoder)
            model.load_state_dict(torch.load(path / "span_heads.pt"), strict=False)
            return cls(model, tokenizer, meta.get("max_input_len", max_input_len))
        encoder = AutoModel.from_pretrained(str(path), add_pooling_layer=False)
        encoder.resize_token_embeddings(len(tokenizer))
        return cls(SpanHeadModel(encoder), tokenizer, max_input_len)

    def save(self, path: str | Path) -> None:
        from ..tokenization import MARKERS

        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        self.model.encoder.save_pretrained(str(path / "encoder"))
        heads = {k: v for k, v in self.model.state_dict().items() if not k.startswith("encoder.")}
        torch.save(heads, path / "span_heads.pt")
        self.tokenizer.save(path)
        meta = {"max_input_len": self.max_input_len, "markers": list(MARKERS)}
        (path / "scorer.json").write_text(json.dumps(meta, indent=2))

    def _batch(self, windows: Sequence[EncodedWindow]):
        width = max(len(w.token_ids) for w in windows)
        ids = torch.full((len(windows), width), self.tokenizer.pad_id, dtype=torch.long)
        attn = torch.zeros((len(windows), width), dtype=torch.long)
        pmask = torch.zeros((len(windows), width), dtype=torch.bool)
        for b, w in enumerate(windows):
            ids[b, :len(w.token_ids)] = torch.tensor(w.token_ids)
            attn[b, :len(w.token_ids)] = 1
            pmask[b, list(w.passage_positions)] = True
        return ids, attn, pmask

    @torch.no_grad()
    def score(self, window: EncodedWindow) -> tuple[np.ndarray, np.ndarray]:
        ids, attn, pmask = self._batch([window])
        if not pmask.any():
            n = len(window.token_ids)
            return np.full(n, 1.0 / n), np.full(n, 1.0 / n)
        start, end = self.model(ids, attn, pmask)
        return start[0].exp().double().numpy(), end[0].exp().double().numpy()

    def batch_loss(self, batch) -> torch.Tensor:
        windows = [w for w, _, _ in batch]
        ids, attn, pmask = self._batch(windows)
        start, end = self.model(ids, attn, pmask)
        gs = torch.tensor([i for _, i, _ in batch])
        ge = torch.tensor([j for _, _, j in batch])
        rows = torch.arange(len(batch))
        return -(start[rows, gs] + end[rows, ge]).mean()

    def fit_windows(
        self,
        examples: Sequence[tuple[EncodedWindow, int, int]],
        epochs: int = 2,
        lr: float = 3e-5,
        batch_size: int = 4,
        warmup_ratio: float = 0.1,
        seed: int = 0,
    ) -> list[float]:
        seed_everything(seed)
        return train_loop(self.model, list(examples), self.batch_loss, epochs, lr, batch_size, warmup_ratio, seed)
