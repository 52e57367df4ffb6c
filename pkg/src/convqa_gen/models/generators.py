"""Sequence generators: scripted mocks and a T5 encoder-decoder backend."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import torch

from ..decoding import beam_search
from ..tokenization import MARKERS, WordTokenizer, load_tokenizer
from .training import seed_everything, train_loop

_FLOOR = -1e9


class SequenceGenerator:
    """Base contract.

    Subclasses supply :meth:`next_token_logprobs`; decoding and teacher-forced
    loss are derived from it. The first target token is the decoder start
    marker and is conditioned on, not predicted.
    """

    concurrent_safe = False
    tokenizer = None

    def next_token_logprobs(self, input_ids: Sequence[int], prefixes: list[list[int]]) -> np.ndarray:
        raise NotImplementedError

    def generate(
        self,
        input_ids: Sequence[int],
        beam_size: int = 4,
        max_new_tokens: int = 128,
        bos_id: int | None = None,
        eos_id: int | None = None,
        length_penalty: float = 1.0,
    ) -> list[int]:
        bos_id = self.tokenizer.q_id if bos_id is None else bos_id
        eos_id = self.tokenizer.eos_id if eos_id is None else eos_id
        step = lambda prefixes: self.next_token_logprobs(input_ids, prefixes)
        return beam_search(step, bos_id, eos_id, beam_size, max_new_tokens, length_penalty)

    def loss(self, input_ids: Sequence[int], target_ids: Sequence[int]) -> float:
        """Mean cross-entropy over target tokens after the start marker."""
        target = list(target_ids)
        if len(target) < 2:
            raise ValueError("target needs a start marker and at least one token")
        prefixes = [target[:t] for t in range(1, len(target))]
        logp = self.next_token_logprobs(input_ids, prefixes)
        return float(-np.mean([logp[r, target[r + 1]] for r in range(len(prefixes))]))


class TargetMockGenerator(SequenceGenerator):
    """Puts all probability on a target sequence computed from the input.

    ``target_fn`` maps input ids to the full target including the start
    marker. Once the prefix leaves the target, EOS is predicted.
    """

    concurrent_safe = True

    def __init__(self, tokenizer, target_fn: Callable[[Sequence[int]], list[int]]):
        self.tokenizer = tokenizer
        self.target_fn = target_fn

    def next_token_logprobs(self, input_ids, prefixes):
        target = self.target_fn(input_ids)
        out = np.full((len(prefixes), len(self.tokenizer)), _FLOOR)
        for r, prefix in enumerate(prefixes):
            n = len(prefix)
            on_track = n < len(target) and list(target[:n]) == list(prefix)
            out[r, target[n] if on_track else self.tokenizer.eos_id] = 0.0
        return out


class EchoGenerator(TargetMockGenerator):
    """Copies the answer span that ends a CQG-AR input back as the answer.

    The question is a fixed template around the span, so revision is always
    the identity (Preservation).
    """

    def __init__(self, tokenizer, template: str = "What about {span}?"):
        self.template = template
        super().__init__(tokenizer, self._target)

    def _target(self, input_ids):
        tk = self.tokenizer
        ids = list(input_ids)
        last_a = len(ids) - 1 - ids[::-1].index(tk.a_id)
        span = tk.decode(ids[last_a + 1:], skip_special_tokens=True)
        question = self.template.format(span=span)
        return [tk.q_id] + tk.encode(question) + [tk.a_id] + tk.encode(span) + [tk.eos_id]


class ScriptedGenerator(TargetMockGenerator):
    """Emits a scripted output for each decoded input text.

    ``responses`` is a mapping or callable from the decoded input (markers
    kept) to an output string such as ``"[Q] q [A] a [EOS]"``. Unknown inputs
    fall back to ``default`` when given, else raise ``KeyError``.
    """

    def __init__(self, tokenizer, responses: Mapping[str, str] | Callable[[str], str], default: str | None = None):
        self.responses = responses
        self.default = default
        super().__init__(tokenizer, self._target)

    def _target(self, input_ids):
        text = self.tokenizer.decode(input_ids)
        if callable(self.responses):
            out = self.responses(text)
        elif text in self.responses:
            out = self.responses[text]
        elif self.default is not None:
            out = self.default
        else:
            raise KeyError(f"no scripted output for input {text!r}")
        return self.tokenizer.encode(out)


_T5_SIZES = {
    "tiny": dict(d_model=64, d_ff=128, d_kv=16, num_layers=2, num_decoder_layers=2, num_heads=4),
    "small": dict(d_model=256, d_ff=1024, d_kv=32, num_layers=4, num_decoder_layers=4, num_heads=8),
}


class T5Generator(SequenceGenerator):
    """Encoder-decoder generator over ``transformers`` T5."""

    def __init__(self, model, tokenizer):
        self.model = model.eval()
        self.tokenizer = tokenizer

    @classmethod
    def from_config(cls, tokenizer, size: str = "tiny", seed: int = 0) -> "T5Generator":
        from transformers import T5Config, T5ForConditionalGeneration

        seed_everything(seed)
        config = T5Config(
            vocab_size=len(tokenizer),
            pad_token_id=tokenizer.pad_id,
            eos_token_id=tokenizer.eos_id,
            decoder_start_token_id=tokenizer.q_id,
            dropout_rate=0.0,
            **_T5_SIZES[size],
        )
        return cls(T5ForConditionalGeneration(config), tokenizer)

    @classmethod
    def from_texts(cls, texts, size: str = "tiny", seed: int = 0) -> "T5Generator":
        return cls.from_config(WordTokenizer().fit(texts), size, seed)

    @classmethod
    def from_pretrained(cls, path: str | Path) -> "T5Generator":
        from transformers import T5ForConditionalGeneration

        tokenizer = load_tokenizer(path)
        model = T5ForConditionalGeneration.from_pretrained(str(path))
        if model.get_input_embeddings().num_embeddings < len(tokenizer):
            model.resize_token_embeddings(len(tokenizer))
        return cls(model, tokenizer)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        self.model.config.update({"qa_markers": list(MARKERS)})
        self.model.save_pretrained(str(path))
        self.tokenizer.save(path)

    def _encode(self, input_ids):
        ids = torch.tensor([list(input_ids)])
        return self.model.get_encoder()(input_ids=ids).last_hidden_state

    @torch.no_grad()
    def next_token_logprobs(self, input_ids, prefixes):
        enc = self._encode(input_ids)
        if len({len(p) for p in prefixes}) == 1:
            return self._step(enc, prefixes)
        return np.concatenate([self._step(enc, [p]) for p in prefixes])

    def _step(self, enc, prefixes):
        dec = torch.tensor(prefixes)
        out = self.model(encoder_outputs=(enc.expand(len(prefixes), -1, -1),), decoder_input_ids=dec)
        return out.logits[:, -1, :].log_softmax(-1).double().numpy()

    @torch.no_grad()
    def generate(self, input_ids, beam_size=4, max_new_tokens=128, bos_id=None, eos_id=None, length_penalty=1.0):
        bos_id = self.tokenizer.q_id if bos_id is None else bos_id
        eos_id = self.tokenizer.eos_id if eos_id is None else eos_id
        enc = self._encode(input_ids)
        return beam_search(lambda p: self._step(enc, p), bos_id, eos_id, beam_size, max_new_tokens, length_penalty)

    def _batch_tensors(self, batch):
        pad = self.tokenizer.pad_id
        src_w = max(len(s) for s, _ in batch)
        tgt_w = max(len(t) for _, t in batch) - 1
        src = torch.full((len(batch), src_w), pad, dtype=torch.long)
        dec = torch.full((len(batch), tgt_w), pad, dtype=torch.long)
        labels = torch.full((len(batch), tgt_w), -100, dtype=torch.long)
        for b, (s, t) in enumerate(batch):
            src[b, :len(s)] = torch.tensor(s)
            dec[b, :len(t) - 1] = torch.tensor(t[:-1])
            labels[b, :len(t) - 1] = torch.tensor(t[1:])
        return src, (src != pad).long(), dec, labels

    def batch_loss(self, batch) -> torch.Tensor:
        src, attn, dec, labels = self._batch_tensors(batch)
        return self.model(input_ids=src, attention_mask=attn, decoder_input_ids=dec, labels=labels).loss

    @torch.no_grad()
    def loss(self, input_ids, target_ids) -> float:
        if len(target_ids) < 2:
            raise ValueError("target needs a start marker and at least one token")
        return float(self.batch_loss([(list(input_ids), list(target_ids))]))

    def fit_pairs(
        self,
        pairs: Sequence[tuple[Sequence[int], Sequence[int]]],
        epochs: int = 2,
        lr: float = 3e-5,
        batch_size: int = 4,
        warmup_ratio: float = 0.1,
        seed: int = 0,
    ) -> list[float]:
        seed_everything(seed)
        data = [(list(s), list(t)) for s, t in pairs]
        return train_loop(self.model, data, self.batch_loss, epochs, lr, batch_size, warmup_ratio, seed)
