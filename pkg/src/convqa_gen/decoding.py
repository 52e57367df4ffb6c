"""Beam search over an arbitrary next-token log-probability function."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

StepFn = Callable[[list[list[int]]], np.ndarray]


def _normalized(score: float, length: int, length_penalty: float) -> float:
    if length_penalty == 0:
        return score
    return score / max(length, 1) ** length_penalty


def beam_search(
    step_fn: StepFn,
    bos_id: int,
    eos_id: int,
    beam_size: int = 4,
    max_new_tokens: int = 128,
    length_penalty: float = 1.0,
) -> list[int]:
    """Return the best sequence, starting with ``bos_id``.

    ``step_fn`` maps a batch of equal-length prefixes to a ``(batch, vocab)``
    array of log-probabilities. Hypotheses are ranked by summed log-probability
    divided by ``generated_length ** length_penalty``; ``length_penalty=0``
    disables normalization. With ``beam_size=1`` this is greedy decoding.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    beams: list[tuple[float, list[int]]] = [(0.0, [bos_id])]
    finished: list[tuple[float, list[int]]] = []
    for _ in range(max_new_tokens):
        logp = np.asarray(step_fn([seq for _, seq in beams]), dtype=np.float64)
        candidates = []
        for row, (score, seq) in zip(logp, beams):
            top = np.argsort(-row, kind="stable")[:beam_size]
            candidates.extend((score + float(row[t]), seq + [int(t)]) for t in top)
        # stable sort keeps parent-beam order among equal scores
        candidates.sort(key=lambda c: -c[0])
        beams = []
        for rank, (score, seq) in enumerate(candidates):
            if seq[-1] == eos_id:
                if rank < beam_size:
                    finished.append((score, seq))
            else:
                beams.append((score, seq))
            if len(beams) == beam_size:
                break
        if len(finished) >= beam_size or not beams:
            break
    # length-capped beams compete with finished ones unless enough have finished
    pool = finished + beams if len(finished) < beam_size else finished
    best = max(
        enumerate(pool),
        key=lambda item: (_normalized(item[1][0], len(item[1][1]) - 1, length_penalty), -item[0]),
    )
    return best[1][1]
