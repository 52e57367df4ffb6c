from __future__ import annotations

import logging
import math
import random
from typing import Callable, Sequence

import numpy as np
import torch

logger = logging.getLogger(__name__)


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def train_loop(
    model: torch.nn.Module,
    examples: Sequence,
    batch_loss: Callable[[list], torch.Tensor],
    epochs: int,
    lr: float,
    batch_size: int,
    warmup_ratio: float = 0.1,
    seed: int = 0,
    log_every: int = 50,
) -> list[float]:
    """AdamW with linear warm-up then linear decay; returns per-step losses."""
    from transformers import get_linear_schedule_with_warmup

    if not examples:
        raise ValueError("no training examples")
    rng = random.Random(seed)
    steps_per_epoch = math.ceil(len(examples) / batch_size)
    total = steps_per_epoch * epochs
    optim = torch.optim.AdamW(model.parameters(), lr=lr)
    sched = get_linear_schedule_with_warmup(optim, int(warmup_ratio * total), total)
    order = list(range(len(examples)))
    history = []
    model.train()
    for epoch in range(epochs):
        rng.shuffle(order)
        for b in range(steps_per_epoch):
            batch = [examples[i] for i in order[b * batch_size:(b + 1) * batch_size]]
            loss = batch_loss(batch)
            optim.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), 1.0)
            optim.step()
            sched.step()
            history.append(loss.item())
            if log_every and len(history) % log_every == 0:
                logger.info("epoch %d step %d loss %.4f", epoch, len(history), history[-1])
    model.eval()
    return history
