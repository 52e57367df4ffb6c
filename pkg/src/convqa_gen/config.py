from __future__ import annotations

from dataclasses import asdict, dataclass, fields


@dataclass
class GenerationConfig:
    """Knobs for synthetic conversation generation.

    ``k`` and ``max_turns`` have no published values; the remaining defaults
    follow the reported training setup (beam 4, two/four history turns for
    extraction/generation, 512-token inputs, stride 128, 32-token passage tail).
    """

    k: int = 10
    max_turns: int = 20
    beam_size: int = 4
    cae_history_turns: int = 2
    cqg_history_turns: int = 4
    max_input_len: int = 512
    stride: int = 128
    passage_tail_tokens: int = 32
    max_span_tokens: int = 30
    max_new_tokens: int = 128
    length_penalty: float = 1.0
    # "span": dedup against earlier pre-revision spans; "revised": against earlier answers
    dedup_on: str = "span"
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> "GenerationConfig":
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("length_penalty", "dedup_on", "seed"):
                continue
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"GenerationConfig.{f.name} must be a positive integer, got {value!r}")
        if self.dedup_on not in ("span", "revised"):
            raise ValueError(f"dedup_on must be 'span' or 'revised', got {self.dedup_on!r}")
        if self.stride >= self.max_input_len:
            raise ValueError("stride must be smaller than max_input_len")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown GenerationConfig fields: {sorted(unknown)}")
        return cls(**data)
