from .generators import EchoGenerator, ScriptedGenerator, SequenceGenerator, T5Generator, TargetMockGenerator
from .scorers import ScriptedSpanScorer, SpanHeadModel, TorchSpanScorer

__all__ = [
    "EchoGenerator",
    "ScriptedGenerator",
    "ScriptedSpanScorer",
    "SequenceGenerator",
    "SpanHeadModel",
    "T5Generator",
    "TargetMockGenerator",
    "TorchSpanScorer",
]
