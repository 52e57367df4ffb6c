"""Synthesize multi-turn conversational QA data from passages.

Each turn extracts a question-worthy span given the dialogue so far, then
generates a question and a revised answer in a single decoding pass.
"""
from .analysis import RevisionType, classify_revision, dataset_statistics, revision_distribution
from .cae import ContextualAnswerExtractor, extract_candidates, select_answer
from .config import GenerationConfig
from .corpus import AnswerSpan, Conversation, Dataset, Passage, QAPair
from .cqa import ConversationalQAModel, CqaRegime, evaluate
from .cqg_ar import AnswerRevisingQuestionGenerator, GenerationMalformed, parse_generation
from .metrics import exact_match, meteor_lite, normalize_answer, token_f1
from .negative_sampling import NegativeSampler, RevisionExample, build_revision_training_set
from .pipeline import ConversationSynthesizer, SyntheticConversation, generate_conversation, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "AnswerRevisingQuestionGenerator",
    "AnswerSpan",
    "ContextualAnswerExtractor",
    "Conversation",
    "ConversationSynthesizer",
    "ConversationalQAModel",
    "CqaRegime",
    "Dataset",
    "GenerationConfig",
    "GenerationMalformed",
    "NegativeSampler",
    "Passage",
    "QAPair",
    "RevisionExample",
    "RevisionType",
    "SyntheticConversation",
    "build_revision_training_set",
    "classify_revision",
    "dataset_statistics",
    "evaluate",
    "exact_match",
    "extract_candidates",
    "generate_conversation",
    "generate_dataset",
    "meteor_lite",
    "normalize_answer",
    "parse_generation",
    "revision_distribution",
    "select_answer",
    "token_f1",
]
