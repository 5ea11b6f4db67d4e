"""Toxic span detection pipeline: offset-preserving tokenization, span/label
encoding, a from-scratch BiLSTM-CRF tagger, a post-level toxicity gate, and
character-level span F1 evaluation."""

__version__ = "0.1.0"

from .dataio import (
    CharSpanSet,
    LabeledPost,
    PostPrediction,
    parse_dataset,
    read_predictions,
    write_predictions,
)
from .embeddings import EmbeddingTable, EncodedPost, encode_post, load_embeddings
from .errors import (
    DataFormatError,
    NonFiniteError,
    ToxicSpansError,
    TrainingDivergedError,
    ValidationError,
)
from .metric import EvalReport, PostScore, evaluate, per_post_scores
from .span_codec import BridgePolicy, labels_to_spans, round_trip_loss, spans_to_labels
from .tokenizer import Token, TokenSeq, tokenize

__all__ = [
    "BridgePolicy",
    "CharSpanSet",
    "DataFormatError",
    "EmbeddingTable",
    "EncodedPost",
    "EvalReport",
    "LabeledPost",
    "NonFiniteError",
    "PostPrediction",
    "PostScore",
    "Token",
    "TokenSeq",
    "ToxicSpansError",
    "TrainingDivergedError",
    "ValidationError",
    "encode_post",
    "evaluate",
    "labels_to_spans",
    "load_embeddings",
    "parse_dataset",
    "per_post_scores",
    "read_predictions",
    "round_trip_loss",
    "spans_to_labels",
    "tokenize",
    "write_predictions",
]
