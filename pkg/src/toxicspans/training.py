"""Gradient-descent training of the tagger with Adam and early stopping.

Minibatches are reshuffled every epoch from a single seeded generator, the
loss is the batch-mean CRF negative log-likelihood, and gradients are
reduced over each batch in ascending example order so runs with the same
seed are bit-for-bit reproducible.  Early stopping watches the dev-split
character-level F1 and the best-dev parameters are returned.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dataio import CharSpanSet, LabeledPost
from .embeddings import EmbeddingTable, EncodedPost, encode_post
from .errors import TrainingDivergedError, ValidationError
from .metric import per_post_scores
from .model import (
    ModelParams,
    bilstm_emissions,
    init_params,
    nll_and_gradients,
)
from .crf import viterbi_decode
from .span_codec import BridgePolicy, labels_to_spans, spans_to_labels
from .tokenizer import TokenSeq, tokenize


@dataclass
class TrainConfig:
    """Training hyperparameters; everything that affects the run is here."""

    epochs: int = 30
    batch_size: int = 16
    seed: int = 0
    learning_rate: float = 1e-3
    hidden_size: int = 128
    gradient_clip_norm: float = 5.0
    early_stop_patience: int = 5
    dev_fraction: float = 0.1
    max_len: int = 128
    finetune_embeddings: bool = False

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.hidden_size < 1:
            raise ValidationError(f"hidden_size must be >= 1, got {self.hidden_size}")
        if self.gradient_clip_norm <= 0:
            raise ValidationError(
                f"gradient_clip_norm must be > 0, got {self.gradient_clip_norm}"
            )
        if self.early_stop_patience < 1:
            raise ValidationError(
                f"early_stop_patience must be >= 1, got {self.early_stop_patience}"
            )
        if not 0.0 < self.dev_fraction < 1.0:
            raise ValidationError(
                f"dev_fraction must be in (0, 1), got {self.dev_fraction}"
            )
        if self.max_len < 1:
            raise ValidationError(f"max_len must be >= 1, got {self.max_len}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


@dataclass
class TrainExample:
    """One post prepared for training: tokens, encoding, labels, gold spans."""

    post_id: int
    encoded: EncodedPost
    labels: list[int]
    tokens: TokenSeq
    gold: CharSpanSet


@dataclass
class EpochStats:
    epoch: int
    train_nll: float
    dev_f1: float


@dataclass
class AdamState:
    """Bias-corrected first/second moment accumulators, one per tensor."""

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_arrays(
        cls, arrays: dict[str, np.ndarray], learning_rate: float
    ) -> "AdamState":
        return cls(
            learning_rate=learning_rate,
            m={name: np.zeros_like(a) for name, a in arrays.items()},
            v={name: np.zeros_like(a) for name, a in arrays.items()},
        )


def build_examples(
    posts: Sequence[LabeledPost], table: EmbeddingTable, max_len: int
) -> list[TrainExample]:
    """Tokenize, encode, and label every post for training/evaluation."""
    examples = []
    for post in posts:
        toks = tokenize(post.text)
        encoded = encode_post(toks, table, max_len)
        labels = spans_to_labels(toks, post.gold)
        examples.append(
            TrainExample(
                post_id=post.id,
                encoded=encoded,
                labels=labels,
                tokens=toks,
                gold=post.gold,
            )
        )
    return examples


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their global norm is <= max_norm.

    Returns the pre-clip global norm.
    """
    total = 0.0
    for arr in grads.values():
        total += float(np.sum(arr * arr))
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for arr in grads.values():
            arr *= scale
    return norm


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    clip_norm: float | None = None,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One in-place Adam update (optionally global-norm clipping first)."""
    if clip_norm is not None:
        clip_gradients(grads, clip_norm)
    state.step += 1
    t = state.step
    correct1 = 1.0 - state.beta1**t
    correct2 = 1.0 - state.beta2**t
    for name, param in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        param -= state.learning_rate * (m / correct1) / (np.sqrt(v / correct2) + state.epsilon)
    return params, state


def _accumulate(total: dict[str, np.ndarray], part: dict[str, np.ndarray]) -> None:
    for name, arr in part.items():
        if name in total:
            total[name] += arr
        else:
            total[name] = arr.copy()


def predict_example_spans(
    ex: TrainExample, params: ModelParams, policy: BridgePolicy
) -> CharSpanSet:
    """Decoded spans for a prepared example (truncated tail is non-toxic)."""
    eff = ex.encoded.effective_len
    if eff == 0:
        return CharSpanSet()
    emissions, _ = bilstm_emissions(ex.encoded, params)
    labels = viterbi_decode(emissions, params.crf)
    labels = labels + [0] * (len(ex.tokens) - eff)
    return labels_to_spans(ex.tokens, labels, policy)


def dev_char_f1(
    examples: Sequence[TrainExample], params: ModelParams, policy: BridgePolicy
) -> float:
    """Mean per-post character F1 of the current model on a split."""
    if not examples:
        raise ValidationError("dev split is empty")
    scores = [
        per_post_scores(predict_example_spans(ex, params, policy), ex.gold).f1
        for ex in examples
    ]
    return float(np.mean(scores))


def train(
    examples: Sequence[TrainExample],
    cfg: TrainConfig,
    table: EmbeddingTable,
    policy: BridgePolicy = BridgePolicy(),
    progress: Callable[[EpochStats], None] | None = None,
) -> tuple[ModelParams, list[EpochStats]]:
    """Train a fresh tagger, returning the best-dev parameters and history.

    Zero-token examples are excluded from gradient batches (the CRF needs at
    least one position) but still count in the dev F1, where the model
    predicts the empty span set for them.
    """
    cfg.validate()
    if not examples:
        raise ValidationError("training data is empty")

    rng = np.random.default_rng(cfg.seed)
    params = init_params(table, cfg.hidden_size, rng)
    if cfg.finetune_embeddings:
        # Train on a private copy so the shared table is never mutated.
        params.embedding = table.with_matrix(table.matrix.copy())

    n = len(examples)
    order = rng.permutation(n)
    if n == 1:
        dev_idx, train_idx = [0], [0]  # degenerate but defined
    else:
        dev_count = min(max(1, int(round(n * cfg.dev_fraction))), n - 1)
        dev_idx = sorted(int(i) for i in order[:dev_count])
        train_idx = sorted(int(i) for i in order[dev_count:])
    dev = [examples[i] for i in dev_idx]
    trainable = [i for i in train_idx if examples[i].encoded.effective_len > 0]
    if not trainable:
        raise ValidationError("no training example has at least one token")

    param_arrays = dict(params.named_arrays(include_embedding=cfg.finetune_embeddings))
    state = AdamState.for_arrays(param_arrays, cfg.learning_rate)

    history: list[EpochStats] = []
    best_f1 = -np.inf
    best_params = params.clone(copy_embedding=cfg.finetune_embeddings)
    epochs_without_improvement = 0

    for epoch in range(1, cfg.epochs + 1):
        shuffled = rng.permutation(len(trainable))
        nll_total = 0.0
        for lo in range(0, len(shuffled), cfg.batch_size):
            batch = sorted(trainable[k] for k in shuffled[lo : lo + cfg.batch_size])
            grads: dict[str, np.ndarray] = {}
            batch_nll = 0.0
            for idx in batch:
                ex = examples[idx]
                eff = ex.encoded.effective_len
                nll, g = nll_and_gradients(
                    ex.encoded, ex.labels[:eff], params, cfg.finetune_embeddings
                )
                batch_nll += nll
                _accumulate(grads, g)
            if not np.isfinite(batch_nll):
                raise TrainingDivergedError(
                    f"non-finite loss in epoch {epoch} (batch starting at {lo})"
                )
            scale = 1.0 / len(batch)
            for arr in grads.values():
                arr *= scale
            adam_step(param_arrays, grads, state, clip_norm=cfg.gradient_clip_norm)
            nll_total += batch_nll

        stats = EpochStats(
            epoch=epoch,
            train_nll=nll_total / len(trainable),
            dev_f1=dev_char_f1(dev, params, policy),
        )
        history.append(stats)
        if progress is not None:
            progress(stats)

        if stats.dev_f1 > best_f1:
            best_f1 = stats.dev_f1
            best_params = params.clone(copy_embedding=cfg.finetune_embeddings)
            epochs_without_improvement = 0
        else:
            epochs_without_improvement += 1
            if epochs_without_improvement >= cfg.early_stop_patience:
                break

    return best_params, history
