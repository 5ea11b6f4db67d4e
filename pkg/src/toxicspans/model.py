"""The BiLSTM-CRF tagger: embedding lookup, both LSTM directions, a linear
projection to per-label emission scores, and the CRF on top.

Recurrences run only over the unpadded prefix of an encoded post, so PAD
rows never enter any computation and need no masking arithmetic.  The
backward pass is fully manual (projection, then both LSTM directions) and
optionally accumulates embedding-row gradients when fine-tuning is enabled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crf import CrfParams, crf_nll_grad, viterbi_decode
from .dataio import CharSpanSet
from .embeddings import EmbeddingTable, EncodedPost, encode_post
from .errors import ValidationError
from .lstm import LstmCache, LstmDirectionParams, lstm_backward, lstm_forward
from .span_codec import BridgePolicy, labels_to_spans
from .tokenizer import tokenize

NUM_LABELS = 2  # 0 = non-toxic, 1 = toxic


@dataclass
class EmissionParams:
    """Linear projection from concatenated hidden states to label scores."""

    W_out: np.ndarray  # (L, 2H)
    b_out: np.ndarray  # (L,)


@dataclass
class ModelParams:
    """All tagger parameters plus a reference to the embedding table."""

    fwd: LstmDirectionParams
    bwd: LstmDirectionParams
    emit: EmissionParams
    crf: CrfParams
    embedding: EmbeddingTable

    @property
    def hidden_size(self) -> int:
        return self.fwd.hidden_size

    def named_arrays(self, include_embedding: bool = False) -> list[tuple[str, np.ndarray]]:
        """Trainable tensors in their declared (checkpoint) order."""
        named = [
            ("fwd.W_in", self.fwd.W_in),
            ("fwd.W_rec", self.fwd.W_rec),
            ("fwd.b", self.fwd.b),
            ("bwd.W_in", self.bwd.W_in),
            ("bwd.W_rec", self.bwd.W_rec),
            ("bwd.b", self.bwd.b),
            ("emit.W_out", self.emit.W_out),
            ("emit.b_out", self.emit.b_out),
            ("crf.trans", self.crf.trans),
            ("crf.start", self.crf.start),
            ("crf.stop", self.crf.stop),
        ]
        if include_embedding:
            named.append(("embedding.matrix", self.embedding.matrix))
        return named

    def clone(self, copy_embedding: bool = False) -> "ModelParams":
        """Deep copy of the trainable tensors; the table is shared by default."""
        table = self.embedding
        if copy_embedding:
            table = table.with_matrix(table.matrix.copy())
        return ModelParams(
            fwd=LstmDirectionParams(
                self.fwd.W_in.copy(), self.fwd.W_rec.copy(), self.fwd.b.copy()
            ),
            bwd=LstmDirectionParams(
                self.bwd.W_in.copy(), self.bwd.W_rec.copy(), self.bwd.b.copy()
            ),
            emit=EmissionParams(self.emit.W_out.copy(), self.emit.b_out.copy()),
            crf=CrfParams(
                self.crf.trans.copy(), self.crf.start.copy(), self.crf.stop.copy()
            ),
            embedding=table,
        )


@dataclass
class BilstmCache:
    """Everything the manual backward pass needs from one forward pass."""

    indices: np.ndarray  # (T,) embedding rows actually used
    inputs: np.ndarray  # (T, D)
    fwd_cache: LstmCache
    bwd_cache: LstmCache
    hidden: np.ndarray  # (T, 2H)


def _glorot(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def init_params(
    table: EmbeddingTable, hidden_size: int, rng: np.random.Generator
) -> ModelParams:
    """Seeded initialization: Glorot-uniform matrices, zero biases, and a
    +1 forget-gate bias.  Draw order is fixed for reproducibility."""
    if hidden_size < 1:
        raise ValidationError(f"hidden_size must be >= 1, got {hidden_size}")
    D, H, L = table.dim, hidden_size, NUM_LABELS

    def direction() -> LstmDirectionParams:
        W_in = _glorot(4 * H, D, rng)
        W_rec = _glorot(4 * H, H, rng)
        b = np.zeros(4 * H)
        b[H : 2 * H] = 1.0
        return LstmDirectionParams(W_in=W_in, W_rec=W_rec, b=b)

    fwd = direction()
    bwd = direction()
    emit = EmissionParams(W_out=_glorot(L, 2 * H, rng), b_out=np.zeros(L))
    crf = CrfParams(trans=_glorot(L, L, rng), start=np.zeros(L), stop=np.zeros(L))
    return ModelParams(fwd=fwd, bwd=bwd, emit=emit, crf=crf, embedding=table)


def bilstm_emissions(post: EncodedPost, params: ModelParams) -> tuple[np.ndarray, BilstmCache]:
    """Per-token label scores for the unpadded prefix of an encoded post."""
    eff = post.effective_len
    if eff < 1:
        raise ValidationError("encoded post has no unpadded positions")
    indices = post.indices[:eff]
    inputs = params.embedding.matrix[indices]
    h_fwd, fwd_cache = lstm_forward(inputs, params.fwd)
    h_bwd, bwd_cache = lstm_forward(inputs, params.bwd, reverse=True)
    hidden = np.concatenate([h_fwd, h_bwd], axis=1)
    emissions = hidden @ params.emit.W_out.T + params.emit.b_out
    cache = BilstmCache(
        indices=indices,
        inputs=inputs,
        fwd_cache=fwd_cache,
        bwd_cache=bwd_cache,
        hidden=hidden,
    )
    return emissions, cache


def backward(
    params: ModelParams,
    cache: BilstmCache,
    d_emissions: np.ndarray,
    finetune_embeddings: bool = False,
) -> dict[str, np.ndarray]:
    """Manual backprop through the projection and both LSTM directions.

    Returns gradients keyed like :meth:`ModelParams.named_arrays` (CRF
    entries excluded; those come straight from the CRF marginals).
    """
    H = params.hidden_size
    d_W_out = d_emissions.T @ cache.hidden
    d_b_out = d_emissions.sum(axis=0)
    d_hidden = d_emissions @ params.emit.W_out

    d_in_fwd, g_fwd = lstm_backward(d_hidden[:, :H], params.fwd, cache.fwd_cache)
    d_in_bwd, g_bwd = lstm_backward(d_hidden[:, H:], params.bwd, cache.bwd_cache)

    grads = {
        "fwd.W_in": g_fwd["W_in"],
        "fwd.W_rec": g_fwd["W_rec"],
        "fwd.b": g_fwd["b"],
        "bwd.W_in": g_bwd["W_in"],
        "bwd.W_rec": g_bwd["W_rec"],
        "bwd.b": g_bwd["b"],
        "emit.W_out": d_W_out,
        "emit.b_out": d_b_out,
    }
    if finetune_embeddings:
        d_matrix = np.zeros_like(params.embedding.matrix)
        np.add.at(d_matrix, cache.indices, d_in_fwd + d_in_bwd)
        grads["embedding.matrix"] = d_matrix
    return grads


def nll_and_gradients(
    post: EncodedPost,
    labels: list[int],
    params: ModelParams,
    finetune_embeddings: bool = False,
) -> tuple[float, dict[str, np.ndarray]]:
    """CRF negative log-likelihood of one post and gradients for every
    trainable tensor.  ``labels`` must cover exactly the unpadded prefix."""
    emissions, cache = bilstm_emissions(post, params)
    nll, d_em, d_trans, d_start, d_stop = crf_nll_grad(emissions, params.crf, labels)
    grads = backward(params, cache, d_em, finetune_embeddings)
    grads["crf.trans"] = d_trans
    grads["crf.start"] = d_start
    grads["crf.stop"] = d_stop
    return nll, grads


def predict_labels(post: EncodedPost, params: ModelParams) -> list[int]:
    """Viterbi labels for the unpadded prefix of an encoded post."""
    emissions, _ = bilstm_emissions(post, params)
    return viterbi_decode(emissions, params.crf)


def predict(
    params: ModelParams,
    text: str,
    max_len: int,
    policy: BridgePolicy = BridgePolicy(),
) -> CharSpanSet:
    """Full pipeline for one post: tokenize, encode, tag, decode to spans.

    Tokens truncated beyond ``max_len`` are predicted non-toxic; empty text
    yields the empty span set.
    """
    toks = tokenize(text)
    if len(toks) == 0:
        return CharSpanSet()
    post = encode_post(toks, params.embedding, max_len)
    labels = predict_labels(post, params)
    labels = labels + [0] * (len(toks) - len(labels))
    return labels_to_spans(toks, labels, policy)


def deep_equal(a: ModelParams, b: ModelParams) -> bool:
    """Exact (bitwise) equality of all trainable tensors."""
    for (name_a, arr_a), (name_b, arr_b) in zip(a.named_arrays(), b.named_arrays()):
        if name_a != name_b or arr_a.shape != arr_b.shape:
            return False
        if not np.array_equal(arr_a, arr_b):
            return False
    return True
