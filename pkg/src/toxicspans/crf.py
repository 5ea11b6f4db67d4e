"""Linear-chain CRF: log-partition, gold path score, marginals, Viterbi.

A label sequence ``y`` over emissions ``em`` (T x L) scores

    start[y_0] + sum_t em[t][y_t] + sum_t trans[y_{t-1}][y_t] + stop[y_{T-1}]

and the CRF normalizes over all L^T sequences.  Everything runs in log space
with max-shifted log-sum-exp, so arbitrarily large scores cannot overflow.
The forward-backward marginals double as the analytic gradient of the
negative log-likelihood: d NLL / d em[t][l] = marginal[t][l] - 1{gold_t = l},
and likewise expected-minus-observed for transitions, start, and stop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass
class CrfParams:
    """Transition table plus start/stop scores; trans[i][j] scores i -> j."""

    trans: np.ndarray  # (L, L)
    start: np.ndarray  # (L,)
    stop: np.ndarray  # (L,)

    @property
    def num_labels(self) -> int:
        return self.start.shape[0]


def _logsumexp(a: np.ndarray, axis: int | None = None):
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def _check_emissions(em: np.ndarray, crf: CrfParams) -> None:
    if em.ndim != 2 or em.shape[0] < 1:
        raise ValidationError(f"emissions must be T x L with T >= 1, got shape {em.shape}")
    if em.shape[1] != crf.num_labels:
        raise ValidationError(
            f"emission width {em.shape[1]} != label count {crf.num_labels}"
        )


def _check_labels(labels, length: int, num_labels: int) -> None:
    if len(labels) != length:
        raise ValidationError(f"label count {len(labels)} != sequence length {length}")
    for y in labels:
        if not 0 <= y < num_labels:
            raise ValidationError(f"label {y} outside [0, {num_labels})")


def _forward_alphas(em: np.ndarray, crf: CrfParams) -> np.ndarray:
    T = em.shape[0]
    alphas = np.empty_like(em)
    alphas[0] = crf.start + em[0]
    for t in range(1, T):
        alphas[t] = _logsumexp(alphas[t - 1][:, None] + crf.trans, axis=0) + em[t]
    return alphas


def _backward_betas(em: np.ndarray, crf: CrfParams) -> np.ndarray:
    T = em.shape[0]
    betas = np.empty_like(em)
    betas[T - 1] = crf.stop
    for t in range(T - 2, -1, -1):
        betas[t] = _logsumexp(crf.trans + (em[t + 1] + betas[t + 1])[None, :], axis=1)
    return betas


def crf_log_partition(em: np.ndarray, crf: CrfParams) -> float:
    """log sum over all label sequences of exp(path score)."""
    _check_emissions(em, crf)
    alphas = _forward_alphas(em, crf)
    return _logsumexp(alphas[-1] + crf.stop)


def crf_gold_score(em: np.ndarray, crf: CrfParams, labels: list[int]) -> float:
    """Path score of one label sequence."""
    _check_emissions(em, crf)
    _check_labels(labels, em.shape[0], crf.num_labels)
    score = crf.start[labels[0]] + em[0, labels[0]]
    for t in range(1, len(labels)):
        score += crf.trans[labels[t - 1], labels[t]] + em[t, labels[t]]
    return float(score + crf.stop[labels[-1]])


def crf_nll(em: np.ndarray, crf: CrfParams, labels: list[int]) -> float:
    """Negative log-likelihood of the gold sequence: logZ - gold score >= 0."""
    return crf_log_partition(em, crf) - crf_gold_score(em, crf, labels)


def crf_marginals(em: np.ndarray, crf: CrfParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-position label marginals and expected transition counts.

    Marginals sum to 1 at every position; the L x L expected transition
    counts sum to T - 1.
    """
    _check_emissions(em, crf)
    T = em.shape[0]
    alphas = _forward_alphas(em, crf)
    betas = _backward_betas(em, crf)
    log_z = _logsumexp(alphas[-1] + crf.stop)
    marginals = np.exp(alphas + betas - log_z)
    expected = np.zeros_like(crf.trans)
    for t in range(T - 1):
        expected += np.exp(
            alphas[t][:, None] + crf.trans + (em[t + 1] + betas[t + 1])[None, :] - log_z
        )
    return marginals, expected


def crf_nll_grad(
    em: np.ndarray, crf: CrfParams, labels: list[int]
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """NLL and its gradients wrt emissions, trans, start, and stop.

    Each gradient is the marginal expectation minus the gold indicator.
    """
    _check_emissions(em, crf)
    T, L = em.shape
    _check_labels(labels, T, L)
    alphas = _forward_alphas(em, crf)
    betas = _backward_betas(em, crf)
    log_z = _logsumexp(alphas[-1] + crf.stop)
    marginals = np.exp(alphas + betas - log_z)

    d_em = marginals.copy()
    d_em[np.arange(T), labels] -= 1.0

    d_trans = np.zeros_like(crf.trans)
    for t in range(T - 1):
        d_trans += np.exp(
            alphas[t][:, None] + crf.trans + (em[t + 1] + betas[t + 1])[None, :] - log_z
        )
        d_trans[labels[t], labels[t + 1]] -= 1.0

    d_start = marginals[0].copy()
    d_start[labels[0]] -= 1.0
    d_stop = marginals[-1].copy()
    d_stop[labels[-1]] -= 1.0

    nll = log_z - crf_gold_score(em, crf, labels)
    return nll, d_em, d_trans, d_start, d_stop


def viterbi_decode(em: np.ndarray, crf: CrfParams) -> list[int]:
    """Maximum-score label sequence; ties break toward the lower label index.

    np.argmax returns the first maximum, which is exactly the lower-index
    tie-break.
    """
    _check_emissions(em, crf)
    T, L = em.shape
    score = crf.start + em[0]
    backptr = np.empty((T, L), dtype=np.int64)
    for t in range(1, T):
        cand = score[:, None] + crf.trans  # (prev, next)
        backptr[t] = np.argmax(cand, axis=0)
        score = cand[backptr[t], np.arange(L)] + em[t]
    final = score + crf.stop
    best = int(np.argmax(final))
    path = [best]
    for t in range(T - 1, 0, -1):
        best = int(backptr[t, best])
        path.append(best)
    path.reverse()
    return path
