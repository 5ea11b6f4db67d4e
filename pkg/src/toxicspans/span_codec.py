"""Conversion between character-index span sets and per-token binary labels.

Encoding uses the any-overlap rule: a token is toxic (label 1) when its
character range intersects the gold set at all.  Decoding takes the union of
toxic token ranges and, with bridging enabled, also the small character gaps
between adjacent toxic tokens, which recovers contiguous multi-word phrases
whose gold spans include the separating spaces.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import pairwise

from .dataio import CharSpanSet
from .errors import ValidationError
from .tokenizer import TokenSeq

# Per-token binary labels: 0 = non-toxic, 1 = toxic.
LabelSeq = list[int]


@dataclass(frozen=True)
class BridgePolicy:
    """Decode behavior for the characters between adjacent toxic tokens."""

    bridge_gaps: bool = True
    max_gap: int = 1

    def __post_init__(self) -> None:
        if self.max_gap < 0:
            raise ValidationError(f"max_gap must be >= 0, got {self.max_gap}")


def spans_to_labels(toks: TokenSeq, gold: CharSpanSet) -> LabelSeq:
    """Label each token 1 iff its ``[start, end)`` range intersects ``gold``."""
    for index in gold:
        if index < 0 or index >= toks.source_len:
            raise ValidationError(
                f"gold index {index} outside [0, {toks.source_len})"
            )
    gold_set = set(gold.indexes)
    return [
        1 if any(c in gold_set for c in range(tok.start, tok.end)) else 0
        for tok in toks
    ]


def labels_to_spans(
    toks: TokenSeq, labels: LabelSeq, policy: BridgePolicy = BridgePolicy()
) -> CharSpanSet:
    """Decode per-token labels back to a character-index span set."""
    if len(labels) != len(toks):
        raise ValidationError(
            f"label count {len(labels)} does not match token count {len(toks)}"
        )
    chars: set[int] = set()
    for tok, label in zip(toks, labels):
        if label:
            chars.update(range(tok.start, tok.end))
    if policy.bridge_gaps:
        for (left, l_label), (right, r_label) in pairwise(zip(toks, labels)):
            if l_label and r_label and right.start - left.end <= policy.max_gap:
                chars.update(range(left.end, right.start))
    return CharSpanSet(tuple(chars))


def round_trip_loss(
    toks: TokenSeq, gold: CharSpanSet, policy: BridgePolicy = BridgePolicy()
) -> tuple[CharSpanSet, CharSpanSet]:
    """Diagnose encode/decode fidelity for a gold span set.

    Returns ``(missed, added)``: gold characters lost by the round trip and
    characters invented by it (sub-token gold inflates to whole tokens).
    """
    decoded = labels_to_spans(toks, spans_to_labels(toks, gold), policy)
    return gold - decoded, decoded - gold
