"""Probabilistic pairwise ranking loss and its exact gradient.

For a pair (i, j) the model probability that i outranks j is
``P = sigmoid(f(x_i) - f(x_j))`` and the per-pair cost is the cross entropy
against the relative label C in {0, 0.5, 1}. The batch loss adds a weight
decay term ``weight_decay * sum_l ||W_l||_F^2`` over weight matrices only
(biases are excluded).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .network import (
    DropoutMask,
    Gradient,
    ParameterSet,
    _backward_stack,
    _forward_stack,
    zero_gradient,
)

LABEL_VALUES = (0.0, 0.5, 1.0)

# Probability floor before logs; avoids -inf on saturated pairs without
# affecting checks at the 1e-4 level.
PROB_EPS = 1e-12


class RankingError(ValueError):
    """Invalid pair, label, or probability."""


def validate_label(value: float) -> float:
    value = float(value)
    if value not in LABEL_VALUES:
        raise RankingError(f"relative label must be one of {LABEL_VALUES}, got {value}")
    return value


@dataclass(frozen=True)
class AnnotatedPair:
    """Ordered pair of sample ids with a relative label.

    label semantics: 1 means i ranks higher than j, 0.5 a tie, 0 lower.
    """

    i: str
    j: str
    label: float

    def __post_init__(self) -> None:
        if self.i == self.j:
            raise RankingError(f"pair members must differ, got ({self.i!r}, {self.j!r})")
        object.__setattr__(self, "label", validate_label(self.label))


@dataclass
class PairBatch:
    """Annotated pairs plus the feature vectors their ids resolve to."""

    pairs: Sequence[AnnotatedPair]
    features: Mapping[str, np.ndarray]

    def __post_init__(self) -> None:
        if len(self.pairs) == 0:
            raise RankingError("pair batch must be nonempty")
        for pair in self.pairs:
            if pair.i not in self.features or pair.j not in self.features:
                missing = pair.i if pair.i not in self.features else pair.j
                raise RankingError(f"no features for sample id {missing!r}")

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stack (X_i, X_j, labels) in pair order."""
        xi = np.stack([np.asarray(self.features[p.i], dtype=np.float64) for p in self.pairs])
        xj = np.stack([np.asarray(self.features[p.j], dtype=np.float64) for p in self.pairs])
        labels = np.array([p.label for p in self.pairs])
        return xi, xj, labels


def _sigmoid(d: np.ndarray) -> np.ndarray:
    """Numerically stable sigmoid: no overflow for large |d|."""
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ed = np.exp(d[~pos])
    out[~pos] = ed / (1.0 + ed)
    return out


def pair_probability(f_i: float, f_j: float) -> float:
    """sigmoid(f_i - f_j), the model probability that i outranks j."""
    f_i = float(f_i)
    f_j = float(f_j)
    if not (math.isfinite(f_i) and math.isfinite(f_j)):
        raise RankingError(f"scores must be finite, got ({f_i}, {f_j})")
    d = f_i - f_j
    if d >= 0:
        return 1.0 / (1.0 + math.exp(-d))
    ed = math.exp(d)
    return ed / (1.0 + ed)


def pair_loss(p: float, c: float) -> float:
    """Cross entropy -(c*log(p) + (1-c)*log(1-p)) with p floored at PROB_EPS."""
    p = float(p)
    c = validate_label(c)
    if not 0.0 < p < 1.0:
        raise RankingError(f"probability must lie strictly in (0, 1), got {p}")
    p = min(max(p, PROB_EPS), 1.0 - PROB_EPS)
    return -(c * math.log(p) + (1.0 - c) * math.log1p(-p))


def _split_mask_stacks(
    masks: Sequence[tuple[DropoutMask, DropoutMask]], params: ParameterSet
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    n_hidden = len(params.config.hidden_sizes)
    for mask_i, mask_j in masks:
        mask_i.validate(params.config)
        mask_j.validate(params.config)
    stack_i = [np.stack([m[0].layers[l] for m in masks]) for l in range(n_hidden)]
    stack_j = [np.stack([m[1].layers[l] for m in masks]) for l in range(n_hidden)]
    return stack_i, stack_j


def _stacked_loss(
    params: ParameterSet,
    xi: np.ndarray,
    xj: np.ndarray,
    labels: np.ndarray,
    stack_i: Sequence[np.ndarray],
    stack_j: Sequence[np.ndarray],
    weight_decay: float,
) -> float:
    scores_i, _ = _forward_stack(params, xi, stack_i)
    scores_j, _ = _forward_stack(params, xj, stack_j)
    p = _sigmoid(scores_i - scores_j)
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    data = -(labels * np.log(p) + (1.0 - labels) * np.log1p(-p))
    reg = weight_decay * sum(float((w * w).sum()) for w in params.weights)
    return float(data.sum() + reg)


def _stacked_loss_grad(
    params: ParameterSet,
    xi: np.ndarray,
    xj: np.ndarray,
    labels: np.ndarray,
    stack_i: Sequence[np.ndarray],
    stack_j: Sequence[np.ndarray],
    weight_decay: float,
) -> Gradient:
    scores_i, cache_i = _forward_stack(params, xi, stack_i)
    scores_j, cache_j = _forward_stack(params, xj, stack_j)
    # d(loss)/d(f_i - f_j) = P - C for each pair
    g = _sigmoid(scores_i - scores_j) - labels
    grad = zero_gradient(params)
    _backward_stack(params, cache_i, g, grad)
    _backward_stack(params, cache_j, -g, grad)
    if weight_decay != 0.0:
        for gw, w in zip(grad.weights, params.weights):
            gw += 2.0 * weight_decay * w
    return grad


def _check_batch_inputs(
    batch: PairBatch,
    masks: Sequence[tuple[DropoutMask, DropoutMask]],
    weight_decay: float,
) -> None:
    if weight_decay < 0.0:
        raise RankingError(f"weight_decay must be nonnegative, got {weight_decay}")
    if len(masks) != len(batch.pairs):
        raise RankingError(
            f"got {len(masks)} mask pairs for {len(batch.pairs)} annotated pairs"
        )


def batch_loss(
    params: ParameterSet,
    batch: PairBatch,
    masks: Sequence[tuple[DropoutMask, DropoutMask]],
    weight_decay: float,
) -> float:
    """Sum of per-pair cross entropies plus the weight decay term.

    ``masks[k]`` holds the dropout masks for the i-side and j-side of
    ``batch.pairs[k]``; the two members of a pair are evaluated under
    independently sampled masks.
    """
    _check_batch_inputs(batch, masks, weight_decay)
    xi, xj, labels = batch.arrays()
    stack_i, stack_j = _split_mask_stacks(masks, params)
    return _stacked_loss(params, xi, xj, labels, stack_i, stack_j, weight_decay)


def batch_loss_grad(
    params: ParameterSet,
    batch: PairBatch,
    masks: Sequence[tuple[DropoutMask, DropoutMask]],
    weight_decay: float,
) -> Gradient:
    """Exact analytic gradient of batch_loss with respect to all parameters."""
    _check_batch_inputs(batch, masks, weight_decay)
    xi, xj, labels = batch.arrays()
    stack_i, stack_j = _split_mask_stacks(masks, params)
    return _stacked_loss_grad(params, xi, xj, labels, stack_i, stack_j, weight_decay)
