"""Monte-Carlo dropout prediction: mean rank score and predictive variance.

The predictive variance is the population moment difference
``E[f^2] - E[f]^2`` over T stochastic forward passes, clamped at zero;
the additive constant of the posterior-variance expansion is dropped since
only the ranking of uncertainties matters downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .network import NetworkError, ParameterSet, _draw_mask_stack, _forward_stack
from .seeds import id_digest


class SampleLike(Protocol):
    id: str
    features: np.ndarray


@dataclass(frozen=True)
class McPrediction:
    mean_score: float
    variance: float
    trials: int

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise NetworkError(f"trials must be >= 1, got {self.trials}")
        if self.variance < 0.0:
            raise NetworkError(f"variance must be nonnegative, got {self.variance}")


def predict(
    params: ParameterSet,
    x: np.ndarray,
    trials: int,
    seed: int | np.random.SeedSequence,
) -> McPrediction:
    """Average ``trials`` stochastic forward passes drawn deterministically
    from ``seed`` (one mask per trial, layer-major draw order).

    With dropout_prob = 0 the network is mask-invariant, so a single
    deterministic pass is taken and the variance is exactly zero.
    """
    if trials < 1:
        raise NetworkError(f"trials must be >= 1, got {trials}")
    config = params.config
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (config.input_dim,):
        raise NetworkError(f"input has shape {x.shape}, expected ({config.input_dim},)")

    if config.dropout_prob == 0.0:
        ones = [np.ones((1, size)) for size in config.hidden_sizes]
        scores, _ = _forward_stack(params, x[None, :], ones)
        return McPrediction(mean_score=float(scores[0]), variance=0.0, trials=trials)

    rng = np.random.default_rng(seed)
    stack = _draw_mask_stack(config, rng, trials)
    X = np.broadcast_to(x, (trials, x.shape[0]))
    scores, _ = _forward_stack(params, X, stack)
    mean = float(scores.mean())
    variance = float((scores * scores).mean() - mean * mean)
    return McPrediction(mean_score=mean, variance=max(0.0, variance), trials=trials)


def predict_all(
    params: ParameterSet,
    samples: Sequence[SampleLike],
    trials: int,
    seed: int,
) -> list[McPrediction]:
    """Per-sample predictions with id-derived seeds.

    Each sample's mask stream is seeded from (seed, digest(sample.id)), so
    predictions are stable under reordering or shrinking of the sample list.
    """
    if len(samples) == 0:
        raise NetworkError("predict_all needs a nonempty sample list")
    out = []
    for sample in samples:
        child = np.random.SeedSequence((int(seed), id_digest(sample.id)))
        out.append(predict(params, sample.features, trials, child))
    return out


def mean_scores(
    params: ParameterSet,
    samples: Sequence[SampleLike],
    trials: int,
    seed: int,
) -> dict[str, float]:
    """Convenience map id -> MC-mean rank score (the test-time score)."""
    preds = predict_all(params, samples, trials, seed)
    return {sample.id: pred.mean_score for sample, pred in zip(samples, preds)}
