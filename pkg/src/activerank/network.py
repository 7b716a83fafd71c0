"""Feedforward rank scorer with per-unit dropout and hand-derived gradients.

The scorer maps a feature vector to a single scalar rank score. Dropout is
applied to hidden-layer activations only (the scalar output unit is never
dropped) using the inverted convention: surviving units are rescaled by
1 / (1 - dropout_prob) so the zero-dropout network and the expected
stochastic network agree in scale.

All operations are pure functions of their inputs plus explicit seeds and
work in double precision throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

CHECKPOINT_FORMAT = "rank-scorer-v1"

_ACTIVATIONS = ("relu", "tanh")


class NetworkError(ValueError):
    """Invalid configuration, shape mismatch, or non-finite numerics."""


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture and regularization knobs for the scorer.

    ``layer_sizes`` runs input dim -> hidden dims -> 1. ``dropout_prob`` is
    the probability of *dropping* a hidden unit (0.2 drops 20% of units).
    """

    layer_sizes: tuple[int, ...]
    dropout_prob: float = 0.2
    weight_decay: float = 1e-4
    activation: str = "relu"

    def __post_init__(self) -> None:
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise NetworkError("layer_sizes needs at least an input and an output entry")
        if any(s <= 0 for s in sizes):
            raise NetworkError(f"layer sizes must be positive, got {sizes}")
        if sizes[-1] != 1:
            raise NetworkError(f"output layer must have size 1, got {sizes[-1]}")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise NetworkError(f"dropout_prob must be in [0, 1), got {self.dropout_prob}")
        if self.weight_decay < 0.0:
            raise NetworkError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if self.activation not in _ACTIVATIONS:
            raise NetworkError(f"activation must be one of {_ACTIVATIONS}, got {self.activation!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return self.layer_sizes[1:-1]

    @property
    def keep_scale(self) -> float:
        """Inverted-dropout rescale factor applied to surviving units."""
        return 1.0 / (1.0 - self.dropout_prob)


@dataclass
class ParameterSet:
    """All layer weights and biases of the scorer.

    ``weights[l]`` has shape (layer_sizes[l], layer_sizes[l+1]) so the
    forward pass is ``a @ W + b``; ``biases[l]`` has shape (layer_sizes[l+1],).
    """

    config: NetworkConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def validate(self) -> None:
        sizes = self.config.layer_sizes
        n_layers = len(sizes) - 1
        if len(self.weights) != n_layers or len(self.biases) != n_layers:
            raise NetworkError("parameter layer count does not match config")
        for l in range(n_layers):
            if self.weights[l].shape != (sizes[l], sizes[l + 1]):
                raise NetworkError(
                    f"weight {l} has shape {self.weights[l].shape}, "
                    f"expected {(sizes[l], sizes[l + 1])}"
                )
            if self.biases[l].shape != (sizes[l + 1],):
                raise NetworkError(f"bias {l} has shape {self.biases[l].shape}")
            if not (np.isfinite(self.weights[l]).all() and np.isfinite(self.biases[l]).all()):
                raise NetworkError(f"non-finite entries in layer {l} parameters")

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            config=self.config,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass(frozen=True)
class DropoutMask:
    """Per-hidden-unit binary keep indicators, one vector per hidden layer."""

    layers: tuple[np.ndarray, ...]

    def validate(self, config: NetworkConfig) -> None:
        hidden = config.hidden_sizes
        if len(self.layers) != len(hidden):
            raise NetworkError("mask layer count does not match hidden layers")
        for layer, size in zip(self.layers, hidden):
            if layer.shape != (size,):
                raise NetworkError(f"mask layer has shape {layer.shape}, expected ({size},)")
            if not np.isin(layer, (0.0, 1.0)).all():
                raise NetworkError("mask entries must be 0 or 1")


@dataclass
class Gradient:
    """Same shapes as ParameterSet."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class OptimizerState:
    """Adam first/second moment accumulators plus step counter."""

    m_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_weights: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int = 0
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_params(config: NetworkConfig, seed: int | np.random.SeedSequence) -> ParameterSet:
    """Draw fan-in-scaled zero-mean Gaussian weights; biases start at zero."""
    rng = np.random.default_rng(seed)
    sizes = config.layer_sizes
    weights = []
    biases = []
    for l in range(len(sizes) - 1):
        fan_in = sizes[l]
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(sizes[l], sizes[l + 1])))
        biases.append(np.zeros(sizes[l + 1]))
    params = ParameterSet(config=config, weights=weights, biases=biases)
    params.validate()
    return params


def init_optimizer(params: ParameterSet, learning_rate: float = 1e-5) -> OptimizerState:
    if learning_rate <= 0.0:
        raise NetworkError(f"learning_rate must be positive, got {learning_rate}")
    return OptimizerState(
        m_weights=[np.zeros_like(w) for w in params.weights],
        m_biases=[np.zeros_like(b) for b in params.biases],
        v_weights=[np.zeros_like(w) for w in params.weights],
        v_biases=[np.zeros_like(b) for b in params.biases],
        learning_rate=learning_rate,
    )


def _draw_mask_stack(
    config: NetworkConfig, rng: np.random.Generator, count: int
) -> list[np.ndarray]:
    """Draw ``count`` independent masks as one (count, units) array per hidden layer.

    Units are kept with probability 1 - dropout_prob. Draw order is
    layer-major, which fixes the mapping from a seed to a mask sequence.
    """
    return [
        (rng.random((count, size)) >= config.dropout_prob).astype(np.float64)
        for size in config.hidden_sizes
    ]


def sample_mask(config: NetworkConfig, seed: int | np.random.SeedSequence) -> DropoutMask:
    """Sample one dropout mask; each hidden unit drops with dropout_prob."""
    rng = np.random.default_rng(seed)
    stack = _draw_mask_stack(config, rng, 1)
    return DropoutMask(layers=tuple(layer[0] for layer in stack))


def stack_masks(masks: Sequence[DropoutMask]) -> list[np.ndarray]:
    """Stack per-sample masks into per-layer (n, units) arrays."""
    if not masks:
        return []
    n_hidden = len(masks[0].layers)
    return [np.stack([m.layers[l] for m in masks]) for l in range(n_hidden)]


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_prime(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    t = np.tanh(z)
    return 1.0 - t * t


def _forward_stack(
    params: ParameterSet, X: np.ndarray, mask_stack: Sequence[np.ndarray]
) -> tuple[np.ndarray, dict]:
    """Batched forward pass. Returns (scores, cache) where ``cache`` carries
    the post-dropout inputs of every weighted layer and the hidden
    pre-activations needed for backprop."""
    config = params.config
    scale = config.keep_scale
    a = X
    inputs = [X]
    zs = []
    for l, mask in enumerate(mask_stack):
        z = a @ params.weights[l] + params.biases[l]
        zs.append(z)
        a = _activate(config.activation, z) * mask * scale
        inputs.append(a)
    scores = a @ params.weights[-1] + params.biases[-1]
    return scores[:, 0], {"inputs": inputs, "zs": zs, "masks": mask_stack}


def _backward_stack(
    params: ParameterSet, cache: dict, upstream: np.ndarray, out: Gradient
) -> None:
    """Accumulate d(sum_n upstream_n * score_n)/d(params) into ``out``."""
    config = params.config
    scale = config.keep_scale
    inputs = cache["inputs"]
    zs = cache["zs"]
    masks = cache["masks"]
    n_hidden = len(zs)

    delta = upstream[:, None]
    out.weights[-1] += inputs[-1].T @ delta
    out.biases[-1] += delta.sum(axis=0)
    if n_hidden == 0:
        return
    da = delta @ params.weights[-1].T
    for l in range(n_hidden - 1, -1, -1):
        dz = da * masks[l] * scale * _activate_prime(config.activation, zs[l])
        out.weights[l] += inputs[l].T @ dz
        out.biases[l] += dz.sum(axis=0)
        if l > 0:
            da = dz @ params.weights[l].T


def zero_gradient(params: ParameterSet) -> Gradient:
    return Gradient(
        weights=[np.zeros_like(w) for w in params.weights],
        biases=[np.zeros_like(b) for b in params.biases],
    )


def forward(params: ParameterSet, x: np.ndarray, mask: DropoutMask) -> float:
    """Evaluate the scorer on one sample under a fixed dropout mask.

    Dropped units contribute zero; survivors are rescaled by
    1 / (1 - dropout_prob). Pure function of (params, x, mask).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.config.input_dim,):
        raise NetworkError(
            f"input has shape {x.shape}, expected ({params.config.input_dim},)"
        )
    mask.validate(params.config)
    stack = [layer[None, :] for layer in mask.layers]
    scores, _ = _forward_stack(params, x[None, :], stack)
    return float(scores[0])


def score_batch(params: ParameterSet, X: np.ndarray) -> np.ndarray:
    """Deterministic scores with dropout disabled (no masking, no rescale).

    This is the eval-mode pass used for cheap validation checks; the
    Bayesian predictive mean comes from repeated masked passes instead.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.config.input_dim:
        raise NetworkError(
            f"input has shape {X.shape}, expected (n, {params.config.input_dim})"
        )
    a = X
    for l in range(len(params.weights) - 1):
        a = _activate(params.config.activation, a @ params.weights[l] + params.biases[l])
    return (a @ params.weights[-1] + params.biases[-1])[:, 0]


def adam_step(
    state: OptimizerState, params: ParameterSet, grad: Gradient
) -> tuple[ParameterSet, OptimizerState]:
    """One bias-corrected Adam update. Returns new (params, state); inputs
    are left untouched."""
    arrays = grad.weights + grad.biases
    if len(grad.weights) != len(params.weights) or len(grad.biases) != len(params.biases):
        raise NetworkError("gradient layer count does not match parameters")
    for g, p in zip(arrays, params.weights + params.biases):
        if g.shape != p.shape:
            raise NetworkError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.isfinite(g).all():
            raise NetworkError("non-finite gradient entries")

    t = state.step + 1
    b1, b2, eps, lr = state.beta1, state.beta2, state.eps, state.learning_rate
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t

    def update(p, m, v, g):
        m_new = b1 * m + (1.0 - b1) * g
        v_new = b2 * v + (1.0 - b2) * (g * g)
        p_new = p - lr * (m_new / bc1) / (np.sqrt(v_new / bc2) + eps)
        return p_new, m_new, v_new

    new_weights, new_mw, new_vw = [], [], []
    for p, m, v, g in zip(params.weights, state.m_weights, state.v_weights, grad.weights):
        pn, mn, vn = update(p, m, v, g)
        new_weights.append(pn)
        new_mw.append(mn)
        new_vw.append(vn)
    new_biases, new_mb, new_vb = [], [], []
    for p, m, v, g in zip(params.biases, state.m_biases, state.v_biases, grad.biases):
        pn, mn, vn = update(p, m, v, g)
        new_biases.append(pn)
        new_mb.append(mn)
        new_vb.append(vn)

    new_params = ParameterSet(config=params.config, weights=new_weights, biases=new_biases)
    new_state = OptimizerState(
        m_weights=new_mw,
        m_biases=new_mb,
        v_weights=new_vw,
        v_biases=new_vb,
        step=t,
        learning_rate=lr,
        beta1=b1,
        beta2=b2,
        eps=eps,
    )
    return new_params, new_state


def params_to_json(params: ParameterSet) -> dict:
    """Flat JSON checkpoint: config echo, row-major weights, biases, version."""
    config = params.config
    return {
        "format": CHECKPOINT_FORMAT,
        "config": {
            "layer_sizes": list(config.layer_sizes),
            "dropout_prob": config.dropout_prob,
            "weight_decay": config.weight_decay,
            "activation": config.activation,
        },
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def params_from_json(doc: dict) -> ParameterSet:
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise NetworkError(f"unsupported checkpoint format {doc.get('format')!r}")
    cfg = doc["config"]
    config = NetworkConfig(
        layer_sizes=tuple(cfg["layer_sizes"]),
        dropout_prob=cfg["dropout_prob"],
        weight_decay=cfg["weight_decay"],
        activation=cfg["activation"],
    )
    params = ParameterSet(
        config=config,
        weights=[np.asarray(w, dtype=np.float64) for w in doc["weights"]],
        biases=[np.asarray(b, dtype=np.float64) for b in doc["biases"]],
    )
    params.validate()
    return params


def save_params(params: ParameterSet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params_to_json(params), sort_keys=True))


def load_params(path: str | Path) -> ParameterSet:
    return params_from_json(json.loads(Path(path).read_text()))
