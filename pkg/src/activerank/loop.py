"""Active-learning loop: random bootstrap, train, uncertainty-driven growth.

The protocol has three steps. Step 1 samples r% of the training pool and
pairs each sampled id with a random partner; an oracle attaches relative
labels. Step 2 trains the scorer on all labeled pairs. Step 3 scores the
unlabeled pool with MC dropout, takes the s% most uncertain ids, pairs
them, labels them, and merges. Steps 2 and 3 repeat K times, so the
labeled share of the pool grows from r% to (r + s*K)%.

``ActiveLoop`` exposes the round machinery piecewise (propose, ingest,
train) so an HTTP annotation service can drive it with a human oracle;
``run_loop`` drives the same machinery to completion with any oracle that
answers synchronously.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .mc_dropout import predict_all
from .network import (
    NetworkConfig,
    ParameterSet,
    _draw_mask_stack,
    adam_step,
    init_optimizer,
    init_params,
    load_params,
    save_params,
    score_batch,
)
from .ranking import AnnotatedPair, _stacked_loss_grad, validate_label
from .seeds import stable_seed

SESSION_FILE = "session.json"
STRATEGIES = ("uncertainty", "random")


class LoopError(ValueError):
    """Invalid loop configuration or a protocol-order violation."""


class LoopSuspended(RuntimeError):
    """Raised when the loop reaches an annotation barrier it cannot cross.

    The session state has been persisted; an annotation service can load
    it, collect the pending labels, and resume.
    """

    def __init__(self, out_dir: Path, pending: list[tuple[str, str]]):
        super().__init__(
            f"loop awaiting {len(pending)} annotations; session saved under {out_dir}"
        )
        self.out_dir = out_dir
        self.pending = pending


@dataclass(frozen=True)
class LoopConfig:
    """Protocol knobs: percentages, iteration counts, training budget.

    r and s are percentages of the full pool size N, so the nominal
    labeling ratio after iteration k is r + s*k.
    """

    r: float = 20.0
    s: float = 5.0
    K: int = 6
    T: int = 30
    epochs_per_round: int = 200
    batch_size: int = 32
    warm_start: bool = False
    seed: int = 0
    learning_rate: float = 1e-5
    patience: int = 20
    pair_with_labeled: bool = False
    pair_pool: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.r <= 100.0:
            raise LoopError(f"r must be in (0, 100], got {self.r}")
        if self.s < 0.0:
            raise LoopError(f"s must be nonnegative, got {self.s}")
        if self.K < 0:
            raise LoopError(f"K must be nonnegative, got {self.K}")
        if self.r + self.s * self.K > 100.0 + 1e-9:
            raise LoopError(
                f"r + s*K must not exceed 100, got {self.r + self.s * self.K}"
            )
        if self.T < 1:
            raise LoopError(f"T must be >= 1, got {self.T}")
        if self.epochs_per_round < 1:
            raise LoopError(f"epochs_per_round must be >= 1, got {self.epochs_per_round}")
        if self.batch_size < 1:
            raise LoopError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0.0:
            raise LoopError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.patience < 1:
            raise LoopError(f"patience must be >= 1, got {self.patience}")

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "s": self.s,
            "K": self.K,
            "T": self.T,
            "epochs_per_round": self.epochs_per_round,
            "batch_size": self.batch_size,
            "warm_start": self.warm_start,
            "seed": self.seed,
            "learning_rate": self.learning_rate,
            "patience": self.patience,
            "pair_with_labeled": self.pair_with_labeled,
            "pair_pool": self.pair_pool,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LoopConfig":
        return cls(**doc)


@dataclass
class LabelingState:
    """Everything the loop has labeled so far, plus the selection history.

    ``labeled_pairs`` is an ordered set: mathematical set semantics with
    deterministic iteration order (insertion order), which keeps batching
    reproducible. ``history[k]`` records the ids picked in iteration k+1
    with the predictive variance each carried when picked; the initial
    random sample is kept separately in ``initial_ids``.
    """

    pool_ids: tuple[str, ...]
    labeled_pairs: list[AnnotatedPair] = field(default_factory=list)
    labeled_ids: set[str] = field(default_factory=set)
    unlabeled_ids: set[str] = field(default_factory=set)
    k: int = 0
    initial_ids: list[str] = field(default_factory=list)
    history: list[dict[str, float]] = field(default_factory=list)

    def check(self) -> None:
        if self.labeled_ids & self.unlabeled_ids:
            raise LoopError("labeled and unlabeled id sets overlap")
        for pair in self.labeled_pairs:
            if pair.i not in self.labeled_ids or pair.j not in self.labeled_ids:
                raise LoopError(f"pair ({pair.i}, {pair.j}) references unlabeled ids")
        if len(self.history) != self.k:
            raise LoopError(
                f"history length {len(self.history)} does not match iteration {self.k}"
            )

    def merge(self, pairs: Sequence[AnnotatedPair]) -> None:
        seen = {(p.i, p.j) for p in self.labeled_pairs}
        for pair in pairs:
            if (pair.i, pair.j) in seen:
                continue
            seen.add((pair.i, pair.j))
            self.labeled_pairs.append(pair)
            for sid in (pair.i, pair.j):
                if sid in self.unlabeled_ids:
                    self.unlabeled_ids.discard(sid)
                self.labeled_ids.add(sid)

    def selection_rounds(self) -> list[list[str]]:
        """Per-round id lists in the shape the selection-mix metric expects."""
        return [list(self.initial_ids)] + [sorted(entry) for entry in self.history]

    def to_dict(self) -> dict:
        return {
            "pool_ids": list(self.pool_ids),
            "labeled_pairs": [[p.i, p.j, p.label] for p in self.labeled_pairs],
            "labeled_ids": sorted(self.labeled_ids),
            "unlabeled_ids": sorted(self.unlabeled_ids),
            "k": self.k,
            "initial_ids": list(self.initial_ids),
            "history": [dict(sorted(entry.items())) for entry in self.history],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LabelingState":
        state = cls(
            pool_ids=tuple(doc["pool_ids"]),
            labeled_pairs=[AnnotatedPair(i, j, label) for i, j, label in doc["labeled_pairs"]],
            labeled_ids=set(doc["labeled_ids"]),
            unlabeled_ids=set(doc["unlabeled_ids"]),
            k=doc["k"],
            initial_ids=list(doc["initial_ids"]),
            history=[{k: float(v) for k, v in entry.items()} for entry in doc["history"]],
        )
        state.check()
        return state


class _FeatView(NamedTuple):
    id: str
    features: np.ndarray


@dataclass(frozen=True)
class LoopDataset:
    """The training pool plus optional held-out pairs for early stopping."""

    features: Mapping[str, np.ndarray]
    pool_ids: tuple[str, ...]
    val_pairs: tuple[AnnotatedPair, ...] = ()

    def __post_init__(self) -> None:
        if len(self.pool_ids) < 2:
            raise LoopError("training pool needs at least 2 samples")
        if len(set(self.pool_ids)) != len(self.pool_ids):
            raise LoopError("duplicate ids in training pool")
        for sid in self.pool_ids:
            if sid not in self.features:
                raise LoopError(f"no features for pool id {sid!r}")
        for pair in self.val_pairs:
            if pair.i not in self.features or pair.j not in self.features:
                raise LoopError("validation pair references unknown id")


class SimulatedOracle:
    """Answers from hidden ordinal labels, instantly and deterministically."""

    kind = "simulated"

    def __init__(self, labels: Mapping[str, int]):
        self._labels = dict(labels)

    def label(self, i: str, j: str) -> float:
        return simulated_oracle((i, j), self._labels)


class HumanOracle:
    """Marker oracle: answers arrive later through the annotation service."""

    kind = "human"

    def label(self, i: str, j: str) -> float:
        raise LoopError("human oracle cannot answer synchronously")


def simulated_oracle(pair: tuple[str, str], labels: Mapping[str, int]) -> float:
    """Relative label from hidden ordinal labels: 1 / 0.5 / 0."""
    i, j = pair
    try:
        li, lj = labels[i], labels[j]
    except KeyError as exc:
        raise LoopError(f"no hidden label for id {exc.args[0]!r}") from exc
    if li > lj:
        return 1.0
    if li == lj:
        return 0.5
    return 0.0


def initial_sample(pool: Sequence[str], r: float, seed: int) -> list[str]:
    """Uniform sample without replacement of floor(r*N/100) ids."""
    if not pool:
        raise LoopError("empty pool")
    count = math.floor(r * len(pool) / 100.0)
    if count < 2:
        raise LoopError(
            f"initial sample of {count} ids is too small; raise r (pool size {len(pool)})"
        )
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(pool), size=count, replace=False)
    return [pool[i] for i in picks]


def make_pairs(ids: Sequence[str], seed: int) -> list[tuple[str, str]]:
    """One pair per id: the id plus a partner drawn uniformly from the rest.

    Output size equals input size, keeping annotation cost linear rather
    than quadratic in the sample count. If the exact ordered pair was
    already generated the partner is redrawn once; a second collision is
    kept (it is vanishingly rare and harmless).
    """
    if len(ids) < 2:
        raise LoopError(f"need at least 2 ids to pair, got {len(ids)}")
    rng = np.random.default_rng(seed)
    seen: set[tuple[str, str]] = set()
    pairs = []
    for idx, sid in enumerate(ids):
        for _ in range(2):
            partner_idx = int(rng.integers(0, len(ids) - 1))
            if partner_idx >= idx:
                partner_idx += 1
            pair = (sid, ids[partner_idx])
            if pair not in seen:
                break
        seen.add(pair)
        pairs.append(pair)
    return pairs


def _top_variance(predictions: Sequence[tuple[str, float]], count: int) -> list[str]:
    ranked = sorted(predictions, key=lambda item: (-item[1], item[0]))
    return [sid for sid, _ in ranked[:count]]


def select_uncertain(
    predictions: Sequence[tuple[str, float]], s: float, pool_size: int
) -> list[str]:
    """The floor(s*N/100) ids with the largest predictive variance.

    Ties break toward the smaller id so the choice is deterministic.
    """
    if s < 0.0:
        raise LoopError(f"s must be nonnegative, got {s}")
    if pool_size < 1:
        raise LoopError(f"pool_size must be positive, got {pool_size}")
    count = math.floor(s * pool_size / 100.0)
    if count > len(predictions):
        raise LoopError(
            f"cannot select {count} ids from {len(predictions)} unlabeled predictions"
        )
    return _top_variance(predictions, count)


def _train_round(
    dataset: LoopDataset,
    net_config: NetworkConfig,
    config: LoopConfig,
    round_index: int,
    pairs: Sequence[AnnotatedPair],
    warm_params: ParameterSet | None,
) -> ParameterSet:
    """Minibatch Adam over the labeled pairs, early-stopped on validation.

    Without warm_start the parameters are re-initialized from the same
    seed every round, so each round's model is a pure function of its
    labeled set plus the round's shuffling stream. Validation accuracy is
    measured with dropout disabled; training stops once it fails to
    improve for ``patience`` epochs.
    """
    if not pairs:
        raise LoopError("cannot train on an empty pair set")
    if config.warm_start and warm_params is not None:
        params = warm_params.copy()
    else:
        params = init_params(net_config, stable_seed(config.seed, "init-params"))
    opt = init_optimizer(params, config.learning_rate)
    rng = np.random.default_rng(stable_seed(config.seed, "train", round_index))

    xi = np.stack([dataset.features[p.i] for p in pairs])
    xj = np.stack([dataset.features[p.j] for p in pairs])
    labels = np.array([p.label for p in pairs])
    n = len(pairs)

    val = None
    if dataset.val_pairs:
        strict = [p for p in dataset.val_pairs if p.label != 0.5]
        if strict:
            hi = np.stack([dataset.features[p.i if p.label == 1.0 else p.j] for p in strict])
            lo = np.stack([dataset.features[p.j if p.label == 1.0 else p.i] for p in strict])
            val = (hi, lo)

    best_params = params
    best_acc = -1.0
    stall = 0
    for _epoch in range(config.epochs_per_round):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            b = len(idx)
            stacks = _draw_mask_stack(net_config, rng, 2 * b)
            stack_i = [layer[:b] for layer in stacks]
            stack_j = [layer[b:] for layer in stacks]
            grad = _stacked_loss_grad(
                params, xi[idx], xj[idx], labels[idx],
                stack_i, stack_j, net_config.weight_decay,
            )
            params, opt = adam_step(opt, params, grad)
        if val is not None:
            hi_scores = score_batch(params, val[0])
            lo_scores = score_batch(params, val[1])
            acc = float(np.mean(hi_scores > lo_scores))
            if acc > best_acc:
                best_acc = acc
                best_params = params
                stall = 0
            else:
                stall += 1
                if stall >= config.patience:
                    break
    return best_params if val is not None else params


@dataclass
class Checkpoint:
    """Snapshot emitted after each round's training."""

    round_index: int
    params: ParameterSet
    state: LabelingState
    nominal_ratio: float
    labeled_count: int
    new_pairs: list[AnnotatedPair]


class LoopResult(NamedTuple):
    params: ParameterSet
    state: LabelingState
    checkpoints: list[Checkpoint]


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class ActiveLoop:
    """Round-by-round engine behind both the simulated and the human flow.

    Call order: ``propose_initial`` (or ``resume``), then repeat
    ``ingest`` -> ``train_round`` -> ``propose_next`` until ``done``.
    ``propose_*`` returns unlabeled (i, j) pairs; ``ingest`` wants the
    same pairs back with labels attached.
    """

    def __init__(
        self,
        dataset: LoopDataset,
        net_config: NetworkConfig,
        config: LoopConfig,
        strategy: str = "uncertainty",
        out_dir: str | Path | None = None,
    ):
        if strategy not in STRATEGIES:
            raise LoopError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
        self.dataset = dataset
        self.net_config = net_config
        self.config = config
        self.strategy = strategy
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.state = LabelingState(pool_ids=tuple(dataset.pool_ids))
        self.params: ParameterSet | None = None
        self.checkpoints: list[Checkpoint] = []
        self.pending: list[tuple[str, str]] = []
        self._selection_meta: dict[str, float] | None = None
        self._round = 0  # the round the pending pairs belong to
        self._partner_pool: dict[str, str] | None = None
        self._pairs_checkpointed = 0
        self.oracle_kind = "simulated"
        self.done = False
        if config.pair_pool:
            pool_pairs = make_pairs(
                list(dataset.pool_ids), stable_seed(config.seed, "pool")
            )
            self._partner_pool = dict(pool_pairs)

    # -- proposal ---------------------------------------------------------

    def propose_initial(self) -> list[tuple[str, str]]:
        if self.pending or self.state.labeled_ids:
            raise LoopError("loop already started")
        ids = initial_sample(
            list(self.dataset.pool_ids),
            self.config.r,
            stable_seed(self.config.seed, "initial-sample"),
        )
        self.state.initial_ids = list(ids)
        self.state.unlabeled_ids = set(self.dataset.pool_ids) - set(ids)
        self.pending = self._pair_up(ids, round_index=0)
        self._selection_meta = None
        self._round = 0
        self._save_session()
        return list(self.pending)

    def propose_next(self) -> list[tuple[str, str]]:
        """Step 3: score the unlabeled pool, pick, pair. Empty when finished."""
        if self.pending:
            raise LoopError("previous round still awaiting labels")
        if self.params is None:
            raise LoopError("train_round must run before proposing more pairs")
        if self.state.k >= self.config.K:
            self.done = True
            self._save_session()
            return []
        next_round = self.state.k + 1
        unlabeled = sorted(self.state.unlabeled_ids)
        variances: dict[str, float] = {}
        if unlabeled:
            views = [_FeatView(sid, np.asarray(self.dataset.features[sid])) for sid in unlabeled]
            preds = predict_all(
                self.params, views, self.config.T,
                stable_seed(self.config.seed, "predict", next_round),
            )
            variances = {v.id: p.variance for v, p in zip(views, preds)}

        count = math.floor(self.config.s * len(self.dataset.pool_ids) / 100.0)
        count = min(count, len(unlabeled))
        if self.strategy == "uncertainty":
            selected = _top_variance(sorted(variances.items()), count)
        else:
            rng = np.random.default_rng(stable_seed(self.config.seed, "select", next_round))
            picks = rng.choice(len(unlabeled), size=count, replace=False)
            selected = [unlabeled[i] for i in sorted(picks)]

        self._selection_meta = {sid: variances.get(sid, 0.0) for sid in selected}
        self.pending = self._pair_up(selected, round_index=next_round) if selected else []
        self._round = next_round
        if not self.pending:
            # Degenerate selection (s = 0 or pool exhausted): the round
            # still happens, it just adds no pairs.
            self.state.history.append(self._selection_meta)
            self.state.k = next_round
            self._selection_meta = None
        self._save_session()
        return list(self.pending)

    def _pair_up(self, ids: Sequence[str], round_index: int) -> list[tuple[str, str]]:
        if not ids:
            return []
        if self._partner_pool is not None:
            return [(sid, self._partner_pool[sid]) for sid in ids]
        seed = stable_seed(self.config.seed, "pairs", round_index)
        if self.config.pair_with_labeled and round_index > 0:
            rng = np.random.default_rng(seed)
            partners = sorted(self.state.labeled_ids)
            out = []
            for sid in ids:
                choices = [p for p in partners if p != sid]
                out.append((sid, choices[int(rng.integers(0, len(choices)))]))
            return out
        if len(ids) == 1:
            # Cannot pair within a single-id selection; fall back to one
            # previously labeled partner.
            rng = np.random.default_rng(seed)
            partners = sorted(self.state.labeled_ids - set(ids))
            if not partners:
                raise LoopError("cannot pair a single id with no labeled partners")
            return [(ids[0], partners[int(rng.integers(0, len(partners)))])]
        return make_pairs(list(ids), seed)

    # -- labeling ---------------------------------------------------------

    def ingest(self, labeled: Sequence[AnnotatedPair]) -> None:
        """Merge answered pairs; they must match the pending proposal."""
        if not self.pending:
            raise LoopError("no pending pairs to ingest")
        expected = {(i, j) for i, j in self.pending}
        got = {(p.i, p.j) for p in labeled}
        if got != expected:
            missing = expected - got
            extra = got - expected
            raise LoopError(
                f"ingest mismatch: {len(missing)} pending pairs unanswered, "
                f"{len(extra)} unknown pairs submitted"
            )
        for pair in labeled:
            validate_label(pair.label)
        self.state.merge(labeled)
        if self._selection_meta is not None:
            self.state.history.append(self._selection_meta)
            self.state.k = self._round
            self._selection_meta = None
        self.pending = []
        self.state.check()
        self._save_session()

    # -- training ---------------------------------------------------------

    def train_round(self) -> Checkpoint:
        if self.pending:
            raise LoopError("cannot train while pairs are awaiting labels")
        self.params = _train_round(
            self.dataset,
            self.net_config,
            self.config,
            self.state.k,
            self.state.labeled_pairs,
            self.params,
        )
        checkpoint = Checkpoint(
            round_index=self.state.k,
            params=self.params,
            state=LabelingState.from_dict(self.state.to_dict()),
            nominal_ratio=self.config.r + self.config.s * self.state.k,
            labeled_count=len(self.state.labeled_ids),
            new_pairs=list(self.state.labeled_pairs[self._pairs_checkpointed :]),
        )
        self._pairs_checkpointed = len(self.state.labeled_pairs)
        self.checkpoints.append(checkpoint)
        if self.state.k >= self.config.K:
            self.done = True
        self._write_checkpoint(checkpoint)
        self._save_session()
        return checkpoint

    # -- persistence ------------------------------------------------------

    def _write_checkpoint(self, checkpoint: Checkpoint) -> None:
        if self.out_dir is None:
            return
        round_dir = self.out_dir / f"round_{checkpoint.round_index:02d}"
        round_dir.mkdir(parents=True, exist_ok=True)
        save_params(checkpoint.params, round_dir / "params.json")
        state_doc = checkpoint.state.to_dict()
        state_doc["nominal_ratio"] = checkpoint.nominal_ratio
        state_doc["labeled_count"] = checkpoint.labeled_count
        (round_dir / "state.json").write_text(json.dumps(state_doc, sort_keys=True))
        source = self.oracle_kind
        with (round_dir / "annotations.jsonl").open("w") as fh:
            for pair in checkpoint.new_pairs:
                fh.write(
                    json.dumps(
                        {
                            "i": pair.i,
                            "j": pair.j,
                            "label": pair.label,
                            "round": checkpoint.round_index,
                            "source": source,
                            "timestamp": _utc_now(),
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )

    def _save_session(self) -> None:
        if self.out_dir is None:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        doc = {
            "phase": "done" if self.done else ("awaiting-labels" if self.pending else "ready"),
            "round": self._round,
            "pending": [[i, j] for i, j in self.pending],
            "selection_meta": self._selection_meta,
            "pairs_checkpointed": self._pairs_checkpointed,
            "oracle_kind": self.oracle_kind,
            "state": self.state.to_dict(),
            "strategy": self.strategy,
            "loop_config": self.config.to_dict(),
            "net_config": {
                "layer_sizes": list(self.net_config.layer_sizes),
                "dropout_prob": self.net_config.dropout_prob,
                "weight_decay": self.net_config.weight_decay,
                "activation": self.net_config.activation,
            },
        }
        tmp = self.out_dir / (SESSION_FILE + ".tmp")
        tmp.write_text(json.dumps(doc, sort_keys=True))
        tmp.replace(self.out_dir / SESSION_FILE)

    @classmethod
    def resume(cls, out_dir: str | Path, dataset: LoopDataset) -> "ActiveLoop":
        """Rebuild a loop from a saved session directory."""
        out_dir = Path(out_dir)
        doc = json.loads((out_dir / SESSION_FILE).read_text())
        net_config = NetworkConfig(
            layer_sizes=tuple(doc["net_config"]["layer_sizes"]),
            dropout_prob=doc["net_config"]["dropout_prob"],
            weight_decay=doc["net_config"]["weight_decay"],
            activation=doc["net_config"]["activation"],
        )
        loop = cls(
            dataset,
            net_config,
            LoopConfig.from_dict(doc["loop_config"]),
            strategy=doc["strategy"],
            out_dir=out_dir,
        )
        loop.state = LabelingState.from_dict(doc["state"])
        loop.pending = [tuple(p) for p in doc["pending"]]
        loop._selection_meta = doc["selection_meta"]
        loop._round = doc["round"]
        loop._pairs_checkpointed = doc.get("pairs_checkpointed", 0)
        loop.oracle_kind = doc.get("oracle_kind", "human")
        loop.done = doc["phase"] == "done"
        last_round = out_dir / f"round_{loop.state.k:02d}" / "params.json"
        if last_round.exists():
            loop.params = load_params(last_round)
        return loop


def run_loop(
    dataset: LoopDataset,
    net_config: NetworkConfig,
    config: LoopConfig,
    oracle,
    strategy: str = "uncertainty",
    out_dir: str | Path | None = None,
) -> LoopResult:
    """Run the whole protocol with a synchronous oracle.

    With a human oracle the loop persists its session after proposing the
    first unanswered batch and raises LoopSuspended; the annotation
    service picks it up from there.
    """
    loop = ActiveLoop(dataset, net_config, config, strategy=strategy, out_dir=out_dir)
    loop.oracle_kind = oracle.kind

    pending = loop.propose_initial()
    while True:
        if pending:
            if oracle.kind == "human":
                if out_dir is None:
                    raise LoopError("a human-oracle loop needs an output directory")
                raise LoopSuspended(Path(out_dir), pending)
            labeled = [AnnotatedPair(i, j, oracle.label(i, j)) for i, j in pending]
            loop.ingest(labeled)
        loop.train_round()
        if loop.done:
            break
        pending = loop.propose_next()
        if not pending and loop.done:
            break
    return LoopResult(params=loop.params, state=loop.state, checkpoints=loop.checkpoints)
