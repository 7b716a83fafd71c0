"""Command-line entry point.

Subcommands: ``synth`` makes a synthetic manifest, ``loop-sim`` runs the
active loop with the simulated oracle and evaluates every checkpoint,
``serve`` hosts the human-annotation service, ``eval`` re-scores a saved
run, and ``report`` compares named runs (with a paired significance test).

Flags beat config-file entries, which beat built-in defaults. The config
file is flat ``key=value`` lines using the flag spellings. Every command
is deterministic given its flags: all randomness flows from explicit
seeds. On failure a single machine-parsable line ``error:<category>:
<message>`` goes to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import data, evaluation
from .loop import (
    ActiveLoop,
    LoopConfig,
    LoopDataset,
    LoopError,
    SimulatedOracle,
    make_pairs,
    run_loop,
)
from .mc_dropout import predict_all
from .network import NetworkConfig, NetworkError, load_params
from .ranking import AnnotatedPair, RankingError
from .seeds import stable_seed


class CliError(Exception):
    """Carries the machine-parsable error category."""

    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        raise CliError("usage", message)


# Built-in defaults per subcommand; a config file and then explicit flags
# override these in that order.
_DEFAULTS: dict[str, dict] = {
    "synth": {
        "n": 2000,
        "priors": "0.65,0.19,0.14,0.02",
        "dim": 8,
        "noise": 1.0,
        "seed": 0,
        "group_size": 10,
    },
    "loop-sim": {
        "r": 20.0,
        "s": 5.0,
        "K": 6,
        "T": 30,
        "epochs": 200,
        "batch_size": 32,
        "warm_start": False,
        "strategy": "uncertainty",
        "seed": 0,
        "hidden": "16,8",
        "dropout": 0.2,
        "weight_decay": 1e-4,
        "lr": 1e-5,
        "activation": "relu",
        "patience": 20,
        "fold_count": 5,
        "folds": "0",
        "val_frac": 20.0,
        "test_frac": 20.0,
        "split_seed": 0,
        "pair_with_labeled": False,
        "pair_pool": False,
        "trace_groups": 3,
    },
    "serve": {
        "host": "127.0.0.1",
        "port": 8000,
        "token": None,
        "ui_dir": None,
        "manifest": None,
        "fold": 0,
        # loop/net/split knobs shared with loop-sim on fresh starts
        "r": 20.0,
        "s": 5.0,
        "K": 6,
        "T": 30,
        "epochs": 200,
        "batch_size": 32,
        "warm_start": False,
        "strategy": "uncertainty",
        "seed": 0,
        "hidden": "16,8",
        "dropout": 0.2,
        "weight_decay": 1e-4,
        "lr": 1e-5,
        "activation": "relu",
        "patience": 20,
        "fold_count": 5,
        "val_frac": 20.0,
        "test_frac": 20.0,
        "split_seed": 0,
        "pair_with_labeled": False,
        "pair_pool": False,
    },
    "eval": {
        "T": 30,
        "seed": 0,
        "fold": 0,
        "fold_count": 5,
        "val_frac": 20.0,
        "test_frac": 20.0,
        "split_seed": 0,
        "trace_groups": 3,
    },
    "report": {
        "T": 30,
        "seed": 0,
        "fold": 0,
        "fold_count": 5,
        "val_frac": 20.0,
        "test_frac": 20.0,
        "split_seed": 0,
        "mcnemar": None,
    },
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="activerank", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    S = argparse.SUPPRESS

    p = sub.add_parser("synth", help="generate a synthetic ordinal manifest")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="manifest file to write")
    p.add_argument("--n", type=int, default=S)
    p.add_argument("--priors", default=S, help="comma-separated class probabilities")
    p.add_argument("--dim", type=int, default=S)
    p.add_argument("--noise", type=float, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--group-size", type=int, default=S, dest="group_size")

    def add_loop_flags(p):
        p.add_argument("--r", type=float, default=S)
        p.add_argument("--s", type=float, default=S)
        p.add_argument("--K", type=int, default=S)
        p.add_argument("--T", type=int, default=S)
        p.add_argument("--epochs", type=int, default=S)
        p.add_argument("--batch-size", type=int, default=S, dest="batch_size")
        p.add_argument("--warm-start", action="store_true", default=S, dest="warm_start")
        p.add_argument("--strategy", choices=("uncertainty", "random", "all-data"), default=S)
        p.add_argument("--seed", type=int, default=S)
        p.add_argument("--hidden", default=S, help="comma-separated hidden layer sizes")
        p.add_argument("--dropout", type=float, default=S)
        p.add_argument("--weight-decay", type=float, default=S, dest="weight_decay")
        p.add_argument("--lr", type=float, default=S)
        p.add_argument("--activation", choices=("relu", "tanh"), default=S)
        p.add_argument("--patience", type=int, default=S)
        p.add_argument("--pair-with-labeled", action="store_true", default=S, dest="pair_with_labeled")
        p.add_argument("--pair-pool", action="store_true", default=S, dest="pair_pool")

    def add_split_flags(p):
        p.add_argument("--fold-count", type=int, default=S, dest="fold_count")
        p.add_argument("--val-frac", type=float, default=S, dest="val_frac")
        p.add_argument("--test-frac", type=float, default=S, dest="test_frac")
        p.add_argument("--split-seed", type=int, default=S, dest="split_seed")

    p = sub.add_parser("loop-sim", help="run the active loop with the simulated oracle")
    p.add_argument("--config")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--folds", default=S, help="comma-separated fold indices")
    p.add_argument("--trace-groups", type=int, default=S, dest="trace_groups")
    add_loop_flags(p)
    add_split_flags(p)

    p = sub.add_parser("serve", help="host the annotation service (human oracle)")
    p.add_argument("--config")
    p.add_argument("--state-dir", required=True, dest="state_dir")
    p.add_argument("--manifest", default=S)
    p.add_argument("--host", default=S)
    p.add_argument("--port", type=int, default=S)
    p.add_argument("--token", default=S)
    p.add_argument("--ui-dir", default=S, dest="ui_dir")
    p.add_argument("--fold", type=int, default=S)
    add_loop_flags(p)
    add_split_flags(p)

    p = sub.add_parser("eval", help="evaluate the checkpoints of a saved run")
    p.add_argument("--config")
    p.add_argument("--run", required=True, help="run directory holding round_* checkpoints")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--T", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--fold", type=int, default=S)
    p.add_argument("--trace-groups", type=int, default=S, dest="trace_groups")
    add_split_flags(p)

    p = sub.add_parser("report", help="compare named runs, with a paired test")
    p.add_argument("--config")
    p.add_argument("--run", action="append", required=True, dest="runs",
                   help="NAME=DIR, repeatable")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mcnemar", default=S, help="two run names, comma-separated")
    p.add_argument("--T", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--fold", type=int, default=S)
    add_split_flags(p)
    return parser


def _parse_config_file(path: str) -> dict:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError("usage", f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError("usage", f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


def _coerce(key: str, raw: str, default) -> object:
    if isinstance(default, bool):
        low = raw.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise CliError("usage", f"config key {key}: expected a boolean, got {raw!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        try:
            return int(raw)
        except ValueError as exc:
            raise CliError("usage", f"config key {key}: expected an integer, got {raw!r}") from exc
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise CliError("usage", f"config key {key}: expected a number, got {raw!r}") from exc
    return raw


def _merge_options(command: str, args: argparse.Namespace) -> dict:
    """Apply the flags > config file > defaults precedence."""
    merged = dict(_DEFAULTS[command])
    explicit = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    config_path = getattr(args, "config", None)
    if config_path:
        file_values = _parse_config_file(config_path)
        for key, raw in file_values.items():
            if key not in merged:
                raise CliError("usage", f"config key {key!r} is not a {command} option")
            merged[key] = _coerce(key, raw, merged[key]) if merged[key] is not None else raw
    merged.update(explicit)
    return merged


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(part) for part in str(text).split(",") if part.strip() != ""]
    except ValueError as exc:
        raise CliError("usage", f"{flag}: expected comma-separated numbers, got {text!r}") from exc


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(part) for part in str(text).split(",") if part.strip() != ""]
    except ValueError as exc:
        raise CliError("usage", f"{flag}: expected comma-separated integers, got {text!r}") from exc


def _write_produced_files(out_dir: Path, paths: Sequence[Path]) -> None:
    listing = sorted(str(p.relative_to(out_dir)) for p in paths)
    (out_dir / "produced_files.json").write_text(
        json.dumps({"files": listing}, indent=2) + "\n"
    )


# -- dataset plumbing -------------------------------------------------------


class _View:
    __slots__ = ("id", "features")

    def __init__(self, sid: str, features: np.ndarray):
        self.id = sid
        self.features = features


def _fold_sets(manifest: data.DatasetManifest, opts: Mapping, fold: int) -> data.SplitFold:
    spec = data.SplitSpec(
        fold_count=int(opts["fold_count"]),
        train_frac=100.0 - float(opts["val_frac"]) - float(opts["test_frac"]),
        val_frac=float(opts["val_frac"]),
        test_frac=float(opts["test_frac"]),
        seed=int(opts["split_seed"]),
    )
    folds = data.group_kfold_split(manifest, spec)
    if not 0 <= fold < len(folds):
        raise CliError("usage", f"fold {fold} outside [0, {len(folds) - 1}]")
    return folds[fold]


def _strict_val_pairs(
    manifest: data.DatasetManifest, val_ids: set[str], seed: int
) -> tuple[AnnotatedPair, ...]:
    """Ground-truth pairs over the validation split, ties dropped."""
    ids = sorted(val_ids)
    if len(ids) < 2:
        return ()
    labels = manifest.labels()
    pairs = []
    for i, j in make_pairs(ids, seed):
        if labels[i] == labels[j]:
            continue
        pairs.append(AnnotatedPair(i, j, 1.0 if labels[i] > labels[j] else 0.0))
    return tuple(pairs)


def _loop_dataset(
    manifest: data.DatasetManifest, fold: data.SplitFold, seed: int
) -> LoopDataset:
    features = manifest.features()
    return LoopDataset(
        features=features,
        pool_ids=tuple(sorted(fold.train)),
        val_pairs=_strict_val_pairs(manifest, fold.val, stable_seed(seed, "val-pairs")),
    )


def _net_config(opts: Mapping, input_dim: int) -> NetworkConfig:
    hidden = _parse_int_list(opts["hidden"], "--hidden")
    return NetworkConfig(
        layer_sizes=(input_dim, *hidden, 1),
        dropout_prob=float(opts["dropout"]),
        weight_decay=float(opts["weight_decay"]),
        activation=str(opts["activation"]),
    )


def _loop_config(opts: Mapping) -> LoopConfig:
    strategy = str(opts["strategy"])
    r, K = float(opts["r"]), int(opts["K"])
    if strategy == "all-data":
        r, K = 100.0, 0
    return LoopConfig(
        r=r,
        s=float(opts["s"]),
        K=K,
        T=int(opts["T"]),
        epochs_per_round=int(opts["epochs"]),
        batch_size=int(opts["batch_size"]),
        warm_start=bool(opts["warm_start"]),
        seed=int(opts["seed"]),
        learning_rate=float(opts["lr"]),
        patience=int(opts["patience"]),
        pair_with_labeled=bool(opts["pair_with_labeled"]),
        pair_pool=bool(opts["pair_pool"]),
    )


def _loop_strategy(opts: Mapping) -> str:
    strategy = str(opts["strategy"])
    return "uncertainty" if strategy == "all-data" else strategy


# -- evaluation plumbing -----------------------------------------------------


def _checkpoint_dirs(run_dir: Path) -> list[Path]:
    rounds = sorted(run_dir.glob("round_*"))
    if not rounds:
        raise CliError("state", f"no round_* checkpoints under {run_dir}")
    return rounds


def _score_checkpoint(
    params, manifest: data.DatasetManifest, ids: Sequence[str], T: int, seed: int
) -> tuple[dict[str, float], dict[str, float]]:
    features = manifest.features()
    views = [_View(sid, features[sid]) for sid in sorted(ids)]
    preds = predict_all(params, views, T, seed)
    scores = {v.id: p.mean_score for v, p in zip(views, preds)}
    variances = {v.id: p.variance for v, p in zip(views, preds)}
    return scores, variances


def _evaluate_run(
    run_dir: Path,
    manifest: data.DatasetManifest,
    test_ids: set[str],
    T: int,
    seed: int,
    trace_groups: int = 3,
) -> tuple[evaluation.EvaluationReport, evaluation.PairSet]:
    """Accuracy curve over all checkpoints plus the full final-round suite.

    Also returns the overall pair set so callers can compute paired
    per-pair correctness against other runs.
    """
    labels = manifest.labels()
    test_labels = {sid: labels[sid] for sid in test_ids}
    overall = evaluation.build_overall_pairs(test_labels, stable_seed(seed, "overall-pairs"))
    neighboring = evaluation.build_neighboring_pairs(
        test_labels, stable_seed(seed, "neighboring-pairs")
    )

    curve = []
    final_scores: dict[str, float] = {}
    final_variances: dict[str, float] = {}
    final_state = None
    for round_dir in _checkpoint_dirs(run_dir):
        params = load_params(round_dir / "params.json")
        state_doc = json.loads((round_dir / "state.json").read_text())
        scores, variances = _score_checkpoint(
            params, manifest, sorted(test_ids), T, stable_seed(seed, "eval", round_dir.name)
        )
        acc, _ = evaluation.pair_accuracy(scores, overall)
        curve.append((float(state_doc.get("nominal_ratio", 0.0)), acc))
        final_scores, final_variances = scores, variances
        final_state = state_doc

    overall_acc, _ = evaluation.pair_accuracy(final_scores, overall)
    neighbor_accs = {}
    for pair_set in neighboring:
        if pair_set.empty:
            continue
        acc, _ = evaluation.pair_accuracy(final_scores, pair_set)
        neighbor_accs[pair_set.levels] = acc
    neighboring_mean = (
        float(np.mean(list(neighbor_accs.values()))) if neighbor_accs else 0.0
    )

    proportions = []
    if final_state is not None and final_state.get("initial_ids"):
        rounds = [final_state["initial_ids"]] + [
            sorted(entry) for entry in final_state["history"]
        ]
        proportions = evaluation.selection_proportions(rounds, labels, manifest.num_levels)

    traces = []
    by_group: dict[str, list] = {}
    for sample in manifest.samples:
        if sample.id in test_ids and sample.sequence_pos is not None:
            by_group.setdefault(sample.group_id, []).append(sample)
    for group_id in sorted(by_group)[: max(trace_groups, 0)]:
        # positions within a group are unique by construction of the
        # synthetic generator; skip groups where they are not
        group = by_group[group_id]
        positions = [s.sequence_pos for s in group]
        if len(set(positions)) != len(positions):
            continue
        traces.append(evaluation.sequence_trace(final_scores, group))

    return evaluation.EvaluationReport(
        overall_accuracy=overall_acc,
        neighboring_accuracies=neighbor_accs,
        neighboring_mean=neighboring_mean,
        per_class_score_summary=evaluation.score_distribution_by_class(
            final_scores, test_labels
        ),
        per_class_uncertainty_summary=evaluation.uncertainty_by_class(
            final_variances, test_labels
        ),
        selection_proportions=proportions,
        accuracy_curve=curve,
    ), overall


# -- commands ----------------------------------------------------------------


def cmd_synth(opts: Mapping) -> int:
    priors = _parse_float_list(opts["priors"], "--priors")
    manifest = data.synth_generate(
        n=int(opts["n"]),
        priors=priors,
        dim=int(opts["dim"]),
        noise=float(opts["noise"]),
        seed=int(opts["seed"]),
        group_size=int(opts["group_size"]),
    )
    out = Path(opts["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    data.save_manifest(manifest, out)
    counts = manifest.class_counts()
    print(f"wrote {len(manifest.samples)} samples to {out} "
          f"(class counts {[counts[c] for c in sorted(counts)]})")
    return 0


def cmd_loop_sim(opts: Mapping) -> int:
    manifest = data.load_manifest(opts["manifest"])
    out_dir = Path(opts["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    folds = _parse_int_list(opts["folds"], "--folds")
    net_config = _net_config(opts, manifest.feature_dim)
    loop_config = _loop_config(opts)
    strategy = _loop_strategy(opts)
    labels = manifest.labels()

    produced: list[Path] = []
    summary = {}
    for fold in folds:
        fold_sets = _fold_sets(manifest, opts, fold)
        dataset = _loop_dataset(manifest, fold_sets, loop_config.seed)
        fold_dir = out_dir / f"fold_{fold}"
        result = run_loop(
            dataset,
            net_config,
            loop_config,
            SimulatedOracle(labels),
            strategy=strategy,
            out_dir=fold_dir,
        )
        produced.extend(sorted(fold_dir.rglob("*")))

        report, _ = _evaluate_run(
            fold_dir, manifest, fold_sets.test, loop_config.T,
            loop_config.seed, int(opts["trace_groups"]),
        )
        report.save(fold_dir / "eval.json")
        produced.append(fold_dir / "eval.json")
        produced.extend(evaluation.write_report_tables(report, fold_dir))
        summary[f"fold_{fold}"] = {
            "overall_accuracy": report.overall_accuracy,
            "neighboring_mean": report.neighboring_mean,
            "labeled_count": result.checkpoints[-1].labeled_count,
            "final_ratio": result.checkpoints[-1].nominal_ratio,
        }
        print(
            f"fold {fold}: labeled {result.checkpoints[-1].labeled_count} ids "
            f"({result.checkpoints[-1].nominal_ratio:.0f}%), "
            f"overall accuracy {report.overall_accuracy:.3f}"
        )

    accs = [entry["overall_accuracy"] for entry in summary.values()]
    summary["mean_overall_accuracy"] = float(np.mean(accs))
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    produced.append(summary_path)
    _write_produced_files(out_dir, [p for p in produced if p.is_file()])
    return 0


def cmd_serve(opts: Mapping) -> int:
    # Imported here so the CLI works without the service extras loaded.
    import uvicorn

    from .service import STORE_FILE, AnnotationSession, create_app

    state_dir = Path(opts["state_dir"])
    session_file = state_dir / "session.json"
    serve_config_path = state_dir / "serve_config.json"

    host, port = str(opts["host"]), int(opts["port"])
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        # SO_REUSEADDR so a restart right after a crash is not blocked by
        # the previous process's connections lingering in TIME_WAIT.
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    except OSError as exc:
        raise CliError("network", f"cannot bind {host}:{port} ({exc})") from exc
    finally:
        probe.close()

    if session_file.exists():
        stored = json.loads(serve_config_path.read_text()) if serve_config_path.exists() else {}
        manifest_path = opts.get("manifest") or stored.get("manifest")
        if not manifest_path:
            raise CliError("state", "resume needs --manifest (none stored)")
        fold = int(stored.get("fold", opts["fold"]))
        split_opts = {**opts, **{k: stored[k] for k in
                                 ("fold_count", "val_frac", "test_frac", "split_seed")
                                 if k in stored}}
        manifest = data.load_manifest(manifest_path)
        fold_sets = _fold_sets(manifest, split_opts, fold)
        doc = json.loads(session_file.read_text())
        dataset = _loop_dataset(manifest, fold_sets, int(doc["loop_config"]["seed"]))
        session = AnnotationSession.resume(state_dir, dataset)
        print(f"resumed session in {state_dir} (round {session.loop._round})")
    else:
        if not opts.get("manifest"):
            raise CliError("usage", "fresh serve needs --manifest")
        manifest = data.load_manifest(opts["manifest"])
        fold = int(opts["fold"])
        fold_sets = _fold_sets(manifest, opts, fold)
        net_config = _net_config(opts, manifest.feature_dim)
        loop_config = _loop_config(opts)
        dataset = _loop_dataset(manifest, fold_sets, loop_config.seed)
        state_dir.mkdir(parents=True, exist_ok=True)
        serve_config_path.write_text(json.dumps({
            "manifest": str(Path(opts["manifest"]).resolve()),
            "fold": fold,
            "fold_count": int(opts["fold_count"]),
            "val_frac": float(opts["val_frac"]),
            "test_frac": float(opts["test_frac"]),
            "split_seed": int(opts["split_seed"]),
        }, indent=2, sort_keys=True) + "\n")
        loop = ActiveLoop(
            dataset, net_config, loop_config,
            strategy=_loop_strategy(opts), out_dir=state_dir,
        )
        session = AnnotationSession.start(loop, state_dir / STORE_FILE)
        print(f"new session in {state_dir}: {len(session.order)} pairs pending")

    ui_dir = opts.get("ui_dir")
    if ui_dir is not None and not Path(ui_dir).is_dir():
        raise CliError("usage", f"--ui-dir {ui_dir} is not a directory")
    app = create_app(session, token=opts.get("token"), ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def cmd_eval(opts: Mapping) -> int:
    manifest = data.load_manifest(opts["manifest"])
    run_dir = Path(opts["run"])
    if not run_dir.is_dir():
        raise CliError("state", f"run directory {run_dir} does not exist")
    fold_sets = _fold_sets(manifest, opts, int(opts["fold"]))
    report, _ = _evaluate_run(
        run_dir, manifest, fold_sets.test, int(opts["T"]),
        int(opts["seed"]), int(opts["trace_groups"]),
    )
    out_dir = Path(opts["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    report.save(out_dir / "eval.json")
    produced = [out_dir / "eval.json"]
    produced.extend(evaluation.write_report_tables(report, out_dir))
    _write_produced_files(out_dir, produced)
    print(f"overall accuracy {report.overall_accuracy:.3f}, "
          f"neighboring mean {report.neighboring_mean:.3f}")
    return 0


def cmd_report(opts: Mapping) -> int:
    manifest = data.load_manifest(opts["manifest"])
    fold_sets = _fold_sets(manifest, opts, int(opts["fold"]))
    labels = manifest.labels()
    test_labels = {sid: labels[sid] for sid in fold_sets.test}
    seed = int(opts["seed"])
    overall = evaluation.build_overall_pairs(test_labels, stable_seed(seed, "overall-pairs"))

    runs: dict[str, Path] = {}
    for item in opts["runs"]:
        if "=" not in item:
            raise CliError("usage", f"--run wants NAME=DIR, got {item!r}")
        name, _, path = item.partition("=")
        runs[name.strip()] = Path(path.strip())

    out_dir = Path(opts["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    produced = []
    doc: dict = {"runs": {}}
    flags_by_run = {}
    for name, run_dir in runs.items():
        if not run_dir.is_dir():
            raise CliError("state", f"run directory {run_dir} does not exist")
        report, _ = _evaluate_run(run_dir, manifest, fold_sets.test, int(opts["T"]), seed)
        final_dir = _checkpoint_dirs(run_dir)[-1]
        params = load_params(final_dir / "params.json")
        scores, _variances = _score_checkpoint(
            params, manifest, sorted(fold_sets.test), int(opts["T"]),
            stable_seed(seed, "eval", final_dir.name),
        )
        _, flags = evaluation.pair_accuracy(scores, overall)
        flags_by_run[name] = flags
        doc["runs"][name] = {
            "overall_accuracy": report.overall_accuracy,
            "neighboring_accuracies": {
                f"{hi}-{lo}": acc for (hi, lo), acc in sorted(report.neighboring_accuracies.items())
            },
            "neighboring_mean": report.neighboring_mean,
            "accuracy_curve": [[r, a] for r, a in report.accuracy_curve],
        }
        run_json = out_dir / f"{name}.json"
        report.save(run_json)
        produced.append(run_json)
        produced.extend(evaluation.write_report_tables(report, out_dir / name))

    if opts.get("mcnemar"):
        names = [part.strip() for part in str(opts["mcnemar"]).split(",")]
        if len(names) != 2 or any(n not in flags_by_run for n in names):
            raise CliError(
                "usage",
                f"--mcnemar wants two run names out of {sorted(flags_by_run)}",
            )
        stat, p = evaluation.mcnemar(flags_by_run[names[0]], flags_by_run[names[1]])
        doc["mcnemar"] = {"runs": names, "statistic": stat, "p_value": p}

    report_path = out_dir / "report.json"
    report_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    produced.append(report_path)
    _write_produced_files(out_dir, produced)
    for name in sorted(doc["runs"]):
        print(f"{name}: overall {doc['runs'][name]['overall_accuracy']:.3f}")
    if "mcnemar" in doc:
        print(f"mcnemar {doc['mcnemar']['runs']}: statistic {doc['mcnemar']['statistic']:.4g}, "
              f"p {doc['mcnemar']['p_value']:.4g}")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "loop-sim": cmd_loop_sim,
    "serve": cmd_serve,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 2
        opts = _merge_options(args.command, args)
        return _COMMANDS[args.command](opts)
    except CliError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return 2
    except (data.DataError,) as exc:
        print(f"error:data: {exc}", file=sys.stderr)
        return 2
    except (LoopError, RankingError, NetworkError, evaluation.EvaluationError) as exc:
        print(f"error:state: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error:state: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("error:internal: interrupted", file=sys.stderr)
        return 130
    except Exception as exc:  # last resort: keep the one-line contract
        print(f"error:internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
