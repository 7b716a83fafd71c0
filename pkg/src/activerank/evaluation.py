"""Ranking metrics: pair accuracy, paired significance test, distribution
summaries, selection tracking, and report serialization.

All operations are pure functions over plain mappings and sequences so the
module stays decoupled from the training loop; the CLI adapts manifests and
checkpoints into these inputs. The report can be written as JSON plus a set
of flat CSV tables for external plotting.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence

import numpy as np

# Below this discordant-pair count the corrected chi-square approximation is
# poor, so the exact binomial tail is used instead.
EXACT_TEST_CUTOFF = 10


class EvaluationError(ValueError):
    """Bad inputs to a metric: missing scores, absent classes, and so on."""


@dataclass(frozen=True)
class PairSet:
    """Ground-truth-ordered id pairs: first id has the strictly higher label.

    kind is "overall" for the balanced cross-class set, or "neighboring"
    with (level_high, level_low) set for adjacent-level sets.
    """

    pairs: tuple[tuple[str, str], ...]
    kind: str
    levels: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("overall", "neighboring"):
            raise EvaluationError(f"unknown pair-set kind {self.kind!r}")
        if self.kind == "neighboring" and self.levels is None:
            raise EvaluationError("neighboring pair set needs its level pair")

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def empty(self) -> bool:
        return not self.pairs


def _check_strict_order(pairs, labels) -> None:
    for hi, lo in pairs:
        if labels[hi] <= labels[lo]:
            raise EvaluationError(f"pair ({hi}, {lo}) violates strict label order")


def build_overall_pairs(labels: Mapping[str, int], seed: int) -> PairSet:
    """Balanced cross-class pair set.

    Every class is subsampled down to the smallest class count, each
    retained id is paired with one random other retained id, and tied
    pairs are dropped. Pairs are oriented with the higher label first.
    """
    if not labels:
        raise EvaluationError("no test samples")
    by_class: dict[int, list[str]] = {}
    for sid in sorted(labels):
        by_class.setdefault(labels[sid], []).append(sid)
    num_levels = max(by_class) + 1
    for level in range(num_levels):
        if level not in by_class:
            raise EvaluationError(f"class {level} absent from test set")

    rng = np.random.default_rng(seed)
    min_count = min(len(ids) for ids in by_class.values())
    kept: list[str] = []
    for level in range(num_levels):
        ids = by_class[level]
        chosen = rng.choice(len(ids), size=min_count, replace=False)
        kept.extend(ids[i] for i in sorted(chosen))

    pairs = []
    for idx, sid in enumerate(kept):
        partner_idx = int(rng.integers(0, len(kept) - 1))
        if partner_idx >= idx:
            partner_idx += 1
        other = kept[partner_idx]
        if labels[sid] == labels[other]:
            continue
        if labels[sid] > labels[other]:
            pairs.append((sid, other))
        else:
            pairs.append((other, sid))
    return PairSet(pairs=tuple(pairs), kind="overall")


def build_neighboring_pairs(
    labels: Mapping[str, int],
    seed: int,
    partners_per_sample: int = 1,
) -> list[PairSet]:
    """One pair set per adjacent level pair (1-0, 2-1, ...).

    Each sample of the higher level is paired with ``partners_per_sample``
    random samples of the level below. Levels missing from the test set
    yield empty sets rather than errors so callers can flag them.
    """
    if not labels:
        raise EvaluationError("no test samples")
    if partners_per_sample < 1:
        raise EvaluationError("partners_per_sample must be >= 1")
    by_class: dict[int, list[str]] = {}
    for sid in sorted(labels):
        by_class.setdefault(labels[sid], []).append(sid)
    num_levels = max(by_class) + 1

    rng = np.random.default_rng(seed)
    sets = []
    for low in range(num_levels - 1):
        high = low + 1
        highs = by_class.get(high, [])
        lows = by_class.get(low, [])
        pairs = []
        if highs and lows:
            for sid in highs:
                picks = rng.choice(len(lows), size=min(partners_per_sample, len(lows)), replace=False)
                pairs.extend((sid, lows[i]) for i in sorted(picks))
        sets.append(PairSet(pairs=tuple(pairs), kind="neighboring", levels=(high, low)))
    return sets


def pair_accuracy(
    scores: Mapping[str, float], pair_set: PairSet
) -> tuple[float, np.ndarray]:
    """Fraction of pairs where the higher-label id outscores the lower.

    Exact score ties count as incorrect. Also returns the per-pair
    correctness vector, which the significance test consumes.
    """
    if pair_set.empty:
        raise EvaluationError("empty pair set")
    flags = np.zeros(len(pair_set.pairs), dtype=bool)
    for idx, (hi, lo) in enumerate(pair_set.pairs):
        try:
            flags[idx] = scores[hi] > scores[lo]
        except KeyError as exc:
            raise EvaluationError(f"missing score for id {exc.args[0]!r}") from exc
    return float(flags.mean()), flags


def mcnemar(flags_a: np.ndarray, flags_b: np.ndarray) -> tuple[float, float]:
    """Paired comparison of two correctness vectors.

    Uses the continuity-corrected chi-square statistic with one degree of
    freedom when the discordant count is large enough, and the exact
    two-sided binomial tail otherwise (the statistic reported then is the
    smaller discordant count). No discordant pairs gives p = 1.
    """
    flags_a = np.asarray(flags_a, dtype=bool)
    flags_b = np.asarray(flags_b, dtype=bool)
    if flags_a.shape != flags_b.shape or flags_a.ndim != 1:
        raise EvaluationError("correctness vectors must be equal-length 1-D")
    b = int(np.count_nonzero(flags_a & ~flags_b))
    c = int(np.count_nonzero(~flags_a & flags_b))
    n = b + c
    if n == 0:
        return 0.0, 1.0
    if n >= EXACT_TEST_CUTOFF:
        stat = (abs(b - c) - 1) ** 2 / n
        # Upper tail of chi-square with 1 df.
        p = math.erfc(math.sqrt(stat / 2.0))
        return float(stat), float(min(p, 1.0))
    k = max(b, c)
    tail = sum(math.comb(n, i) for i in range(k, n + 1)) / 2.0**n
    return float(min(b, c)), float(min(2.0 * tail, 1.0))


class FiveNumberSummary(NamedTuple):
    min: float
    q1: float
    median: float
    q3: float
    max: float


def five_number_summary(values: Sequence[float]) -> FiveNumberSummary:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise EvaluationError("cannot summarize an empty value set")
    qs = np.quantile(arr, [0.0, 0.25, 0.5, 0.75, 1.0])
    return FiveNumberSummary(*(float(q) for q in qs))


def _summaries_by_class(
    values: Mapping[str, float], labels: Mapping[str, int]
) -> dict[int, FiveNumberSummary]:
    by_class: dict[int, list[float]] = {}
    for sid, value in values.items():
        try:
            by_class.setdefault(labels[sid], []).append(float(value))
        except KeyError as exc:
            raise EvaluationError(f"missing label for id {exc.args[0]!r}") from exc
    if not by_class:
        raise EvaluationError("no values to summarize")
    return {level: five_number_summary(vals) for level, vals in sorted(by_class.items())}


def score_distribution_by_class(
    scores: Mapping[str, float], labels: Mapping[str, int]
) -> dict[int, FiveNumberSummary]:
    """Five-number summary of predicted scores per ground-truth class."""
    return _summaries_by_class(scores, labels)


def uncertainty_by_class(
    variances: Mapping[str, float], labels: Mapping[str, int]
) -> dict[int, FiveNumberSummary]:
    """Five-number summary of predictive variance per ground-truth class."""
    return _summaries_by_class(variances, labels)


def selection_proportions(
    rounds: Sequence[Sequence[str]],
    labels: Mapping[str, int],
    num_levels: int,
) -> list[dict[int, float]]:
    """Class mix of the accumulated labeled pool after each round.

    ``rounds[0]`` is the initial random sample, later entries the ids
    selected per iteration; entry k of the result covers the union of
    rounds 0..k, normalized to fractions.
    """
    if not rounds:
        raise EvaluationError("no selection history")
    counts = {level: 0 for level in range(num_levels)}
    total = 0
    out = []
    for ids in rounds:
        for sid in ids:
            try:
                counts[labels[sid]] += 1
            except KeyError as exc:
                raise EvaluationError(f"missing label for id {exc.args[0]!r}") from exc
            total += 1
        if total == 0:
            raise EvaluationError("empty initial selection")
        out.append({level: counts[level] / total for level in range(num_levels)})
    return out


@dataclass(frozen=True)
class SequenceTrace:
    """Score and true label along one group's capture order."""

    group_id: str
    points: tuple[tuple[int, float, int], ...]  # (sequence_pos, score, label)

    def __post_init__(self) -> None:
        positions = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise EvaluationError("trace positions must be strictly increasing")


def sequence_trace(scores: Mapping[str, float], group_samples: Sequence) -> SequenceTrace:
    """Trace one group's predicted scores against its capture order.

    ``group_samples`` are Sample-like objects (id, ordinal_label,
    group_id, sequence_pos) from a single group; output is sorted by
    position regardless of input order.
    """
    if not group_samples:
        raise EvaluationError("empty group")
    group_ids = {s.group_id for s in group_samples}
    if len(group_ids) != 1:
        raise EvaluationError(f"samples span {len(group_ids)} groups, expected one")
    if any(s.sequence_pos is None for s in group_samples):
        raise EvaluationError("group lacks sequence positions")
    points = []
    for s in sorted(group_samples, key=lambda s: s.sequence_pos):
        try:
            points.append((int(s.sequence_pos), float(scores[s.id]), int(s.ordinal_label)))
        except KeyError as exc:
            raise EvaluationError(f"missing score for id {exc.args[0]!r}") from exc
    return SequenceTrace(group_id=group_ids.pop(), points=tuple(points))


@dataclass
class EvaluationReport:
    """Aggregate of all metrics for one run, serializable to JSON and CSV."""

    overall_accuracy: float
    neighboring_accuracies: dict[tuple[int, int], float]
    neighboring_mean: float
    per_class_score_summary: dict[int, FiveNumberSummary] = field(default_factory=dict)
    per_class_uncertainty_summary: dict[int, FiveNumberSummary] = field(default_factory=dict)
    selection_proportions: list[dict[int, float]] = field(default_factory=list)
    mcnemar: tuple[float, float] | None = None
    accuracy_curve: list[tuple[float, float]] = field(default_factory=list)
    traces: list[SequenceTrace] = field(default_factory=list)

    def __post_init__(self) -> None:
        for name, value in [("overall_accuracy", self.overall_accuracy),
                            ("neighboring_mean", self.neighboring_mean)]:
            if not 0.0 <= value <= 1.0:
                raise EvaluationError(f"{name} outside [0, 1]: {value}")
        for levels, acc in self.neighboring_accuracies.items():
            if not 0.0 <= acc <= 1.0:
                raise EvaluationError(f"neighboring accuracy {levels} outside [0, 1]")
        for summary in list(self.per_class_score_summary.values()) + list(
            self.per_class_uncertainty_summary.values()
        ):
            s = FiveNumberSummary(*summary)
            if not s.min <= s.q1 <= s.median <= s.q3 <= s.max:
                raise EvaluationError(f"summary out of order: {s}")

    def to_dict(self) -> dict:
        return {
            "overall_accuracy": self.overall_accuracy,
            "neighboring_accuracies": {
                f"{hi}-{lo}": acc for (hi, lo), acc in sorted(self.neighboring_accuracies.items())
            },
            "neighboring_mean": self.neighboring_mean,
            "per_class_score_summary": {
                str(level): list(s) for level, s in sorted(self.per_class_score_summary.items())
            },
            "per_class_uncertainty_summary": {
                str(level): list(s) for level, s in sorted(self.per_class_uncertainty_summary.items())
            },
            "selection_proportions": [
                {str(level): frac for level, frac in sorted(entry.items())}
                for entry in self.selection_proportions
            ],
            "mcnemar": list(self.mcnemar) if self.mcnemar is not None else None,
            "accuracy_curve": [[ratio, acc] for ratio, acc in self.accuracy_curve],
            "traces": [
                {"group": t.group_id, "points": [list(p) for p in t.points]} for t in self.traces
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvaluationReport":
        def parse_levels(key: str) -> tuple[int, int]:
            hi, lo = key.split("-")
            return int(hi), int(lo)

        return cls(
            overall_accuracy=doc["overall_accuracy"],
            neighboring_accuracies={
                parse_levels(k): v for k, v in doc["neighboring_accuracies"].items()
            },
            neighboring_mean=doc["neighboring_mean"],
            per_class_score_summary={
                int(k): FiveNumberSummary(*v) for k, v in doc["per_class_score_summary"].items()
            },
            per_class_uncertainty_summary={
                int(k): FiveNumberSummary(*v)
                for k, v in doc["per_class_uncertainty_summary"].items()
            },
            selection_proportions=[
                {int(k): v for k, v in entry.items()} for entry in doc["selection_proportions"]
            ],
            mcnemar=tuple(doc["mcnemar"]) if doc.get("mcnemar") is not None else None,
            accuracy_curve=[(ratio, acc) for ratio, acc in doc["accuracy_curve"]],
            traces=[
                SequenceTrace(
                    group_id=t["group"],
                    points=tuple((int(p[0]), float(p[1]), int(p[2])) for p in t["points"]),
                )
                for t in doc.get("traces", [])
            ],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EvaluationReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_report_tables(report: EvaluationReport, out_dir: str | Path) -> list[Path]:
    """Emit the flat CSV companions of the JSON report.

    One table per analysis: headline accuracies, the accuracy-vs-ratio
    curve, per-class score and uncertainty summaries, selection mix per
    round, and per-group sequence traces.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    rows = [["overall", "", f"{report.overall_accuracy:.6f}"]]
    for (hi, lo), acc in sorted(report.neighboring_accuracies.items()):
        rows.append(["neighboring", f"{hi}-{lo}", f"{acc:.6f}"])
    rows.append(["neighboring_mean", "", f"{report.neighboring_mean:.6f}"])
    if report.mcnemar is not None:
        stat, p = report.mcnemar
        rows.append(["mcnemar_statistic", "", f"{stat:.6f}"])
        rows.append(["mcnemar_p", "", f"{p:.6g}"])
    path = out_dir / "headline_accuracy.csv"
    _write_csv(path, ["metric", "levels", "value"], rows)
    written.append(path)

    path = out_dir / "accuracy_curve.csv"
    _write_csv(
        path,
        ["labeling_ratio", "accuracy"],
        [[f"{r:.6f}", f"{a:.6f}"] for r, a in report.accuracy_curve],
    )
    written.append(path)

    for name, summaries in [
        ("score_distributions.csv", report.per_class_score_summary),
        ("uncertainty_by_class.csv", report.per_class_uncertainty_summary),
    ]:
        path = out_dir / name
        _write_csv(
            path,
            ["class", "min", "q1", "median", "q3", "max"],
            [[level] + [f"{v:.6g}" for v in summary] for level, summary in sorted(summaries.items())],
        )
        written.append(path)

    rows = []
    for k, entry in enumerate(report.selection_proportions):
        for level, frac in sorted(entry.items()):
            rows.append([k, level, f"{frac:.6f}"])
    path = out_dir / "selection_mix.csv"
    _write_csv(path, ["round", "class", "fraction"], rows)
    written.append(path)

    rows = []
    for trace in report.traces:
        for pos, score, label in trace.points:
            rows.append([trace.group_id, pos, f"{score:.6g}", label])
    path = out_dir / "sequence_traces.csv"
    _write_csv(path, ["group", "sequence_pos", "score", "label"], rows)
    written.append(path)
    return written
