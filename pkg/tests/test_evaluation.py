"""Pair-set construction, ranking metrics, significance, and reports."""

import csv

import numpy as np
import pytest

from activerank.evaluation import (
    EvaluationError,
    EvaluationReport,
    FiveNumberSummary,
    SequenceTrace,
    PairSet,
    build_neighboring_pairs,
    build_overall_pairs,
    five_number_summary,
    mcnemar,
    pair_accuracy,
    score_distribution_by_class,
    selection_proportions,
    sequence_trace,
    uncertainty_by_class,
    write_report_tables,
)


def random_labels(n, num_levels, seed, weights=None):
    rng = np.random.default_rng(seed)
    levels = rng.choice(num_levels, size=n, p=weights)
    return {f"t{i:04d}": int(levels[i]) for i in range(n)}


# -- overall pair set -----------------------------------------------------------


def test_overall_pairs_strictly_ordered():
    labels = random_labels(200, 4, seed=0)
    pair_set = build_overall_pairs(labels, seed=1)
    assert pair_set.kind == "overall"
    assert len(pair_set) > 0
    for hi, lo in pair_set.pairs:
        assert labels[hi] > labels[lo]


def test_overall_pairs_balanced_by_subsampling():
    labels = random_labels(400, 4, seed=2, weights=[0.7, 0.15, 0.1, 0.05])
    counts = {}
    for level in labels.values():
        counts[level] = counts.get(level, 0) + 1
    min_count = min(counts.values())
    pair_set = build_overall_pairs(labels, seed=3)
    used_per_class = {level: set() for level in range(4)}
    for hi, lo in pair_set.pairs:
        used_per_class[labels[hi]].add(hi)
        used_per_class[labels[lo]].add(lo)
    for level, used in used_per_class.items():
        assert len(used) <= min_count, (level, len(used), min_count)
    assert len(pair_set) <= 4 * min_count


def test_overall_pairs_deterministic():
    labels = random_labels(150, 4, seed=4)
    assert build_overall_pairs(labels, seed=5).pairs == build_overall_pairs(labels, seed=5).pairs
    assert build_overall_pairs(labels, seed=5).pairs != build_overall_pairs(labels, seed=6).pairs


def test_overall_pairs_requires_every_class():
    labels = {f"t{i}": i % 3 for i in range(30)}  # classes 0..2 only
    labels["odd"] = 4  # creates a gap at class 3
    with pytest.raises(EvaluationError, match="class 3"):
        build_overall_pairs(labels, seed=0)
    with pytest.raises(EvaluationError):
        build_overall_pairs({}, seed=0)


# -- neighboring pair sets --------------------------------------------------------


def test_neighboring_sets_cover_adjacent_levels():
    labels = random_labels(200, 4, seed=7)
    sets = build_neighboring_pairs(labels, seed=8)
    assert [s.levels for s in sets] == [(1, 0), (2, 1), (3, 2)]
    for s in sets:
        assert s.kind == "neighboring"
        hi_level, lo_level = s.levels
        for hi, lo in s.pairs:
            assert labels[hi] == hi_level
            assert labels[lo] == lo_level


def test_neighboring_one_pair_per_high_sample():
    labels = random_labels(200, 3, seed=9)
    counts = {}
    for level in labels.values():
        counts[level] = counts.get(level, 0) + 1
    sets = build_neighboring_pairs(labels, seed=10)
    for s in sets:
        assert len(s) == counts[s.levels[0]]
        assert len({hi for hi, _ in s.pairs}) == len(s)


def test_neighboring_extra_partners():
    labels = random_labels(200, 3, seed=11)
    for s in build_neighboring_pairs(labels, seed=12, partners_per_sample=2):
        per_high = {}
        for hi, lo in s.pairs:
            per_high.setdefault(hi, set()).add(lo)
        for partners in per_high.values():
            assert len(partners) == 2


def test_neighboring_missing_level_gives_empty_set():
    labels = {"a": 0, "b": 0, "c": 2, "d": 2}  # no class 1
    sets = build_neighboring_pairs(labels, seed=0)
    assert sets[0].empty and sets[1].empty
    assert sets[0].levels == (1, 0)


# -- accuracy --------------------------------------------------------------------


def test_pair_accuracy_hand_example():
    pair_set = PairSet(pairs=(("a", "b"), ("c", "d"), ("e", "f")), kind="overall")
    scores = {"a": 2.0, "b": 1.0, "c": 0.0, "d": 5.0, "e": 1.0, "f": 1.0}
    acc, flags = pair_accuracy(scores, pair_set)
    assert acc == pytest.approx(1 / 3)
    assert flags.tolist() == [True, False, False]  # exact tie is wrong


def test_pair_accuracy_invariant_under_monotone_transform():
    rng = np.random.default_rng(13)
    ids = [f"t{i}" for i in range(100)]
    scores = {sid: float(rng.normal()) for sid in ids}
    pairs = tuple((ids[i], ids[i + 50]) for i in range(50))
    pair_set = PairSet(pairs=pairs, kind="overall")
    base = pair_accuracy(scores, pair_set)
    for transform in (lambda v: 3.0 * v + 7.0, np.tanh, lambda v: v**3):
        warped = {sid: float(transform(v)) for sid, v in scores.items()}
        assert pair_accuracy(warped, pair_set)[0] == base[0]


def test_pair_accuracy_random_scores_near_half():
    rng = np.random.default_rng(14)
    ids = [f"t{i}" for i in range(20000)]
    scores = {sid: float(rng.normal()) for sid in ids}
    pairs = tuple((ids[2 * i], ids[2 * i + 1]) for i in range(10000))
    acc, _ = pair_accuracy(scores, PairSet(pairs=pairs, kind="overall"))
    assert acc == pytest.approx(0.5, abs=0.02)


def test_pair_accuracy_rejects_gaps():
    pair_set = PairSet(pairs=(("a", "b"),), kind="overall")
    with pytest.raises(EvaluationError, match="'b'"):
        pair_accuracy({"a": 1.0}, pair_set)
    with pytest.raises(EvaluationError, match="empty"):
        pair_accuracy({}, PairSet(pairs=(), kind="overall"))


# -- significance -----------------------------------------------------------------


def flags_with_counts(b, c, both_right=12, both_wrong=6):
    """Two correctness vectors with the given discordant cell counts."""
    a = np.array([True] * b + [False] * c + [True] * both_right + [False] * both_wrong)
    other = np.array([False] * b + [True] * c + [True] * both_right + [False] * both_wrong)
    return a, other


def test_mcnemar_frozen_chi_square_case():
    a, b = flags_with_counts(15, 5)
    stat, p = mcnemar(a, b)
    assert stat == pytest.approx(4.05, abs=1e-12)
    assert p == pytest.approx(0.04417134490844271, abs=1e-12)


def test_mcnemar_frozen_second_chi_square_case():
    a, b = flags_with_counts(40, 20)
    stat, p = mcnemar(a, b)
    assert stat == pytest.approx(6.016666666666667, abs=1e-12)
    assert p == pytest.approx(0.014171388254012323, abs=1e-12)


def test_mcnemar_frozen_exact_case():
    a, b = flags_with_counts(3, 1)
    stat, p = mcnemar(a, b)
    assert stat == 1.0
    assert p == pytest.approx(0.625, abs=1e-12)


def test_mcnemar_no_discordance():
    a, b = flags_with_counts(0, 0)
    assert mcnemar(a, b) == (0.0, 1.0)
    assert mcnemar(a, a) == (0.0, 1.0)


def test_mcnemar_symmetric_in_arguments():
    for bb, cc in [(15, 5), (3, 1), (7, 2), (30, 11)]:
        a, b = flags_with_counts(bb, cc)
        assert mcnemar(a, b) == mcnemar(b, a)


def test_mcnemar_agrees_with_scipy():
    stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(15)
    for _ in range(40):
        n = int(rng.integers(10, 300))
        a = rng.random(n) < 0.7
        b = rng.random(n) < 0.6
        bb = int(np.count_nonzero(a & ~b))
        cc = int(np.count_nonzero(~a & b))
        if bb + cc == 0:
            continue
        stat, p = mcnemar(a, b)
        if bb + cc >= 10:
            expected_stat = (abs(bb - cc) - 1) ** 2 / (bb + cc)
            expected_p = float(stats.chi2.sf(expected_stat, df=1))
        else:
            expected_stat = min(bb, cc)
            expected_p = float(stats.binomtest(min(bb, cc), bb + cc, 0.5).pvalue)
        assert stat == pytest.approx(expected_stat, rel=1e-12)
        assert p == pytest.approx(expected_p, rel=1e-9)


def test_mcnemar_rejects_shape_mismatch():
    with pytest.raises(EvaluationError):
        mcnemar(np.array([True, False]), np.array([True]))


# -- distribution summaries --------------------------------------------------------


def test_five_number_summary_frozen_quartiles():
    summary = five_number_summary([1.0, 2.0, 3.0, 4.0])
    assert summary == FiveNumberSummary(1.0, 1.75, 2.5, 3.25, 4.0)


def test_five_number_summary_matches_sorted_oracle():
    rng = np.random.default_rng(16)
    for _ in range(20):
        values = rng.normal(size=int(rng.integers(1, 60))).tolist()
        summary = five_number_summary(values)
        ordered = sorted(values)
        assert summary.min == ordered[0]
        assert summary.max == ordered[-1]
        assert ordered[0] <= summary.q1 <= summary.median <= summary.q3 <= ordered[-1]
        below = sum(v <= summary.median for v in values)
        assert below >= len(values) / 2


def test_five_number_summary_singleton_and_empty():
    assert five_number_summary([7.0]) == FiveNumberSummary(7.0, 7.0, 7.0, 7.0, 7.0)
    with pytest.raises(EvaluationError):
        five_number_summary([])


def test_summaries_grouped_by_class():
    labels = {"a": 0, "b": 0, "c": 1}
    scores = {"a": 1.0, "b": 3.0, "c": 10.0}
    by_class = score_distribution_by_class(scores, labels)
    assert set(by_class) == {0, 1}
    assert by_class[0].median == 2.0
    assert by_class[1] == FiveNumberSummary(10.0, 10.0, 10.0, 10.0, 10.0)
    variances = {"a": 0.1, "b": 0.3, "c": 0.2}
    assert uncertainty_by_class(variances, labels)[0].max == 0.3
    with pytest.raises(EvaluationError, match="'zz'"):
        score_distribution_by_class({"zz": 1.0}, labels)


# -- selection mix ------------------------------------------------------------------


def test_selection_proportions_accumulate():
    labels = {"a": 0, "b": 1, "c": 1, "d": 3}
    rounds = [["a", "b"], ["c"], ["d"]]
    mix = selection_proportions(rounds, labels, num_levels=4)
    assert mix[0] == {0: 0.5, 1: 0.5, 2: 0.0, 3: 0.0}
    assert mix[1] == {0: pytest.approx(1 / 3), 1: pytest.approx(2 / 3), 2: 0.0, 3: 0.0}
    assert mix[2] == {0: 0.25, 1: 0.5, 2: 0.0, 3: 0.25}
    for entry in mix:
        assert sum(entry.values()) == pytest.approx(1.0)


def test_selection_proportions_reject_bad_input():
    with pytest.raises(EvaluationError):
        selection_proportions([], {"a": 0}, 4)
    with pytest.raises(EvaluationError, match="'b'"):
        selection_proportions([["a", "b"]], {"a": 0}, 4)


# -- sequence traces ----------------------------------------------------------------


class FakeSample:
    def __init__(self, id, label, group, pos):
        self.id = id
        self.ordinal_label = label
        self.group_id = group
        self.sequence_pos = pos


def test_sequence_trace_sorts_by_position():
    samples = [
        FakeSample("b", 1, "g1", 2),
        FakeSample("a", 0, "g1", 0),
        FakeSample("c", 2, "g1", 5),
    ]
    scores = {"a": 0.1, "b": 0.4, "c": 0.9}
    trace = sequence_trace(scores, samples)
    assert trace.group_id == "g1"
    assert trace.points == ((0, 0.1, 0), (2, 0.4, 1), (5, 0.9, 2))


def test_sequence_trace_errors():
    with pytest.raises(EvaluationError, match="empty"):
        sequence_trace({}, [])
    mixed = [FakeSample("a", 0, "g1", 0), FakeSample("b", 0, "g2", 1)]
    with pytest.raises(EvaluationError, match="groups"):
        sequence_trace({"a": 0.0, "b": 0.0}, mixed)
    no_pos = [FakeSample("a", 0, "g1", None)]
    with pytest.raises(EvaluationError, match="positions"):
        sequence_trace({"a": 0.0}, no_pos)
    with pytest.raises(EvaluationError, match="'a'"):
        sequence_trace({}, [FakeSample("a", 0, "g1", 0)])
    with pytest.raises(EvaluationError, match="increasing"):
        SequenceTrace(group_id="g", points=((1, 0.0, 0), (1, 0.1, 0)))


# -- report serialization -------------------------------------------------------------


def sample_report():
    return EvaluationReport(
        overall_accuracy=0.87,
        neighboring_accuracies={(1, 0): 0.8, (2, 1): 0.7, (3, 2): 0.65},
        neighboring_mean=pytest.approx(0.7166666666666667).expected,
        per_class_score_summary={
            0: FiveNumberSummary(-1.0, -0.5, 0.0, 0.5, 1.0),
            1: FiveNumberSummary(0.0, 0.5, 1.0, 1.5, 2.0),
        },
        per_class_uncertainty_summary={0: FiveNumberSummary(0.0, 0.1, 0.2, 0.3, 0.4)},
        selection_proportions=[{0: 0.7, 1: 0.2, 2: 0.05, 3: 0.05}],
        mcnemar=(4.05, 0.0441713449),
        accuracy_curve=[(20.0, 0.7), (25.0, 0.75), (30.0, 0.8)],
        traces=[SequenceTrace(group_id="g1", points=((0, 0.1, 0), (1, 0.5, 1)))],
    )


def test_report_round_trips_losslessly(tmp_path):
    report = sample_report()
    path = tmp_path / "eval.json"
    report.save(path)
    loaded = EvaluationReport.load(path)
    assert loaded.to_dict() == report.to_dict()
    assert loaded.neighboring_accuracies == report.neighboring_accuracies
    assert loaded.per_class_score_summary == report.per_class_score_summary
    assert loaded.traces == report.traces


def test_report_rejects_out_of_range_metrics():
    with pytest.raises(EvaluationError):
        EvaluationReport(overall_accuracy=1.2, neighboring_accuracies={}, neighboring_mean=0.5)
    with pytest.raises(EvaluationError, match="order"):
        EvaluationReport(
            overall_accuracy=0.5,
            neighboring_accuracies={},
            neighboring_mean=0.5,
            per_class_score_summary={0: FiveNumberSummary(1.0, 0.5, 0.0, 0.5, 1.0)},
        )


def test_csv_tables_parse_back(tmp_path):
    report = sample_report()
    written = write_report_tables(report, tmp_path)
    names = sorted(p.name for p in written)
    assert names == [
        "accuracy_curve.csv",
        "headline_accuracy.csv",
        "score_distributions.csv",
        "selection_mix.csv",
        "sequence_traces.csv",
        "uncertainty_by_class.csv",
    ]

    with (tmp_path / "accuracy_curve.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [(float(r["labeling_ratio"]), float(r["accuracy"])) for r in rows] == [
        (20.0, 0.7), (25.0, 0.75), (30.0, 0.8),
    ]

    with (tmp_path / "headline_accuracy.csv").open() as fh:
        table = {(r["metric"], r["levels"]): r["value"] for r in csv.DictReader(fh)}
    assert float(table[("overall", "")]) == pytest.approx(0.87)
    assert float(table[("neighboring", "2-1")]) == pytest.approx(0.7)
    assert float(table[("mcnemar_statistic", "")]) == pytest.approx(4.05)

    with (tmp_path / "selection_mix.csv").open() as fh:
        mix_rows = list(csv.DictReader(fh))
    assert len(mix_rows) == 4  # one per class for the single round
