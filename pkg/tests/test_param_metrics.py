import math
import random

import pytest

from trr.errors import EmptyUnionError, MissingRangeError, NonFiniteLeafError
from trr.knowledge_base import ParamRanges
from trr.param_metrics import (
    acc_at,
    active_recall,
    cosine_metric,
    evaluate_pair,
    flatten,
    l2_error,
    module_jaccard,
    normalized_l2,
    validate_feasible,
)

from oracles import (
    ref_acc,
    ref_cosine,
    ref_flatten,
    ref_l2,
    ref_module_jaccard,
    ref_norm_l2,
    ref_recall,
)


class TestFlatten:
    def test_nested_dot_key(self):
        assert flatten({"DelayOn": {"Mix": 0.3}}) == {"DelayOn.Mix": 0.3}

    def test_empty_tree(self):
        assert flatten({}) == {}

    def test_string_leaf_skipped(self):
        assert flatten({"A": {"mode": "hall", "Mix": 0.5}}) == {"A.Mix": 0.5}

    def test_booleans_become_binary(self):
        assert flatten({"DelayOn": True, "MuteOn": False}) == {"DelayOn": 1.0, "MuteOn": 0.0}

    def test_non_finite_leaf(self):
        with pytest.raises(NonFiniteLeafError, match="A.Mix"):
            flatten({"A": {"Mix": float("nan")}})

    def test_list_leaf_ignored(self):
        assert flatten({"A": [1, 2, 3], "B": 1.0}) == {"B": 1.0}

    def test_deep_nesting(self):
        tree = {"A": {"B": {"C": 2.0}}}
        assert flatten(tree) == {"A.B.C": 2.0}


class TestL2:
    def test_identical(self):
        assert l2_error({"a": 1.0}, {"a": 1.0}) == 0.0

    def test_worked_example(self):
        assert l2_error({"a": 1.0, "b": 0.0}, {"a": 1.05}) == pytest.approx(0.035355, abs=1e-6)

    def test_missing_as_zero(self):
        assert l2_error({"a": 3.0}, {"b": 4.0}) == pytest.approx(3.535534, abs=1e-6)

    def test_symmetric(self):
        a, b = {"x": 1.0, "y": 2.0}, {"x": 0.5, "z": 1.5}
        assert l2_error(a, b) == pytest.approx(l2_error(b, a))

    def test_empty_union(self):
        with pytest.raises(EmptyUnionError):
            l2_error({}, {})


class TestAcc:
    def test_identical(self):
        assert acc_at({"a": 1.0}, {"a": 1.0}) == 1.0

    def test_worked_example(self):
        assert acc_at({"a": 1.0, "b": 0.0}, {"a": 1.05}) == 1.0

    def test_all_outside(self):
        assert acc_at({"a": 1.0}, {"a": 0.5}) == 0.0


class TestRecall:
    def test_single_active_hit(self):
        assert active_recall({"a": 1.0}, {"a": 1.05}) == 1.0

    def test_no_active_dims_is_absent(self):
        assert active_recall({"a": 0.01}, {}) is None

    def test_partial(self):
        assert active_recall({"a": 1.0, "b": 0.5}, {"a": 1.0}) == 0.5


class TestCosine:
    def test_identical(self):
        assert cosine_metric({"a": 1.0, "b": 2.0}, {"a": 1.0, "b": 2.0}) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_metric({"a": 1.0}, {"b": 1.0}) == 0.0

    def test_worked_example(self):
        assert cosine_metric({"a": 1.0, "b": 1.0}, {"a": 1.0}) == pytest.approx(
            1 / math.sqrt(2), abs=1e-6
        )

    def test_zero_norm_absent(self):
        assert cosine_metric({"a": 0.0}, {"a": 1.0}) is None
        assert cosine_metric({}, {}) is None


class TestModuleJaccard:
    def test_identical_modules(self):
        tree = {"DelayOn": {"Mix": 0.1}, "ReverbOn": {"Mix": 0.2}}
        assert module_jaccard(tree, dict(tree)) == 1.0

    def test_worked_example_one_third(self):
        gt = {"DelayOn": {"Mix": 0.1}, "ReverbOn": {"Mix": 0.2}}
        pred = {"DelayOn": {"Mix": 0.3}, "ChorusOn": {"Depth": 0.5}}
        assert module_jaccard(gt, pred) == pytest.approx(1 / 3)

    def test_no_modules_absent(self):
        assert module_jaccard({"Gain": 1.0}, {"Level": 2.0}) is None

    def test_string_only_module_inactive(self):
        gt = {"DelayOn": {"mode": "tape"}}
        pred = {"DelayOn": {"Mix": 0.5}}
        assert module_jaccard(gt, pred) == 0.0

    def test_flag_value_mode(self):
        gt = {"DelayOn": 1.0, "ReverbOn": 0.0}
        pred = {"DelayOn": 1.0, "ReverbOn": 1.0}
        assert module_jaccard(gt, pred, activity="flag_value") == pytest.approx(0.5)
        # default reading: both numeric leaves count as active
        assert module_jaccard(gt, pred, activity="numeric_leaf") == 1.0


class TestNormalizedL2:
    def test_worked_example(self):
        ranges = ParamRanges({"DelayOn.Time": (0.0, 2000.0)})
        gt = {"DelayOn.Time": 500.0}
        pred = {"DelayOn.Time": 700.0}
        assert normalized_l2(gt, pred, ranges) == pytest.approx(0.1, abs=1e-9)

    def test_identical(self):
        ranges = ParamRanges({}, default=(0.0, 1.0))
        assert normalized_l2({"a": 0.4}, {"a": 0.4}, ranges) == 0.0

    def test_clamping(self):
        ranges = ParamRanges({"a": (0.0, 1.0)})
        assert normalized_l2({"a": 0.0}, {"a": 2.0}, ranges) == pytest.approx(1.0)

    def test_never_exceeds_one(self):
        ranges = ParamRanges({}, default=(0.0, 1.0))
        rng = random.Random(0)
        for _ in range(50):
            gt = {f"k{i}": rng.uniform(-5, 5) for i in range(rng.randint(1, 6))}
            pred = {f"k{i}": rng.uniform(-5, 5) for i in range(rng.randint(1, 6))}
            assert normalized_l2(gt, pred, ranges) <= 1.0

    def test_missing_range(self):
        ranges = ParamRanges({"a": (0.0, 1.0)})
        with pytest.raises(MissingRangeError):
            normalized_l2({"b": 0.5}, {}, ranges)

    def test_large_range_leaf_dominates_raw_but_not_normalized(self):
        # one leaf with a huge physical range, one with a unit range
        ranges = ParamRanges({"time": (0.0, 2000.0), "mix": (0.0, 1.0)})
        gt = {"time": 1000.0, "mix": 0.5}
        close = {"time": 1040.0, "mix": 0.5}     # 2% of range
        far_mix = {"time": 1000.0, "mix": 0.9}   # 40% of range
        assert l2_error(gt, close) > l2_error(gt, far_mix)
        assert normalized_l2(gt, close, ranges) < normalized_l2(gt, far_mix, ranges)


def random_tree(rng: random.Random, depth: int = 2) -> dict:
    tree = {}
    for i in range(rng.randint(1, 4)):
        key = rng.choice(["DelayOn", "ReverbOn", "DriveOn", "Gain", "Tone", "Mix"]) + str(i)
        roll = rng.random()
        if roll < 0.3 and depth > 0:
            tree[key] = random_tree(rng, depth - 1)
        elif roll < 0.5:
            tree[key] = rng.choice(["hall", "tape", "spring"])
        elif roll < 0.6:
            tree[key] = rng.random() > 0.5
        else:
            tree[key] = rng.uniform(-2, 2)
    return tree


class TestOracleEquivalence:
    def test_all_metrics_match_reference(self):
        rng = random.Random(42)
        ranges = ParamRanges({}, default=(-2.0, 2.0))
        checked = 0
        for _ in range(400):
            gt_tree, pred_tree = random_tree(rng), random_tree(rng)
            gt, pred = flatten(gt_tree), flatten(pred_tree)
            assert gt == ref_flatten(gt_tree)
            if not (set(gt) | set(pred)):
                continue
            checked += 1
            assert l2_error(gt, pred) == pytest.approx(ref_l2(gt, pred), abs=1e-9)
            assert acc_at(gt, pred) == pytest.approx(ref_acc(gt, pred), abs=1e-9)
            assert normalized_l2(gt, pred, ranges) == pytest.approx(
                ref_norm_l2(gt, pred, {}, (-2.0, 2.0)), abs=1e-9
            )
            for mine, ref in (
                (active_recall(gt, pred), ref_recall(gt, pred)),
                (cosine_metric(gt, pred), ref_cosine(gt, pred)),
                (module_jaccard(gt_tree, pred_tree), ref_module_jaccard(gt_tree, pred_tree)),
            ):
                if ref is None:
                    assert mine is None
                else:
                    assert mine == pytest.approx(ref, abs=1e-9)
        assert checked > 300


class TestValidateFeasible:
    def test_all_in_range(self):
        ranges = ParamRanges({"a": (0.0, 1.0), "b": (-1.0, 1.0)})
        report = validate_feasible({"a": 0.5, "b": 0.0}, ranges)
        assert report.passed and not report.violations
        assert report.checked_keys == 2

    def test_below_min_listed(self):
        ranges = ParamRanges({"a": (0.0, 1.0)})
        report = validate_feasible({"a": -0.5}, ranges)
        assert not report.passed
        assert "a" in report.violations[0]

    def test_unknown_keys_skipped(self):
        ranges = ParamRanges({"a": (0.0, 1.0)})
        report = validate_feasible({"mystery": 99.0}, ranges)
        assert report.passed and report.checked_keys == 0

    def test_custom_rule(self):
        ranges = ParamRanges({}, default=(0.0, 10.0))

        def q_positive(flat):
            return ["resonance must stay positive"] if flat.get("Q", 1.0) <= 0 else []

        report = validate_feasible({"Q": -1.0}, ranges, rules=[("q_rule", q_positive)])
        assert not report.passed
        assert any("q_rule" in v for v in report.violations)

    def test_kb_presets_always_pass(self):
        # values sampled inside their ranges always validate
        rng = random.Random(1)
        ranges = ParamRanges({}, default=(0.0, 1.0))
        for _ in range(20):
            flat = {f"k{i}": rng.random() for i in range(5)}
            assert validate_feasible(flat, ranges).passed


class TestEvaluatePair:
    def test_report_fields(self):
        gt = {"DelayOn": {"Mix": 0.3}, "Gain": 1.0}
        pred = {"DelayOn": {"Mix": 0.32}, "Gain": 0.9}
        report = evaluate_pair(gt, pred, ranges=ParamRanges({}, default=(0.0, 2.0)))
        assert report.union_dim == 2
        assert report.l2 == pytest.approx(ref_l2(flatten(gt), flatten(pred)))
        assert report.norm_l2 is not None
        data = report.to_dict()
        assert set(data) == {"l2", "norm_l2", "acc_at_0_1", "recall", "cosine",
                             "module_jaccard", "union_dim"}

    def test_norm_l2_absent_without_ranges(self):
        report = evaluate_pair({"a": 1.0}, {"a": 1.0})
        assert report.norm_l2 is None
        assert "null" in report.to_json()
