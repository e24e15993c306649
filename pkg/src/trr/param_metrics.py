"""Flattening and parameter-space metrics for nested preset trees.

A parameter tree flattens to a sparse vector keyed by dot-joined paths
(``DelayOn.Mix``). Numeric leaves are kept (booleans as 0/1), string and
other non-numeric leaves are ignored. Metrics are computed over the union of
the two key sets with missing keys treated as zeros, except where noted:

==============  ============================================================
l2              RMSE over the union keys
norm_l2         RMSE after min-max normalization of each leaf to [0, 1]
                using physical ranges (values clamped before differencing)
acc_at_0_1      fraction of union keys with absolute error <= tolerance
recall          fraction of *active* ground-truth keys (|gt| > 0.05)
                recovered within tolerance; None when no key is active
cosine          cosine over the union keys; None when either norm is zero
module_jaccard  Jaccard over active module sets (top-level keys ending in
                ``On``); None when both sets are empty
==============  ============================================================

Aggregation over queries must average the defined (non-None) values only;
returning None instead of 0 for undefined cases prevents silent bias on
degenerate queries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .errors import EmptyUnionError, NonFiniteLeafError
from .knowledge_base import ParamRanges

FlatParamVector = dict[str, float]

DEFAULT_ACC_TOL = 0.1
DEFAULT_ACTIVE_THRESH = 0.05

METRIC_NAMES = ("l2", "norm_l2", "acc_at_0_1", "recall", "cosine", "module_jaccard")
LOWER_IS_BETTER = frozenset({"l2", "norm_l2"})


def flatten(tree: dict, prefix: str = "") -> FlatParamVector:
    """Depth-first flatten of numeric leaves under dot-joined keys.

    Booleans map to 0/1 so on/off switches participate in numeric metrics;
    strings and other non-numeric leaves are skipped. A NaN or infinite leaf
    raises :class:`NonFiniteLeafError` naming its path.
    """
    out: FlatParamVector = {}
    for key, value in tree.items():
        path = f"{prefix}.{key}" if prefix else key
        if isinstance(value, dict):
            out.update(flatten(value, path))
        elif isinstance(value, bool):
            out[path] = 1.0 if value else 0.0
        elif isinstance(value, (int, float)):
            value = float(value)
            if not math.isfinite(value):
                raise NonFiniteLeafError(path)
            out[path] = value
        # strings, lists, nulls: non-numeric leaves, ignored
    return out


def _union_values(gt: FlatParamVector, pred: FlatParamVector):
    keys = sorted(set(gt) | set(pred))
    if not keys:
        raise EmptyUnionError("both parameter vectors are empty")
    g = [gt.get(k, 0.0) for k in keys]
    p = [pred.get(k, 0.0) for k in keys]
    return keys, g, p


def l2_error(gt: FlatParamVector, pred: FlatParamVector) -> float:
    """Root mean squared error over the union key set."""
    _, g, p = _union_values(gt, pred)
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(g, p)) / len(g))


def acc_at(gt: FlatParamVector, pred: FlatParamVector, tol: float = DEFAULT_ACC_TOL) -> float:
    """Fraction of union keys with |gt - pred| <= tol."""
    _, g, p = _union_values(gt, pred)
    return sum(1 for a, b in zip(g, p) if abs(a - b) <= tol) / len(g)


def active_recall(
    gt: FlatParamVector,
    pred: FlatParamVector,
    active_thresh: float = DEFAULT_ACTIVE_THRESH,
    tol: float = DEFAULT_ACC_TOL,
) -> Optional[float]:
    """Recovery rate of active ground-truth keys; None when none are active."""
    active = [k for k, v in gt.items() if abs(v) > active_thresh]
    if not active:
        return None
    hits = sum(1 for k in active if abs(gt[k] - pred.get(k, 0.0)) <= tol)
    return hits / len(active)


def cosine_metric(gt: FlatParamVector, pred: FlatParamVector) -> Optional[float]:
    """Cosine over the union keys; None when either vector has zero norm."""
    if not gt and not pred:
        return None
    _, g, p = _union_values(gt, pred)
    ng = math.sqrt(sum(a * a for a in g))
    np_ = math.sqrt(sum(b * b for b in p))
    if ng == 0.0 or np_ == 0.0:
        return None
    return sum(a * b for a, b in zip(g, p)) / (ng * np_)


def _active_modules(tree: dict, activity: str) -> set[str]:
    modules = set()
    for key, value in tree.items():
        if not key.endswith("On"):
            continue
        if activity == "numeric_leaf":
            if flatten({key: value}):
                modules.add(key)
        elif activity == "flag_value":
            # flag reading: the module key itself is a numeric leaf > 0.5
            if isinstance(value, bool):
                if value:
                    modules.add(key)
            elif isinstance(value, (int, float)) and float(value) > 0.5:
                modules.add(key)
        else:
            raise ValueError(f"unknown activity mode {activity!r}")
    return modules


def module_jaccard(gt_tree: dict, pred_tree: dict, activity: str = "numeric_leaf") -> Optional[float]:
    """Jaccard over active module sets; None when both sets are empty.

    A module is a top-level key ending in ``On``. Under the default
    ``numeric_leaf`` reading it is active when it contributes at least one
    numeric leaf after flattening; the ``flag_value`` reading instead requires
    the key's own value to be a numeric leaf > 0.5.
    """
    gt_mods = _active_modules(gt_tree, activity)
    pred_mods = _active_modules(pred_tree, activity)
    union = gt_mods | pred_mods
    if not union:
        return None
    return len(gt_mods & pred_mods) / len(union)


def normalized_l2(gt: FlatParamVector, pred: FlatParamVector, ranges: ParamRanges) -> float:
    """RMSE after min-max normalization of each union key to [0, 1].

    Every union key needs a configured range (explicit or default); values
    are clamped to [0, 1] before differencing, so the result never exceeds 1.
    """
    keys, g, p = _union_values(gt, pred)
    total = 0.0
    for key, a, b in zip(keys, g, p):
        na = ranges.normalize(key, a)
        nb = ranges.normalize(key, b)
        total += (na - nb) ** 2
    return math.sqrt(total / len(keys))


@dataclass(frozen=True)
class ValidationReport:
    """Feasibility check result: bound violations plus named rule failures."""

    passed: bool
    violations: tuple[str, ...]
    checked_keys: int

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "violations": list(self.violations),
            "checked_keys": self.checked_keys,
        }


ConstraintRule = tuple[str, Callable[[FlatParamVector], Sequence[str]]]


def validate_feasible(
    pred: FlatParamVector,
    ranges: ParamRanges,
    rules: Sequence[ConstraintRule] = (),
) -> ValidationReport:
    """Check physical bounds (l <= value <= u) plus any extra named rules.

    Keys with no configured range are skipped (no bound is known for them).
    Violations are report content, never exceptions: retrieval results drawn
    from a real preset knowledge base are expected to pass.
    """
    violations: list[str] = []
    checked = 0
    for key in sorted(pred):
        if not ranges.has(key):
            continue
        checked += 1
        lo, hi = ranges.get(key)
        value = pred[key]
        if value < lo or value > hi:
            violations.append(f"{key}: {value} outside [{lo}, {hi}]")
    for name, rule in rules:
        for message in rule(pred):
            violations.append(f"{name}: {message}")
    return ValidationReport(
        passed=not violations, violations=tuple(violations), checked_keys=checked
    )


@dataclass(frozen=True)
class MetricReport:
    """All parameter-space metrics for one (ground truth, prediction) pair."""

    l2: float
    norm_l2: Optional[float]
    acc_at_0_1: float
    recall: Optional[float]
    cosine: Optional[float]
    module_jaccard: Optional[float]
    union_dim: int

    def get(self, metric: str) -> Optional[float]:
        return getattr(self, metric)

    def to_dict(self) -> dict:
        return {
            "l2": self.l2,
            "norm_l2": self.norm_l2,
            "acc_at_0_1": self.acc_at_0_1,
            "recall": self.recall,
            "cosine": self.cosine,
            "module_jaccard": self.module_jaccard,
            "union_dim": self.union_dim,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def evaluate_pair(
    gt_tree: dict,
    pred_tree: dict,
    ranges: Optional[ParamRanges] = None,
    acc_tol: float = DEFAULT_ACC_TOL,
    active_thresh: float = DEFAULT_ACTIVE_THRESH,
    jaccard_activity: str = "numeric_leaf",
) -> MetricReport:
    """Compute the full metric suite for one ground-truth/prediction pair.

    ``norm_l2`` is computed only when ``ranges`` is supplied.
    """
    gt = flatten(gt_tree)
    pred = flatten(pred_tree)
    keys = set(gt) | set(pred)
    return MetricReport(
        l2=l2_error(gt, pred),
        norm_l2=normalized_l2(gt, pred, ranges) if ranges is not None else None,
        acc_at_0_1=acc_at(gt, pred, acc_tol),
        recall=active_recall(gt, pred, active_thresh, acc_tol),
        cosine=cosine_metric(gt, pred),
        module_jaccard=module_jaccard(gt_tree, pred_tree, jaccard_activity),
        union_dim=len(keys),
    )
