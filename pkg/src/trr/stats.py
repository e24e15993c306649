"""Paired statistics for method comparisons.

All tests operate on per-query differences between two methods. The suite
matches common practice for small paired retrieval benchmarks:

* percentile bootstrap confidence interval of the mean difference,
* two-sided sign-flip permutation test on the mean (exact enumeration of all
  2**n sign assignments for small n, Monte-Carlo with add-one smoothing
  otherwise),
* step-down Holm correction across a family of p-values,
* paired Cohen's d (mean / sample standard deviation),
* win/loss/tie decomposition with the median signed difference.

Seeded randomness uses PCG64 (``numpy.random.default_rng``); identical seeds
reproduce identical results on any platform. The mean is used as the
permutation statistic: for sign-flip tests on paired differences it orders
assignments identically to the t-statistic while keeping exact enumeration
simple.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import TooFewResamplesError, ZeroVarianceError

# Tolerance absorbing float rounding when comparing permuted means against
# the observed mean, so exact-tie assignments are never dropped.
_TIE_EPS = 1e-12


@dataclass(frozen=True)
class PairedSample:
    """Per-query differences (method A minus method B) for one metric."""

    metric_name: str
    diffs: np.ndarray
    n: int

    @classmethod
    def from_values(cls, metric_name: str, diffs: Sequence[float]) -> "PairedSample":
        arr = np.asarray(diffs, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("diffs must be a non-empty 1-D sequence")
        if not np.isfinite(arr).all():
            raise ValueError("diffs must be finite")
        return cls(metric_name=metric_name, diffs=arr, n=int(arr.size))


def bootstrap_ci(
    sample: PairedSample,
    level: float = 0.95,
    resamples: int = 10_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval of the resampled mean difference."""
    if resamples < 1000:
        raise TooFewResamplesError(f"resamples must be >= 1000, got {resamples}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, sample.n, size=(resamples, sample.n))
    means = sample.diffs[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    low, high = np.quantile(means, [alpha, 1.0 - alpha])
    return float(low), float(high)


def _exact_sign_flip_p(diffs: np.ndarray) -> float:
    n = diffs.size
    obs = abs(diffs.mean())
    total = 1 << n
    bits = np.arange(n, dtype=np.uint64)
    count = 0
    chunk = 1 << 16
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.uint64)
        signs = ((codes[:, None] >> bits) & 1).astype(np.float64) * 2.0 - 1.0
        means = np.abs(signs @ diffs) / n
        count += int(np.count_nonzero(means >= obs - _TIE_EPS))
    return count / total


def permutation_test(
    sample: PairedSample,
    max_exact_n: int = 20,
    resamples: int = 100_000,
    seed: int = 0,
) -> float:
    """Two-sided sign-flip permutation p-value for the mean difference.

    For ``n <= max_exact_n`` all 2**n sign assignments are enumerated and the
    p-value is exact. Otherwise signs are sampled and the estimate uses
    add-one smoothing, ``p = (1 + hits) / (1 + resamples)``, so p is never
    reported as 0.
    """
    diffs = sample.diffs
    if sample.n <= max_exact_n:
        return _exact_sign_flip_p(diffs)
    rng = np.random.default_rng(seed)
    obs = abs(diffs.mean())
    signs = rng.integers(0, 2, size=(resamples, sample.n)) * 2 - 1
    means = np.abs(signs @ diffs) / sample.n
    hits = int(np.count_nonzero(means >= obs - _TIE_EPS))
    return (1 + hits) / (1 + resamples)


def holm_correct(p_values: Sequence[float]) -> list[float]:
    """Step-down Holm adjustment, order-preserving, capped at 1.

    Adjusted p-values are ``max over j <= i of (m - j + 1) * p_(j)`` in the
    sorted order, then mapped back to the input order.
    """
    m = len(p_values)
    if m == 0:
        return []
    p = np.asarray(p_values, dtype=np.float64)
    if (p < 0).any() or (p > 1).any():
        raise ValueError("p-values must lie in [0, 1]")
    order = np.argsort(p, kind="stable")
    adjusted = np.empty(m, dtype=np.float64)
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, (m - rank) * p[idx])
        adjusted[idx] = min(1.0, running)
    return adjusted.tolist()


def cohens_d_paired(sample: PairedSample) -> float:
    """Paired effect size: mean(diffs) / sd(diffs) with n-1 denominator."""
    if sample.n < 2:
        raise ValueError(f"need n >= 2, got {sample.n}")
    sd = float(sample.diffs.std(ddof=1))
    if sd == 0.0:
        raise ZeroVarianceError("all paired differences are identical")
    return float(sample.diffs.mean()) / sd


@dataclass(frozen=True)
class WinLossTie:
    wins: int
    losses: int
    ties: int
    median_diff: float


def win_loss_tie(sample: PairedSample, tie_eps: float = 0.0) -> WinLossTie:
    """Counts of diffs > tie_eps, < -tie_eps and |diff| <= tie_eps."""
    d = sample.diffs
    wins = int(np.count_nonzero(d > tie_eps))
    losses = int(np.count_nonzero(d < -tie_eps))
    ties = sample.n - wins - losses
    return WinLossTie(wins=wins, losses=losses, ties=ties, median_diff=float(np.median(d)))


@dataclass(frozen=True)
class ComparisonReport:
    """Full paired comparison for one metric and one method pair."""

    metric_name: str
    n: int
    mean_diff: float
    ci_low: float
    ci_high: float
    p_perm: float
    p_holm: Optional[float]
    cohens_d: Optional[float]
    wins: int
    losses: int
    ties: int
    median_diff: float
    bootstrap_resamples: int
    permutation_resamples: int
    seed: int

    def __post_init__(self):
        assert self.wins + self.losses + self.ties == self.n
        # Percentile-bootstrap property: the interval brackets the sample mean.
        assert self.ci_low <= self.mean_diff + 1e-9
        assert self.ci_high >= self.mean_diff - 1e-9

    def to_dict(self) -> dict:
        return {
            "metric": self.metric_name,
            "n": self.n,
            "mean_diff": self.mean_diff,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "p_perm": self.p_perm,
            "p_holm": self.p_holm,
            "cohens_d": self.cohens_d,
            "wins": self.wins,
            "losses": self.losses,
            "ties": self.ties,
            "median_diff": self.median_diff,
            "bootstrap_resamples": self.bootstrap_resamples,
            "permutation_resamples": self.permutation_resamples,
            "seed": self.seed,
        }


def compare(
    sample: PairedSample,
    level: float = 0.95,
    bootstrap_resamples: int = 10_000,
    permutation_resamples: int = 100_000,
    max_exact_n: int = 20,
    seed: int = 0,
) -> ComparisonReport:
    """Bundle all paired statistics for one sample into a report.

    ``cohens_d`` is None when the differences have zero variance (or n < 2);
    ``p_holm`` is filled by the caller once the whole metric family is known.
    """
    low, high = bootstrap_ci(sample, level=level, resamples=bootstrap_resamples, seed=seed)
    p = permutation_test(sample, max_exact_n=max_exact_n, resamples=permutation_resamples, seed=seed)
    try:
        d = cohens_d_paired(sample)
    except (ZeroVarianceError, ValueError):
        d = None
    wlt = win_loss_tie(sample)
    return ComparisonReport(
        metric_name=sample.metric_name,
        n=sample.n,
        mean_diff=float(sample.diffs.mean()),
        ci_low=low,
        ci_high=high,
        p_perm=p,
        p_holm=None,
        cohens_d=d,
        wins=wlt.wins,
        losses=wlt.losses,
        ties=wlt.ties,
        median_diff=wlt.median_diff,
        bootstrap_resamples=bootstrap_resamples,
        permutation_resamples=permutation_resamples,
        seed=seed,
    )
