"""Classification metrics and the Mann-Whitney U test.

The U test is exact (full enumeration of labelings) whenever n_a * n_b <= 400
and otherwise uses the normal approximation with tie-corrected variance and
continuity correction. AUC uses the midrank (Wilcoxon) formulation so the
cross-module identity auc = U_pos / (n_pos * n_neg) holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import InvalidArgumentError, UndefinedMetricError

if TYPE_CHECKING:
    from .orchestrator import RunReport

EXACT_LIMIT = 400


@dataclass(frozen=True)
class UTestResult:
    u_statistic: float
    p_value: float
    method: str  # exact | normal-approx
    n_a: int
    n_b: int


def accuracy(labels: np.ndarray, scores: np.ndarray, threshold: float = 0.5) -> float:
    """Fraction of rows where (score >= threshold) equals the label."""
    labels = np.asarray(labels)
    scores = np.asarray(scores)
    if labels.shape[0] == 0 or labels.shape != scores.shape:
        raise InvalidArgumentError("labels and scores must be nonempty and aligned")
    preds = (scores >= threshold).astype(labels.dtype)
    return float(np.mean(preds == labels))


def _midranks(values: np.ndarray) -> np.ndarray:
    """Fractional ranks (1-based); ties get the mean of their rank range."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.shape[0], dtype=np.float64)
    i = 0
    while i < values.shape[0]:
        j = i
        while j + 1 < values.shape[0] and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auc_roc(labels: np.ndarray, scores: np.ndarray) -> float:
    """Probability a random positive outranks a random negative (ties count 1/2)."""
    labels = np.asarray(labels)
    scores = np.asarray(scores)
    n_pos = int(np.sum(labels == 1))
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    ranks = _midranks(scores)
    rank_sum_pos = float(np.sum(ranks[labels == 1]))
    u_pos = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u_pos / (n_pos * n_neg)


def mann_whitney_u(
    sample_a, sample_b, alternative: str = "two-sided"
) -> UTestResult:
    """Rank-sum Mann-Whitney U test; U is reported for sample_a."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.shape[0] < 1 or b.shape[0] < 1:
        raise InvalidArgumentError("both samples must be nonempty")
    if alternative not in ("two-sided", "greater", "less"):
        raise InvalidArgumentError("alternative must be two-sided, greater, or less")
    n_a, n_b = a.shape[0], b.shape[0]
    combined = np.concatenate([a, b])
    ranks = _midranks(combined)
    u_obs = float(np.sum(ranks[:n_a])) - n_a * (n_a + 1) / 2.0

    if n_a * n_b <= EXACT_LIMIT:
        p = _exact_p(ranks, n_a, u_obs, alternative)
        method = "exact"
    else:
        p = _normal_p(combined, ranks, n_a, n_b, u_obs, alternative)
        method = "normal-approx"
    return UTestResult(
        u_statistic=u_obs, p_value=min(p, 1.0), method=method, n_a=n_a, n_b=n_b
    )


def _exact_p(ranks: np.ndarray, n_a: int, u_obs: float, alternative: str) -> float:
    """Exact permutation p over all C(n, n_a) labelings.

    Counts subsets by rank sum with a dynamic program instead of literal
    enumeration; midranks are half-integers, so doubling them makes every
    sum an exact integer.
    """
    n = ranks.shape[0]
    ranks2 = np.rint(ranks * 2).astype(np.int64)
    max_sum = int(ranks2.sum())
    # dp[j, s] = number of size-j subsets with doubled-rank sum s.
    dp = np.zeros((n_a + 1, max_sum + 1), dtype=np.float64)
    dp[0, 0] = 1.0
    for r in ranks2:
        upper = min(n_a, n)
        for j in range(upper - 1, -1, -1):
            dp[j + 1, r:] += dp[j, : max_sum + 1 - r]
    counts = dp[n_a]
    sums2 = np.nonzero(counts)[0]
    offset = n_a * (n_a + 1) / 2.0
    u_vals = sums2 / 2.0 - offset
    mu = n_a * (n - n_a) / 2.0
    eps = 1e-9
    if alternative == "two-sided":
        mask = np.abs(u_vals - mu) >= abs(u_obs - mu) - eps
    elif alternative == "greater":
        mask = u_vals >= u_obs - eps
    else:
        mask = u_vals <= u_obs + eps
    return float(counts[sums2][mask].sum() / counts[sums2].sum())


def _normal_p(
    combined: np.ndarray,
    ranks: np.ndarray,
    n_a: int,
    n_b: int,
    u_obs: float,
    alternative: str,
) -> float:
    n = n_a + n_b
    _, tie_counts = np.unique(combined, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (n * (n - 1))
    var = n_a * n_b / 12.0 * (n + 1 - tie_term)
    if var == 0.0:
        return 1.0
    mu = n_a * n_b / 2.0
    sd = math.sqrt(var)
    if alternative == "two-sided":
        z = (abs(u_obs - mu) - 0.5) / sd
        return 2.0 * _norm_sf(max(z, 0.0))
    if alternative == "greater":
        z = (u_obs - mu - 0.5) / sd
    else:
        z = (mu - u_obs - 0.5) / sd
    return _norm_sf(z)


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def compare_runs(
    reports_a: list["RunReport"],
    reports_b: list["RunReport"],
    metric: str = "acc",
    target: float | None = None,
    alternative: str = "two-sided",
) -> UTestResult:
    """U test on a final-round metric (or rounds-to-target) across run reports."""
    if len(reports_a) < 3 or len(reports_b) < 3:
        raise InvalidArgumentError("need at least 3 reports per side")
    if metric not in ("acc", "auc", "rounds-to-target"):
        raise InvalidArgumentError("metric must be acc, auc, or rounds-to-target")
    if metric == "rounds-to-target" and target is None:
        raise InvalidArgumentError("rounds-to-target requires a target accuracy")

    def extract(report):
        if metric == "rounds-to-target":
            return report.rounds_to_target(target)
        value = getattr(report.records[-1], "acc" if metric == "acc" else "auc")
        if value is None or not math.isfinite(value):
            raise InvalidArgumentError("metric %r unavailable in a report" % metric)
        return value

    return mann_whitney_u(
        [extract(r) for r in reports_a],
        [extract(r) for r in reports_b],
        alternative=alternative,
    )
