"""Rank-based significance tests: Kruskal-Wallis, Bonferroni adjustment and Friedman."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

# Published mean BER rows for the heuristic and linear detectors on the 7..14 dB sweep,
# emitted under the "paper-reported" label so they never mix with simulated rows.
REPORTED_SNR_DB = (7, 8, 9, 10, 11, 12, 13, 14)
REPORTED_MEAN_BER = {
    "FPA": (0.018, 0.0085, 0.004, 0.0017, 5.2e-4, 1.5e-4, 3.5e-5, 7.2e-6),
    "Std-GA": (0.028, 0.018, 0.0101, 0.007, 0.005, 0.0038, 0.003, 0.0029),
    "TS": (0.034, 0.018, 0.0093, 0.005, 0.0013, 0.0002, 4.4e-5, 6.1e-6),
    "SQ": (0.033, 0.018, 0.008, 0.0035, 8.5e-4, 1.1e-4, 2.0e-5, 6.1e-6),
    "MF": (0.031, 0.022, 0.016, 0.013, 0.011, 0.011, 0.009, 0.009),
    "Decorrelator": (0.027, 0.017, 0.009, 0.005, 0.002, 0.0009, 3.6e-4, 0.0002),
    "MMSE": (0.027, 0.013, 0.006, 0.0025, 0.0008, 3.0e-4, 1.1e-4, 6.5e-5),
}
REPORTED_FRIEDMAN_RANKS = {"FPA": 1.625, "SQ": 1.875, "TS": 3.00, "Std-GA": 3.50}


@dataclass(frozen=True)
class RankedSamples:
    groups: list
    ranks: list  # per-group midranks within the pooled sample

    @property
    def rank_sums(self) -> np.ndarray:
        return np.array([float(np.sum(r)) for r in self.ranks])


@dataclass(frozen=True)
class FriedmanResult:
    average_ranks: np.ndarray
    statistic: float
    p_value: float
    dof: int


def midranks(x) -> np.ndarray:
    """Ranks 1..n with tied values sharing the average of their positions."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def rank_groups(groups) -> RankedSamples:
    groups = [np.asarray(g, dtype=float).ravel() for g in groups]
    pooled = midranks(np.concatenate(groups))
    bounds = np.cumsum([0] + [len(g) for g in groups])
    return RankedSamples(groups=groups, ranks=[pooled[bounds[i] : bounds[i + 1]] for i in range(len(groups))])


def _gamma_series(a, x):
    # lower regularized P(a, x) by power series, good for x < a + 1
    term = total = 1.0 / a
    ap = a
    for _ in range(10000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a, x):
    # upper regularized Q(a, x) by Lentz's continued fraction, good for x >= a + 1
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        d = tiny if abs(d) < tiny else d
        c = b + an / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_upper_gamma(a: float, x: float) -> float:
    if a <= 0:
        raise ConfigurationError("shape must be > 0")
    if x < 0:
        raise ConfigurationError("x must be >= 0")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cf(a, x)


def chi_square_sf(x: float, dof: int) -> float:
    """P(X > x) for X ~ chi-square(dof)."""
    if dof < 1:
        raise ConfigurationError("dof must be >= 1")
    if x < 0:
        raise ConfigurationError("x must be >= 0")
    return regularized_upper_gamma(dof / 2.0, x / 2.0)


def kruskal_wallis(groups) -> tuple[float, float]:
    """Tie-corrected Kruskal-Wallis H and its chi-square p-value with k-1 dof."""
    if len(groups) < 2:
        raise ConfigurationError("need at least two groups")
    if any(len(np.ravel(g)) == 0 for g in groups):
        raise ConfigurationError("groups must be nonempty")
    ranked = rank_groups(groups)
    pooled = np.concatenate(ranked.groups)
    n = len(pooled)
    _, counts = np.unique(pooled, return_counts=True)
    tie = 1.0 - float(np.sum(counts**3 - counts)) / (n**3 - n) if n > 1 else 0.0
    if tie <= 0.0:
        return 0.0, 1.0
    sizes = np.array([len(g) for g in ranked.groups], dtype=float)
    h = 12.0 / (n * (n + 1)) * float(np.sum(ranked.rank_sums**2 / sizes)) - 3.0 * (n + 1)
    h /= tie
    h = max(h, 0.0)
    return h, chi_square_sf(h, len(groups) - 1)


def bonferroni_adjust(p_values, m: int) -> np.ndarray:
    if m < 1:
        raise ConfigurationError("m must be >= 1")
    return np.minimum(1.0, m * np.asarray(p_values, dtype=float))


def friedman(matrix, lower_is_better: bool = True) -> FriedmanResult:
    """Friedman test over a problems x algorithms matrix, classic chi-square form."""
    X = np.asarray(matrix, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 2:
        raise ConfigurationError("need at least two problems and two algorithms")
    N, k = X.shape
    ranks = np.array([midranks(row if lower_is_better else -row) for row in X])
    avg = ranks.mean(axis=0)
    stat = 12.0 * N / (k * (k + 1)) * float(np.sum((avg - (k + 1) / 2.0) ** 2))
    return FriedmanResult(average_ranks=avg, statistic=stat, p_value=chi_square_sf(stat, k - 1), dof=k - 1)


def reported_matrix(algorithms=("FPA", "Std-GA", "TS", "SQ")) -> np.ndarray:
    """Problems (SNR) x algorithms matrix of the quoted mean BER values."""
    return np.array([REPORTED_MEAN_BER[a] for a in algorithms]).T
