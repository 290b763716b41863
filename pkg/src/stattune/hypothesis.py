"""Hypothesis tests over hidden-neuron outputs.

Per-neuron, per-class-pair Mann-Whitney U tests (exact enumeration for
small tie-free samples, tie-corrected normal approximation otherwise) and
a neuron-efficiency test across output groups (one-way ANOVA F or
Kruskal-Wallis H).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

from .distributions import chisq_sf, f_sf, normal_cdf
from .network import ActivationMatrix

EXACT_LIMIT = 20  # combined sample size at or below which the exact path runs


class SampleError(ValueError):
    """Raised for empty or otherwise unusable sample groups."""


@dataclass(frozen=True)
class HypothesisResult:
    """Outcome of a single test: statistic, p-value, and verdict at alpha."""

    statistic: float
    p_value: float
    method: str
    significant: bool
    alpha: float
    group_sizes: tuple[int, ...]

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value outside [0, 1]: {self.p_value}")


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..N with ties sharing the average of their rank range."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _tie_term(values: np.ndarray) -> float:
    """Sum of t^3 - t over tie groups of the pooled sample."""
    _, counts = np.unique(values, return_counts=True)
    return float(np.sum(counts.astype(np.float64) ** 3 - counts))


def _exact_u_counts(n1: int, n2: int) -> list[int]:
    """Number of rank arrangements giving each U value, U = 0..n1*n2.

    Recurrence over the largest rank: held by the first sample it adds n2
    to U, held by the second it adds nothing.
    """
    table = {(0, 0): [1]}

    def counts(a: int, b: int) -> list[int]:
        if (a, b) in table:
            return table[(a, b)]
        size = a * b + 1
        out = [0] * size
        if a > 0:
            prev = counts(a - 1, b)
            for u, c in enumerate(prev):
                out[u + b] += c
        if b > 0:
            prev = counts(a, b - 1)
            for u, c in enumerate(prev):
                out[u] += c
        table[(a, b)] = out
        return out

    return counts(n1, n2)


def mann_whitney_u(
    a,
    b,
    alternative: str = "two-sided",
    alpha: float = 0.05,
) -> HypothesisResult:
    """Two-sided Mann-Whitney U test; U is reported for the first sample.

    U counts pairs with a > b plus half the tied pairs. Exact enumeration
    is used when the combined sample is tie-free with at most
    ``EXACT_LIMIT`` values; otherwise the tie-corrected normal
    approximation with a +/-0.5 continuity correction.
    """
    if alternative not in ("two-sided", "two_sided"):
        raise ValueError(f"only the two-sided alternative is supported, got {alternative!r}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise SampleError("both samples must be non-empty")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise SampleError("samples contain non-finite values")

    n1, n2 = a.size, b.size
    pooled = np.concatenate([a, b])
    ranks = _midranks(pooled)
    r1 = float(ranks[:n1].sum())
    u = r1 - n1 * (n1 + 1) / 2.0

    n_total = n1 + n2
    tie_free = np.unique(pooled).size == n_total
    if tie_free and n_total <= EXACT_LIMIT:
        p = exact_two_sided_p(int(round(u)), n1, n2)
        return HypothesisResult(
            statistic=float(u),
            p_value=float(p),
            method="mann_whitney_exact",
            significant=float(p) <= alpha,
            alpha=alpha,
            group_sizes=(n1, n2),
        )

    mu = n1 * n2 / 2.0
    n = float(n_total)
    var = n1 * n2 / 12.0 * ((n + 1.0) - _tie_term(pooled) / (n * (n - 1.0)))
    if var <= 0.0:
        # every pooled value identical: the statistic carries no information
        p = 1.0
    else:
        if u > mu:
            z = (u - mu - 0.5) / np.sqrt(var)
        elif u < mu:
            z = (u - mu + 0.5) / np.sqrt(var)
        else:
            z = 0.0
        p = min(1.0, 2.0 * normal_cdf(-abs(z)))
    return HypothesisResult(
        statistic=float(u),
        p_value=float(p),
        method="mann_whitney_normal",
        significant=p <= alpha,
        alpha=alpha,
        group_sizes=(n1, n2),
    )


def exact_two_sided_p(u: int, n1: int, n2: int) -> Fraction:
    """Exact two-sided p-value for a tie-free U observation, as a rational.

    Doubles the smaller tail probability, capped at 1.
    """
    counts = _exact_u_counts(n1, n2)
    total = comb(n1 + n2, n1)
    lower = sum(counts[: u + 1])
    upper = sum(counts[u:])
    p = 2 * Fraction(min(lower, upper), total)
    return min(p, Fraction(1))


@dataclass(frozen=True)
class NeuronTestTable:
    """Mann-Whitney results for every hidden neuron and class pair."""

    results: dict[tuple[int, int, int], HypothesisResult]  # (neuron, class_i, class_j)
    n_neurons: int
    class_pairs: tuple[tuple[int, int], ...]
    class_counts: tuple[int, ...]
    alpha: float

    def __post_init__(self):
        expected = self.n_neurons * len(self.class_pairs)
        if len(self.results) != expected:
            raise ValueError(f"expected {expected} entries, got {len(self.results)}")

    def entry(self, neuron: int, class_i: int, class_j: int) -> HypothesisResult:
        return self.results[(neuron, class_i, class_j)]

    def significant_pairs(self, neuron: int) -> list[tuple[int, int]]:
        return [(i, j) for (i, j) in self.class_pairs if self.results[(neuron, i, j)].significant]

    def to_rows(self) -> tuple[list[str], list[list]]:
        """Header and rows shaped like the per-neuron U/p table."""
        header = ["neuron"]
        for i, j in self.class_pairs:
            header += [f"U_{i}v{j}", f"p_{i}v{j}", f"significant_{i}v{j}"]
        rows = []
        for k in range(self.n_neurons):
            row: list = [k]
            for i, j in self.class_pairs:
                res = self.results[(k, i, j)]
                row += [res.statistic, res.p_value, res.significant]
            rows.append(row)
        return header, rows


def hidden_output_tests(acts: ActivationMatrix, alpha: float = 0.05) -> NeuronTestTable:
    """Mann-Whitney U per neuron per unordered class pair.

    Splits each neuron's outputs by true class label; the U statistic is
    reported for the first-listed class of each pair.
    """
    labels = np.unique(acts.labels)
    if labels.size < 2:
        raise SampleError("at least two classes are required")
    n_classes = int(labels.max()) + 1
    counts = np.bincount(acts.labels, minlength=n_classes)
    empty = [c for c in range(n_classes) if counts[c] == 0]
    if empty:
        raise SampleError(f"classes with zero samples: {empty}")

    pairs = tuple((i, j) for i in range(n_classes) for j in range(i + 1, n_classes))
    results: dict[tuple[int, int, int], HypothesisResult] = {}
    for k in range(acts.k):
        column = acts.values[:, k]
        for i, j in pairs:
            res = mann_whitney_u(column[acts.labels == i], column[acts.labels == j], alpha=alpha)
            results[(k, i, j)] = res
    return NeuronTestTable(
        results=results,
        n_neurons=acts.k,
        class_pairs=pairs,
        class_counts=tuple(int(c) for c in counts),
        alpha=alpha,
    )


def neuron_efficiency_test(
    groups,
    alpha: float = 0.05,
    method: str = "anova_f",
) -> HypothesisResult:
    """Compare one neuron's outputs across output-node groups.

    ``anova_f`` runs the one-way F test; ``kruskal_wallis`` runs the
    tie-corrected H test with a chi-square reference. Rejects H0 when
    p < alpha.
    """
    arrays = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(arrays) < 2:
        raise SampleError("at least two groups are required")
    for g in arrays:
        if g.size == 0:
            raise SampleError("groups must be non-empty")
        if not np.all(np.isfinite(g)):
            raise SampleError("groups contain non-finite values")
    sizes = tuple(g.size for g in arrays)
    n_total = sum(sizes)
    n_groups = len(arrays)

    if method == "anova_f":
        if any(s < 2 for s in sizes):
            raise SampleError("anova_f requires at least 2 samples per group")
        grand = np.concatenate(arrays).mean()
        ss_between = sum(g.size * (g.mean() - grand) ** 2 for g in arrays)
        ss_within = sum(float(np.sum((g - g.mean()) ** 2)) for g in arrays)
        df1, df2 = n_groups - 1, n_total - n_groups
        if ss_within == 0.0:
            # zero within-group variance: identical groups give F=0, p=1;
            # separated constant groups are infinitely significant
            stat, p = (0.0, 1.0) if ss_between == 0.0 else (float("inf"), 0.0)
        else:
            stat = (ss_between / df1) / (ss_within / df2)
            p = f_sf(stat, df1, df2)
    elif method == "kruskal_wallis":
        pooled = np.concatenate(arrays)
        ranks = _midranks(pooled)
        n = float(n_total)
        h = 0.0
        offset = 0
        for g in arrays:
            mean_rank = ranks[offset:offset + g.size].mean()
            h += g.size * (mean_rank - (n + 1.0) / 2.0) ** 2
            offset += g.size
        h *= 12.0 / (n * (n + 1.0))
        correction = 1.0 - _tie_term(pooled) / (n**3 - n)
        if correction <= 0.0:
            stat, p = 0.0, 1.0  # all pooled values identical
        else:
            stat = h / correction
            p = chisq_sf(stat, n_groups - 1)
    else:
        raise ValueError(f"unknown method {method!r}")

    return HypothesisResult(
        statistic=float(stat),
        p_value=float(p),
        method=method,
        significant=p < alpha,
        alpha=alpha,
        group_sizes=sizes,
    )
