"""Accuracy confidence intervals: the CLT construction over replicate
accuracies and the basic (reverse-percentile) bootstrap with
transfer-learning retraining per replicate.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .data import Dataset
from .distributions import normal_quantile, t_quantile
from .network import NetworkModel, TrainConfig, continue_train, predict
from .seeding import derive_seed

LARGE_SAMPLE_N = 30  # at or above this, the critical value comes from the normal


@dataclass(frozen=True)
class IntervalEstimate:
    """Two-sided confidence interval for model accuracy."""

    lower: float
    upper: float
    level: float
    method: str  # "clt" | "bootstrap_basic"
    n_samples: int
    mean_accuracy: float
    std_dev: float | None = None  # CLT only

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"lower bound {self.lower} exceeds upper bound {self.upper}")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must be in (0, 1), got {self.level}")

    @property
    def width(self) -> float:
        return self.upper - self.lower


def clt_ci(accuracies, level: float = 0.95, crit_method: str = "auto") -> IntervalEstimate:
    """Mean +/- critical * s / sqrt(n) interval over replicate accuracies.

    The critical value comes from Student's t with n-1 degrees of freedom
    for n < 30 and from the normal otherwise; ``crit_method`` forces
    ``"t"`` or ``"z"``. Endpoints are reported unclipped, with a warning
    when they leave [0, 1].
    """
    acc = np.asarray(accuracies, dtype=np.float64)
    if acc.size < 2:
        raise ValueError(f"need at least 2 accuracy values, got {acc.size}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    n = acc.size
    mean = float(np.mean(acc))
    s = float(np.std(acc, ddof=1))
    q = 1.0 - (1.0 - level) / 2.0
    if crit_method == "auto":
        crit_method = "t" if n < LARGE_SAMPLE_N else "z"
    if crit_method == "t":
        crit = t_quantile(q, n - 1)
    elif crit_method == "z":
        crit = normal_quantile(q)
    else:
        raise ValueError(f"crit_method must be auto, t, or z, got {crit_method!r}")
    margin = crit * s / math.sqrt(n)
    lower, upper = mean - margin, mean + margin
    if lower < 0.0 or upper > 1.0:
        warnings.warn(
            f"CLT interval [{lower:.4f}, {upper:.4f}] leaves [0, 1]; reported unclipped",
            stacklevel=2,
        )
    return IntervalEstimate(
        lower=lower,
        upper=upper,
        level=level,
        method="clt",
        n_samples=n,
        mean_accuracy=mean,
        std_dev=s,
    )


@dataclass(frozen=True)
class BootstrapRun:
    """Per-replicate accuracies plus everything needed to reproduce them."""

    accuracies: tuple[float, ...]
    seeds: tuple[int, ...]
    retrain: TrainConfig
    evaluation: str  # "oob" | "insample"
    master_seed: int

    def __post_init__(self):
        if len(self.accuracies) < 2:
            raise ValueError("a bootstrap run needs at least 2 replicates")
        if any(not 0.0 <= a <= 1.0 for a in self.accuracies):
            raise ValueError("replicate accuracies must lie in [0, 1]")
        if len(self.seeds) != len(self.accuracies):
            raise ValueError("one seed per replicate required")

    @property
    def n_replicates(self) -> int:
        return len(self.accuracies)


def bootstrap_accuracies(
    base: NetworkModel,
    data: Dataset,
    n_replicates: int = 1000,
    retrain: TrainConfig | None = None,
    seed: int = 0,
    evaluation: str = "oob",
    max_retries: int = 100,
) -> BootstrapRun:
    """Accuracy per bootstrap replicate after transfer-learning retraining.

    Each replicate draws n rows with replacement, continues training from
    the base model's weights, and is scored on its out-of-bag rows
    (``evaluation="insample"`` scores on the drawn rows instead). A
    replicate that misses a class, or leaves no out-of-bag rows, is
    redrawn up to ``max_retries`` times.
    """
    if n_replicates < 2:
        raise ValueError(f"need at least 2 replicates, got {n_replicates}")
    if evaluation not in ("oob", "insample"):
        raise ValueError(f"evaluation must be 'oob' or 'insample', got {evaluation!r}")
    if retrain is None:
        retrain = TrainConfig(epochs=10, learning_rate=0.05, seed=0)

    accuracies: list[float] = []
    seeds: list[int] = []
    for i in range(n_replicates):
        rep_seed = derive_seed(seed, "bootstrap", i)
        rng = np.random.default_rng(rep_seed)
        for attempt in range(max_retries):
            idx = rng.integers(0, data.n, size=data.n)
            oob = np.setdiff1d(np.arange(data.n), idx)
            present = np.unique(data.y[idx])
            if present.size == data.p and (evaluation == "insample" or oob.size > 0):
                break
        else:
            raise RuntimeError(
                f"replicate {i}: could not draw a sample covering all classes "
                f"in {max_retries} attempts"
            )
        sample = data.subset(idx)
        model = continue_train(base, sample, replace(retrain, seed=rep_seed))
        eval_data = sample if evaluation == "insample" else data.subset(oob)
        acc = float(np.mean(predict(model, eval_data.X) == eval_data.y))
        accuracies.append(acc)
        seeds.append(rep_seed)

    return BootstrapRun(
        accuracies=tuple(accuracies),
        seeds=tuple(seeds),
        retrain=retrain,
        evaluation=evaluation,
        master_seed=seed,
    )


def bootstrap_ci(run: BootstrapRun, level: float = 0.95) -> IntervalEstimate:
    """Basic (reverse-percentile) bootstrap interval.

    Sorts the differences d_i = ACC_i - mean ascending, takes the 1-based
    order statistics at k = ceil(alpha/2 * B) and l = floor((1-alpha/2) * B),
    and returns [mean - d_(l), mean - d_(k)].
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    acc = np.asarray(run.accuracies, dtype=np.float64)
    n = acc.size
    mean = float(np.mean(acc))
    diffs = np.sort(acc - mean)
    alpha = 1.0 - level
    k = max(1, math.ceil(alpha / 2.0 * n))
    ell = min(n, math.floor((1.0 - alpha / 2.0) * n))
    ell = max(ell, k)
    lower = mean - float(diffs[ell - 1])
    upper = mean - float(diffs[k - 1])
    return IntervalEstimate(
        lower=lower,
        upper=upper,
        level=level,
        method="bootstrap_basic",
        n_samples=n,
        mean_accuracy=mean,
    )


RUN_CSV_HEADER = ["replicate", "seed", "accuracy"]


def save_run(run: BootstrapRun, path) -> None:
    """Persist the replicate table (index, seed, accuracy) for audit."""
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(RUN_CSV_HEADER)
        for i, (seed, acc) in enumerate(zip(run.seeds, run.accuracies)):
            writer.writerow([i, seed, repr(acc)])


def load_accuracies(path) -> np.ndarray:
    """Read the accuracy column of a persisted replicate table."""
    with Path(path).open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != RUN_CSV_HEADER:
            raise ValueError(f"{path}: expected header {RUN_CSV_HEADER}, got {header}")
        values = [float(row[2]) for row in reader if row]
    if not values:
        raise ValueError(f"{path}: no replicate rows")
    return np.asarray(values, dtype=np.float64)
