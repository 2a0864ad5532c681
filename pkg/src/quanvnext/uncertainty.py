"""Gaussian-perturbation uncertainty harness.

Each sample is perturbed ``n`` times with x' = x + epsilon * N(0, 1); the
mean softmax output over perturbations is the class estimate and the
standard deviation of the positive-class probability is the uncertainty.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .functional import softmax
from .metrics import ece

__all__ = [
    "UncertaintyRecord",
    "wilson_interval",
    "perturb_predict",
    "uncertainty_report",
    "write_uncertainty_csv",
]

DEFAULT_EPSILONS = (0.1, 0.05, 0.01)
Z_95 = 1.959963984540054


@dataclass
class UncertaintyRecord:
    epsilon: float
    accuracy: float
    ci_low: float
    ci_high: float
    mean_uncertainty_correct: float | None
    mean_uncertainty_incorrect: float | None
    ece: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy must be in [0, 1], got {self.accuracy}")
        if self.ece < 0.0:
            raise ValueError(f"ECE must be non-negative, got {self.ece}")
        if not self.ci_low <= self.accuracy <= self.ci_high:
            raise ValueError("confidence interval must bracket the accuracy")


def wilson_interval(successes: int, total: int, z: float = Z_95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if total < 1:
        raise ValueError("total must be positive")
    p = successes / total
    denom = 1.0 + z * z / total
    center = (p + z * z / (2 * total)) / denom
    half = z * np.sqrt(p * (1.0 - p) / total + z * z / (4.0 * total * total)) / denom
    return center - half, center + half


def perturb_predict(model, x: np.ndarray, epsilon: float, n: int = 50,
                    seed: int | np.random.Generator = 0) -> tuple[np.ndarray, float]:
    """Mean class probabilities and positive-class std over ``n`` perturbations.

    ``model`` needs a ``predict_logits((N, C, L)) -> (N, 2)`` method.  With
    epsilon = 0 all copies coincide, so the mean equals the unperturbed
    softmax and the uncertainty is exactly zero.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    x = np.asarray(x, dtype=np.float64)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if epsilon == 0.0:
        # All copies coincide; evaluate once so the mean is exact.
        probs = softmax(model.predict_logits(x[None]), axis=-1)
        return probs[0], 0.0
    batch = np.broadcast_to(x, (n,) + x.shape) + epsilon * rng.standard_normal((n,) + x.shape)
    probs = softmax(model.predict_logits(batch), axis=-1)
    mean_probs = probs.mean(axis=0)
    return mean_probs, float(probs[:, 1].std())


def uncertainty_report(
    model,
    X: np.ndarray,
    y: np.ndarray,
    epsilons=DEFAULT_EPSILONS,
    n: int = 50,
    seed: int = 0,
    n_bins: int = 10,
) -> list[UncertaintyRecord]:
    """One record per epsilon: accuracy of the mean prediction with a Wilson
    95% CI, mean uncertainty split by correctness (absent when a group is
    empty), and the ECE of the mean confidences."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp).ravel()
    if X.shape[0] == 0:
        raise ValueError("test set is empty")
    records = []
    root = np.random.SeedSequence(seed)
    for eps_seq, epsilon in zip(root.spawn(len(epsilons)), epsilons):
        sample_seqs = eps_seq.spawn(X.shape[0])
        mean_probs = np.empty((X.shape[0], 2))
        spread = np.empty(X.shape[0])
        for i in range(X.shape[0]):
            mean_probs[i], spread[i] = perturb_predict(
                model, X[i], epsilon, n=n, seed=np.random.default_rng(sample_seqs[i])
            )
        predictions = mean_probs.argmax(axis=1)
        correct = predictions == y
        acc = float(correct.mean())
        lo, hi = wilson_interval(int(correct.sum()), correct.size)
        records.append(UncertaintyRecord(
            epsilon=float(epsilon),
            accuracy=acc,
            ci_low=lo,
            ci_high=hi,
            mean_uncertainty_correct=float(spread[correct].mean()) if correct.any() else None,
            mean_uncertainty_incorrect=float(spread[~correct].mean()) if (~correct).any() else None,
            ece=ece(mean_probs.max(axis=1), correct, n_bins=n_bins),
        ))
    return records


def write_uncertainty_csv(records: list[UncertaintyRecord], path: Path) -> Path:
    """CSV with one row per epsilon; absent groups yield empty cells."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "epsilon", "accuracy", "ci_low", "ci_high",
            "mean_uncertainty_correct", "mean_uncertainty_incorrect", "ece",
        ])
        for rec in records:
            writer.writerow([
                f"{rec.epsilon:.9g}", f"{rec.accuracy:.9g}",
                f"{rec.ci_low:.9g}", f"{rec.ci_high:.9g}",
                "" if rec.mean_uncertainty_correct is None else f"{rec.mean_uncertainty_correct:.9g}",
                "" if rec.mean_uncertainty_incorrect is None else f"{rec.mean_uncertainty_incorrect:.9g}",
                f"{rec.ece:.9g}",
            ])
    return path
