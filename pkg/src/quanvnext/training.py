"""NAdam optimization and the training loop.

Training is fully deterministic for a fixed seed: batch order comes from a
dedicated generator, gradients are reduced in recording order, and all
arithmetic is float64.  A checkpoint is written after every epoch; the
metric log gets one CSV row per epoch.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tape, Tensor, backward, cross_entropy_loss
from .metrics import accuracy, auc_roc, confusion_counts, mcc
from .model import QuanvNeXt

__all__ = ["NAdam", "EpochRecord", "TrainResult", "train", "write_metrics_csv"]


class NAdam:
    """Nesterov-momentum Adam with the 0.96-power momentum schedule.

    Defaults: beta1 0.9, beta2 0.999, eps 1e-8, momentum decay 0.004.
    """

    def __init__(self, params: list[Tensor], learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, momentum_decay: float = 0.004):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.momentum_decay = momentum_decay
        self.t = 0
        self.mu_product = 1.0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def _mu(self, step: int) -> float:
        return self.beta1 * (1.0 - 0.5 * 0.96 ** (step * self.momentum_decay))

    def step(self, grads: dict[Tensor, np.ndarray]) -> None:
        """One update; parameters missing from ``grads`` see a zero gradient."""
        self.t += 1
        mu_t = self._mu(self.t)
        mu_next = self._mu(self.t + 1)
        self.mu_product *= mu_t
        bias2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = grads.get(p)
            if g is None:
                g = np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = (
                mu_next * self.m[i] / (1.0 - self.mu_product * mu_next)
                + (1.0 - mu_t) * g / (1.0 - self.mu_product)
            )
            p.data = p.data - self.learning_rate * m_hat / (np.sqrt(self.v[i] / bias2) + self.eps)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float | None = None
    val_mcc: float | None = None
    val_auc: float | None = None


@dataclass
class TrainResult:
    history: list[EpochRecord]
    best_epoch: int
    checkpoints: list[Path]
    metrics_path: Path | None


def _evaluate(model: QuanvNeXt, X: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    probs = model.predict_proba(X)
    preds = probs.argmax(axis=1)
    return (
        accuracy(y, preds),
        mcc(confusion_counts(y, preds)),
        auc_roc(probs[:, 1], y),
    )


def write_metrics_csv(history: list[EpochRecord], path: Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_accuracy", "val_mcc", "val_auc"])
        for rec in history:
            writer.writerow([
                rec.epoch,
                f"{rec.train_loss:.9g}",
                "" if rec.val_accuracy is None else f"{rec.val_accuracy:.9g}",
                "" if rec.val_mcc is None else f"{rec.val_mcc:.9g}",
                "" if rec.val_auc is None else f"{rec.val_auc:.9g}",
            ])
    return path


def train(
    model: QuanvNeXt,
    train_data: tuple[np.ndarray, np.ndarray],
    eval_data: tuple[np.ndarray, np.ndarray] | None = None,
    *,
    epochs: int,
    batch_size: int = 64,
    learning_rate: float = 0.0025,
    seed: int = 0,
    out_dir: Path | None = None,
    stats=None,
    meta: dict | None = None,
) -> TrainResult:
    """Mini-batch training with per-epoch checkpointing and metric logging.

    ``train_data`` / ``eval_data`` are (X, y) pairs of shape (n, C, L) /
    (n,).  When ``out_dir`` is given, ``init.ckpt`` captures the untrained
    model, ``epoch_{k}.ckpt`` every later state, and ``metrics.csv`` the log.
    Divergence (non-finite loss) aborts with a diagnostic.
    """
    X, y = train_data
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp).ravel()
    if X.shape[0] == 0:
        raise ValueError("training set is empty")
    if X.shape[0] != y.shape[0]:
        raise ValueError("training inputs and labels disagree in length")
    rng = np.random.default_rng(seed)
    optimizer = NAdam(model.parameters(), learning_rate)
    checkpoints: list[Path] = []
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        from .checkpoint import save_checkpoint

        save_checkpoint(out_dir / "init.ckpt", model, stats=stats, meta=meta)
    history: list[EpochRecord] = []
    for epoch in range(1, epochs + 1):
        order = rng.permutation(X.shape[0])
        total_loss = 0.0
        for start in range(0, order.size, batch_size):
            batch = order[start: start + batch_size]
            tape = Tape()
            logits = model.forward(X[batch], tape)
            loss = cross_entropy_loss(logits, y[batch], tape)
            loss_value = float(loss.data)
            if not np.isfinite(loss_value):
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch}, "
                    f"batch starting at index {start}"
                )
            grads = backward(tape, loss)
            optimizer.step(grads)
            total_loss += loss_value * batch.size
        record = EpochRecord(epoch=epoch, train_loss=total_loss / order.size)
        if eval_data is not None:
            record.val_accuracy, record.val_mcc, record.val_auc = _evaluate(
                model, eval_data[0], np.asarray(eval_data[1], dtype=np.intp).ravel()
            )
        history.append(record)
        if out_dir is not None:
            from .checkpoint import save_checkpoint

            ckpt = save_checkpoint(out_dir / f"epoch_{epoch}.ckpt", model, stats=stats, meta=meta)
            checkpoints.append(ckpt)
    if eval_data is not None and history:
        best_epoch = max(history, key=lambda r: (r.val_accuracy, -r.epoch)).epoch
    else:
        best_epoch = history[-1].epoch if history else 0
    metrics_path = None
    if out_dir is not None:
        metrics_path = write_metrics_csv(history, out_dir / "metrics.csv")
    return TrainResult(
        history=history,
        best_epoch=best_epoch,
        checkpoints=checkpoints,
        metrics_path=metrics_path,
    )
