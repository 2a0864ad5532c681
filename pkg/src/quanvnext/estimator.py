"""Scikit-learn style wrapper around the quanvolutional classifier.

``X`` is a 3-D array (n_samples, channels, length); labels may be any two
values.  The wrapper standardizes inputs per channel (optional), builds the
network to match the data shape, and trains it with NAdam.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .model import BlockSpec, ModelConfig, QuanvNeXt
from .training import train

__all__ = ["QuanvNeXtClassifier"]


class QuanvNeXtClassifier(ClassifierMixin, BaseEstimator):
    """Binary time-series classifier with quantum-circuit convolutions.

    Parameters
    ----------
    width : embedding width (feature channels inside the network); must be
        divisible by 8 when channel shuffling is enabled.
    block_kernels / block_temperatures : per-block kernel sizes (odd) and
        softmax temperatures; lengths must agree.
    depth : unitary layers per circuit.
    use_skip / use_aggregation / use_shuffle : cross-residual block toggles.
    epochs, batch_size, learning_rate : NAdam training protocol.
    normalize : standardize each channel from the training data.
    random_state : seed for initialization and batch order.
    """

    def __init__(
        self,
        width: int = 8,
        embed_kernel: int = 8,
        embed_stride: int = 8,
        block_kernels: tuple = (7, 15, 9, 7),
        block_temperatures: tuple = (1.5, 1.2, 0.8, 0.5),
        depth: int = 1,
        use_skip: bool = True,
        use_aggregation: bool = True,
        use_shuffle: bool = True,
        epochs: int = 30,
        batch_size: int = 64,
        learning_rate: float = 0.0025,
        normalize: bool = True,
        random_state: int = 0,
    ):
        self.width = width
        self.embed_kernel = embed_kernel
        self.embed_stride = embed_stride
        self.block_kernels = block_kernels
        self.block_temperatures = block_temperatures
        self.depth = depth
        self.use_skip = use_skip
        self.use_aggregation = use_aggregation
        self.use_shuffle = use_shuffle
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.normalize = normalize
        self.random_state = random_state

    def _validate_X(self, X, reset: bool) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3:
            raise ValueError(f"X must be (n_samples, channels, length), got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains NaN or Inf")
        if reset:
            self.n_channels_in_ = X.shape[1]
            self.length_in_ = X.shape[2]
        elif X.shape[1:] != (self.n_channels_in_, self.length_in_):
            raise ValueError(
                f"X has shape {X.shape[1:]} per sample; fitted on "
                f"({self.n_channels_in_}, {self.length_in_})"
            )
        return X

    def _build_config(self) -> ModelConfig:
        kernels = tuple(int(k) for k in self.block_kernels)
        temps = tuple(float(t) for t in self.block_temperatures)
        if len(kernels) != len(temps):
            raise ValueError("block_kernels and block_temperatures must have equal length")
        blocks = tuple(BlockSpec(k, (k - 1) // 2, t) for k, t in zip(kernels, temps))
        return ModelConfig(
            in_channels=self.n_channels_in_,
            in_length=self.length_in_,
            width=self.width,
            blocks=blocks,
            embed_kernel=self.embed_kernel,
            embed_stride=self.embed_stride,
            depth=self.depth,
            use_skip=self.use_skip,
            use_aggregation=self.use_aggregation,
            use_shuffle=self.use_shuffle,
        )

    def fit(self, X, y):
        X = self._validate_X(X, reset=True)
        y = np.asarray(y).ravel()
        if y.shape[0] != X.shape[0]:
            raise ValueError("X and y disagree in length")
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise ValueError(f"expected exactly 2 classes, got {self.classes_.size}")
        y_idx = np.searchsorted(self.classes_, y)
        if self.normalize:
            self.norm_mean_ = X.mean(axis=(0, 2))
            self.norm_std_ = np.maximum(X.std(axis=(0, 2)), 1e-8)
            X = (X - self.norm_mean_[None, :, None]) / self.norm_std_[None, :, None]
        self.model_ = QuanvNeXt(self._build_config(), seed=self.random_state)
        result = train(
            self.model_,
            (X, y_idx),
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.random_state,
        )
        self.history_ = result.history
        return self

    def _prepare(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = self._validate_X(X, reset=False)
        if self.normalize:
            X = (X - self.norm_mean_[None, :, None]) / self.norm_std_[None, :, None]
        return X

    def predict_proba(self, X) -> np.ndarray:
        return self.model_.predict_proba(self._prepare(X))

    def decision_function(self, X) -> np.ndarray:
        logits = self.model_.predict_logits(self._prepare(X))
        return logits[:, 1] - logits[:, 0]

    def predict(self, X) -> np.ndarray:
        return self.classes_[self.predict_proba(X).argmax(axis=1)]
