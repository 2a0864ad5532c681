"""Plain-array building blocks shared by the model and the autodiff ops.

All functions accept either a single sample ``(C, L)`` or a batch
``(N, C, L)``; the channel axis is always the second-to-last one.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "mish",
    "mish_grad",
    "softmax",
    "log_softmax",
    "cross_entropy",
    "shuffle_permutation",
    "channel_shuffle",
    "layer_norm",
    "global_avg_pool",
]

LAYER_NORM_EPS = 1e-5


def mish(x: np.ndarray) -> np.ndarray:
    """x * tanh(softplus(x)), stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    return x * np.tanh(np.logaddexp(0.0, x))


def mish_grad(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    t = np.tanh(np.logaddexp(0.0, x))
    sigmoid = np.exp(-np.logaddexp(0.0, -x))
    return t + x * (1.0 - t * t) * sigmoid


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def cross_entropy(logits: np.ndarray, label: int) -> float:
    """Negative log softmax probability of ``label`` (log-sum-exp trick)."""
    logits = np.asarray(logits, dtype=np.float64).ravel()
    if not 0 <= label < logits.size:
        raise ValueError(f"label {label} out of range for {logits.size} logits")
    return float(-log_softmax(logits)[label])


def shuffle_permutation(channels: int, groups: int) -> np.ndarray:
    """Channel permutation: reshape to (groups, C/groups), transpose, flatten."""
    if channels % groups != 0:
        raise ValueError(f"{channels} channels not divisible by {groups} groups")
    return np.arange(channels).reshape(groups, channels // groups).T.reshape(-1)


def channel_shuffle(x: np.ndarray, groups: int) -> np.ndarray:
    """Permute channels to interleave the ``groups`` blocks; values untouched."""
    x = np.asarray(x)
    perm = shuffle_permutation(x.shape[-2], groups)
    return x[..., perm, :]


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
               eps: float = LAYER_NORM_EPS) -> np.ndarray:
    """Normalize across the channel axis at each position, then affine."""
    out, _ = layer_norm_with_cache(x, gamma, beta, eps)
    return out


def layer_norm_with_cache(x, gamma, beta, eps=LAYER_NORM_EPS):
    x = np.asarray(x, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    mean = x.mean(axis=-2, keepdims=True)
    var = x.var(axis=-2, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    y = (x - mean) * inv_std
    out = gamma[:, None] * y + beta[:, None]
    return out, (y, inv_std, gamma)


def layer_norm_vjp(cache, grad_out):
    """Gradients for (x, gamma, beta) given the upstream gradient."""
    y, inv_std, gamma = cache
    per_channel = (0, -1) if grad_out.ndim == 3 else (-1,)
    grad_beta = grad_out.sum(axis=per_channel)
    grad_gamma = (grad_out * y).sum(axis=per_channel)
    dy = grad_out * gamma[:, None]
    grad_x = inv_std * (
        dy - dy.mean(axis=-2, keepdims=True) - y * (dy * y).mean(axis=-2, keepdims=True)
    )
    return grad_x, grad_gamma, grad_beta


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Per-channel mean over the position axis."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 1:
        raise ValueError("cannot pool an empty sequence")
    return x.mean(axis=-1)
