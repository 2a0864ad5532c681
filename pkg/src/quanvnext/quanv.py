"""Quanv1D: convolution-style geometry with quantum-circuit kernels.

Sliding patches are flattened channel-major (channel index varies slowest),
temperature-softmax normalized, square-rooted into amplitudes and dispatched
to a bank of filter circuits.  Filter ``f``'s per-qubit expectations land on
output channels ``f*n_qubits .. f*n_qubits + n_qubits - 1``; channels beyond
``out_channels`` are computed and discarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qsim
from .autodiff import Tape, Tensor, as_tensor

__all__ = [
    "QuanvConfig",
    "Quanv1D",
    "output_length",
    "extract_patches",
    "normalize_patch",
]


def output_length(length_in: int, kernel: int, stride: int, padding: int, dilation: int) -> int:
    """Positions produced by a conv-style sweep over a padded sequence."""
    if length_in < 1 or kernel < 1 or stride < 1 or dilation < 1 or padding < 0:
        raise ValueError("geometry arguments must be positive (padding may be zero)")
    effective = dilation * (kernel - 1) + 1
    if effective > length_in + 2 * padding:
        raise ValueError(
            f"effective kernel {effective} exceeds padded length {length_in + 2 * padding}"
        )
    return (length_in + 2 * padding - effective) // stride + 1


@dataclass(frozen=True)
class QuanvConfig:
    """Geometry and circuit hyperparameters of one quanvolution layer."""

    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    dilation: int = 1
    temperature: float = 1.0
    depth: int = 1

    def __post_init__(self) -> None:
        for name in ("in_channels", "out_channels", "kernel", "stride", "dilation", "depth"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.padding < 0:
            raise ValueError(f"padding must be non-negative, got {self.padding}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")

    @property
    def patch_size(self) -> int:
        return self.in_channels * self.kernel

    @property
    def n_qubits(self) -> int:
        return max(1, math.ceil(math.log2(self.patch_size)))

    @property
    def n_filters(self) -> int:
        n = self.n_qubits
        return (self.out_channels + n - 1) // n

    @property
    def state_dim(self) -> int:
        return 1 << self.n_qubits

    def output_length(self, length_in: int) -> int:
        return output_length(length_in, self.kernel, self.stride, self.padding, self.dilation)


def _patch_indices(cfg: QuanvConfig, length_in: int):
    """(L_out, k) source positions plus the in-bounds mask."""
    l_out = cfg.output_length(length_in)
    starts = np.arange(l_out) * cfg.stride - cfg.padding
    idx = starts[:, None] + np.arange(cfg.kernel)[None, :] * cfg.dilation
    valid = (idx >= 0) & (idx < length_in)
    return np.clip(idx, 0, length_in - 1), valid, l_out


def _extract_patches_batch(x: np.ndarray, cfg: QuanvConfig) -> np.ndarray:
    """(N, C, L) -> (N * L_out, C * k), channel-major within each patch."""
    n, c, length = x.shape
    idx, valid, l_out = _patch_indices(cfg, length)
    gathered = x[:, :, idx] * valid[None, None, :, :]
    return gathered.transpose(0, 2, 1, 3).reshape(n * l_out, c * cfg.kernel)


def extract_patches(x: np.ndarray, cfg: QuanvConfig) -> np.ndarray:
    """All flat patches of a single (C, L) input, one row per position."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != cfg.in_channels:
        raise ValueError(f"expected ({cfg.in_channels}, L) input, got {x.shape}")
    return _extract_patches_batch(x[None], cfg)


def _normalize_batch(patches: np.ndarray, temperature: float, target_dim: int):
    """sqrt(softmax(patch / temp)) rows, zero-padded to target_dim."""
    scaled = patches / temperature
    scaled = scaled - scaled.max(axis=1, keepdims=True)
    e = np.exp(scaled)
    probs = e / e.sum(axis=1, keepdims=True)
    amps = np.sqrt(probs)
    full = np.zeros((patches.shape[0], target_dim))
    full[:, : patches.shape[1]] = amps
    return full, probs, amps


def normalize_patch(patch: np.ndarray, temperature: float, target_dim: int) -> np.ndarray:
    """Temperature-softmax a flat patch into a unit-norm amplitude vector."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    patch = np.asarray(patch, dtype=np.float64).ravel()
    if patch.size > target_dim:
        raise ValueError(f"patch of {patch.size} values exceeds target dimension {target_dim}")
    return _normalize_batch(patch[None], temperature, target_dim)[0][0]


class Quanv1D:
    """A trainable quanvolution layer (shared filter bank across positions).

    ``theta`` and ``lam`` are (n_filters, depth, n_qubits) trainable tensors;
    ``phi`` has the same shape, drawn once from U(0, 2) and frozen.
    """

    def __init__(self, cfg: QuanvConfig, rng: np.random.Generator, name: str = "quanv"):
        self.cfg = cfg
        shape = (cfg.n_filters, cfg.depth, cfg.n_qubits)
        self.theta = Tensor(rng.uniform(-1.0, 1.0, shape), trainable=True, name=f"{name}.theta")
        self.lam = Tensor(rng.uniform(-1.0, 1.0, shape), trainable=True, name=f"{name}.lam")
        self.phi = rng.uniform(0.0, 2.0, shape)
        self.phi.flags.writeable = False
        self.name = name
        self._last_ctx = None

    def parameters(self) -> list[Tensor]:
        return [self.theta, self.lam]

    def filter_circuit(self, index: int) -> qsim.FilterCircuit:
        """The qsim view of one filter's parameters (arrays are copied)."""
        return qsim.FilterCircuit(
            n_qubits=self.cfg.n_qubits,
            depth=self.cfg.depth,
            theta=self.theta.data[index],
            lam=self.lam.data[index],
            phi=self.phi[index],
        )

    # -- raw array paths ----------------------------------------------------

    def forward(self, x: np.ndarray, keep_context: bool = False) -> np.ndarray:
        """(C, L) -> (C_out, L_out) or (N, C, L) -> (N, C_out, L_out)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.ndim != 3 or x.shape[1] != self.cfg.in_channels:
            raise ValueError(f"expected (N, {self.cfg.in_channels}, L) input, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("quanvolution input contains non-finite values")
        out, ctx = self._forward_impl(x)
        self._last_ctx = ctx if keep_context else None
        return out[0] if single else out

    def backward(self, upstream: np.ndarray):
        """Gradients from the most recent ``forward(..., keep_context=True)``.

        Returns (theta_grads, lam_grads, input_grads).
        """
        if self._last_ctx is None:
            raise RuntimeError("no saved forward context; run forward(keep_context=True) first")
        upstream = np.asarray(upstream, dtype=np.float64)
        single = upstream.ndim == 2
        if single:
            upstream = upstream[None]
        theta_g, lam_g, x_g = self._vjp(self._last_ctx, upstream)
        return theta_g, lam_g, (x_g[0] if single else x_g)

    def _forward_impl(self, x: np.ndarray):
        cfg = self.cfg
        n_samples, _, length = x.shape
        l_out = cfg.output_length(length)
        patches = _extract_patches_batch(x, cfg)
        amps_full, probs, amps = _normalize_batch(patches, cfg.temperature, cfg.state_dim)
        states0 = amps_full.astype(np.complex128)
        n = cfg.n_qubits
        expectations = np.empty((patches.shape[0], cfg.n_filters * n))
        finals = []
        for f in range(cfg.n_filters):
            final = qsim.run_circuit_batch(states0, self.theta.data[f], self.lam.data[f], self.phi[f])
            expectations[:, f * n: (f + 1) * n] = qsim.z_expectations_batch(final, n)
            finals.append(final)
        maps = expectations[:, : cfg.out_channels]
        out = maps.reshape(n_samples, l_out, cfg.out_channels).transpose(0, 2, 1)
        ctx = (x.shape, probs, amps, finals)
        return out, ctx

    def _vjp(self, ctx, upstream: np.ndarray):
        cfg = self.cfg
        x_shape, probs, amps, finals = ctx
        n_samples, _, length = x_shape
        n = cfg.n_qubits
        n_rows = probs.shape[0]
        l_out = n_rows // n_samples
        flat = upstream.transpose(0, 2, 1).reshape(n_rows, cfg.out_channels)
        theta_g = np.zeros_like(self.theta.data)
        lam_g = np.zeros_like(self.lam.data)
        amp_grad = np.zeros((n_rows, cfg.state_dim))
        for f in range(cfg.n_filters):
            lo = f * n
            width = min(lo + n, cfg.out_channels) - lo
            slot = np.zeros((n_rows, n))
            slot[:, :width] = flat[:, lo: lo + width]
            tg, lg, ag = qsim.adjoint_gradients_batch(
                finals[f], self.theta.data[f], self.lam.data[f], self.phi[f], slot
            )
            theta_g[f] = tg
            lam_g[f] = lg
            amp_grad += ag
        # Chain through sqrt(softmax(z / temp)); padded amplitudes are constants.
        g_alpha = amp_grad[:, : cfg.patch_size]
        h = 0.5 * g_alpha * amps
        g_patch = (h - probs * h.sum(axis=1, keepdims=True)) / cfg.temperature
        idx, valid, _ = _patch_indices(cfg, length)
        contrib = g_patch.reshape(n_samples, l_out, cfg.in_channels, cfg.kernel)
        contrib = contrib.transpose(0, 2, 1, 3) * valid[None, None, :, :]
        x_grad = np.zeros(x_shape)
        np.add.at(x_grad, (slice(None), slice(None), idx), contrib)
        return theta_g, lam_g, x_grad

    # -- tape op -------------------------------------------------------------

    def __call__(self, x, tape: Tape | None = None) -> Tensor:
        x = as_tensor(x)
        data = x.data
        single = data.ndim == 2
        if single:
            data = data[None]
        if tape is None:
            out = self.forward(data)
            return Tensor(out[0] if single else out)
        out_data, ctx = self._forward_impl(data)
        out = Tensor(out_data[0] if single else out_data)

        def vjp(g):
            theta_g, lam_g, x_g = self._vjp(ctx, g[None] if single else g)
            return ((x_g[0] if single else x_g), theta_g, lam_g)

        tape.record(out, (x, self.theta, self.lam), vjp)
        return out
