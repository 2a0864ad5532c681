"""Minimal reverse-mode differentiation over the ops the model needs.

Operations executed with a :class:`Tape` argument append one entry each, in
execution order, so the recorded list is already topologically sorted.
:func:`backward` replays it in reverse, applying each entry's
vector-Jacobian product and accumulating gradients in a fixed order, which
keeps training bit-reproducible.

Only float64 arrays flow through the graph.  Tensors are never mutated
between recording and backward; the optimizer updates parameter data only
after gradients have been collected.
"""

from __future__ import annotations

from typing import Callable, Iterable, NamedTuple

import numpy as np

from . import functional as F

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "add",
    "mul",
    "scale",
    "sum_all",
    "narrow",
    "concat",
    "channel_shuffle",
    "layer_norm",
    "mish",
    "global_avg_pool",
    "cross_entropy_loss",
]


class Tensor:
    """A float64 array plus a trainability flag.

    ``grad`` is not stored here; :func:`backward` returns gradients in a
    dict keyed by the Tensor objects themselves.
    """

    __slots__ = ("data", "trainable", "name")

    def __init__(self, data, trainable: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.trainable = trainable
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.data.shape}, trainable={self.trainable})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Entry(NamedTuple):
    output: Tensor
    inputs: tuple[Tensor, ...]
    vjp: Callable[[np.ndarray], tuple]


class Tape:
    """Ordered record of executed operations with their saved contexts."""

    def __init__(self) -> None:
        self._entries: list[_Entry] = []
        self._produced: set[int] = set()
        self._trainable: dict[int, Tensor] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, output: Tensor, inputs: Iterable[Tensor], vjp) -> None:
        inputs = tuple(inputs)
        self._entries.append(_Entry(output, inputs, vjp))
        self._produced.add(id(output))
        for t in inputs:
            if t.trainable:
                self._trainable[id(t)] = t

    def produced(self, tensor: Tensor) -> bool:
        return id(tensor) in self._produced


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Gradients of a scalar ``loss`` for every trainable tensor on the tape.

    Trainable tensors that did not influence the loss map to zeros.
    """
    if not tape.produced(loss):
        raise RuntimeError("loss tensor was not recorded on this tape")
    if loss.data.shape != ():
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    partial: dict[int, np.ndarray] = {id(loss): np.ones(())}
    for entry in reversed(tape._entries):
        g_out = partial.pop(id(entry.output), None)
        if g_out is None:
            continue
        for tensor, grad in zip(entry.inputs, entry.vjp(g_out)):
            if grad is None:
                continue
            seen = partial.get(id(tensor))
            partial[id(tensor)] = grad if seen is None else seen + grad
    return {
        t: partial.get(tid, np.zeros_like(t.data))
        for tid, t in tape._trainable.items()
    }


# ---------------------------------------------------------------------------
# Ops.  Each takes Tensors (arrays are coerced to constants) and records a
# VJP when a tape is supplied.
# ---------------------------------------------------------------------------

def add(a, b, tape: Tape | None = None) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch in add: {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data + b.data)
    if tape is not None:
        tape.record(out, (a, b), lambda g: (g, g))
    return out


def mul(a, b, tape: Tape | None = None) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch in mul: {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data * b.data)
    if tape is not None:
        ad, bd = a.data, b.data
        tape.record(out, (a, b), lambda g: (g * bd, g * ad))
    return out


def scale(x, factor: float, tape: Tape | None = None) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data * factor)
    if tape is not None:
        tape.record(out, (x,), lambda g: (g * factor,))
    return out


def sum_all(x, tape: Tape | None = None) -> Tensor:
    x = as_tensor(x)
    out = Tensor(x.data.sum())
    if tape is not None:
        shape = x.data.shape
        tape.record(out, (x,), lambda g: (np.broadcast_to(g, shape).copy(),))
    return out


def narrow(x, start: int, count: int, tape: Tape | None = None) -> Tensor:
    """Channels [start, start+count) along the channel axis."""
    x = as_tensor(x)
    channels = x.data.shape[-2]
    if not (0 <= start and start + count <= channels):
        raise ValueError(f"channel slice [{start}, {start + count}) out of range for {channels}")
    out = Tensor(x.data[..., start: start + count, :].copy())
    if tape is not None:
        def vjp(g):
            full = np.zeros_like(x.data)
            full[..., start: start + count, :] = g
            return (full,)
        tape.record(out, (x,), vjp)
    return out


def concat(a, b, tape: Tape | None = None) -> Tensor:
    """Concatenate along the channel axis."""
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(np.concatenate([a.data, b.data], axis=-2))
    if tape is not None:
        split = a.data.shape[-2]
        tape.record(out, (a, b), lambda g: (g[..., :split, :], g[..., split:, :]))
    return out


def channel_shuffle(x, groups: int, tape: Tape | None = None) -> Tensor:
    x = as_tensor(x)
    perm = F.shuffle_permutation(x.data.shape[-2], groups)
    out = Tensor(x.data[..., perm, :])
    if tape is not None:
        inverse = np.argsort(perm)
        tape.record(out, (x,), lambda g: (g[..., inverse, :],))
    return out


def layer_norm(x, gamma, beta, tape: Tape | None = None) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    value, cache = F.layer_norm_with_cache(x.data, gamma.data, beta.data)
    out = Tensor(value)
    if tape is not None:
        tape.record(out, (x, gamma, beta), lambda g: F.layer_norm_vjp(cache, g))
    return out


def mish(x, tape: Tape | None = None) -> Tensor:
    x = as_tensor(x)
    out = Tensor(F.mish(x.data))
    if tape is not None:
        xd = x.data
        tape.record(out, (x,), lambda g: (g * F.mish_grad(xd),))
    return out


def global_avg_pool(x, tape: Tape | None = None) -> Tensor:
    x = as_tensor(x)
    out = Tensor(F.global_avg_pool(x.data))
    if tape is not None:
        length = x.data.shape[-1]
        tape.record(out, (x,), lambda g: (np.repeat(g[..., None], length, axis=-1) / length,))
    return out


def cross_entropy_loss(logits, labels, tape: Tape | None = None) -> Tensor:
    """Mean softmax cross-entropy over a batch of logit rows."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.intp).ravel()
    n = logits.data.shape[0]
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got {labels.shape}")
    log_probs = F.log_softmax(logits.data, axis=-1)
    out = Tensor(-log_probs[np.arange(n), labels].mean())
    if tape is not None:
        probs = np.exp(log_probs)
        def vjp(g):
            grad = probs.copy()
            grad[np.arange(n), labels] -= 1.0
            return (grad * (g / n),)
        tape.record(out, (logits,), vjp)
    return out
