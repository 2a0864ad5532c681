"""Statevector simulation of the per-filter quantum circuits.

A register of ``n`` qubits is a length ``2**n`` complex amplitude vector.
Bit ordering is little-endian: qubit ``q`` corresponds to bit ``q`` of the
basis-state index, i.e. basis state ``i`` assigns qubit ``q`` the value
``(i >> q) & 1``.

The single gate used everywhere is the parametrized 2x2 unitary

    U(theta, phi, lam) = [[ cos(theta*pi/2),             -e^{i*lam} * sin(theta*pi/2)        ],
                          [ e^{i*phi} * sin(theta*pi/2),  e^{i*(phi+lam)} * cos(theta*pi/2) ]]

Angles are expressed in half-turns (theta = 1 maps |0> to |1>).  ``theta``
and ``lam`` are trainable; ``phi`` is drawn once at construction and frozen.

Gradients of Z-expectations with respect to circuit parameters and input
amplitudes are exact, computed adjoint-style: one reverse sweep that
un-applies each gate (its conjugate transpose) to both the state and the
observable-propagated costate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

__all__ = [
    "StateVector",
    "FilterCircuit",
    "apply_single_qubit_unitary",
    "amplitude_embed",
    "z_expectations",
    "run_filter",
    "filter_gradients",
]

_NORM_TOL = 1e-9


def gate_matrix(theta: float, phi: float, lam: float) -> np.ndarray:
    """2x2 unitary for the given half-turn angles."""
    c = math.cos(theta * math.pi / 2.0)
    s = math.sin(theta * math.pi / 2.0)
    el = np.exp(1j * lam)
    ep = np.exp(1j * phi)
    return np.array([[c, -el * s], [ep * s, ep * el * c]], dtype=np.complex128)


def _gate_theta_derivative(theta: float, phi: float, lam: float) -> np.ndarray:
    h = math.pi / 2.0
    c = math.cos(theta * h)
    s = math.sin(theta * h)
    el = np.exp(1j * lam)
    ep = np.exp(1j * phi)
    return h * np.array([[-s, -el * c], [ep * c, -ep * el * s]], dtype=np.complex128)


def _gate_lam_derivative(theta: float, phi: float, lam: float) -> np.ndarray:
    c = math.cos(theta * math.pi / 2.0)
    s = math.sin(theta * math.pi / 2.0)
    el = np.exp(1j * lam)
    ep = np.exp(1j * phi)
    return np.array([[0.0, -1j * el * s], [0.0, 1j * ep * el * c]], dtype=np.complex128)


@dataclass
class StateVector:
    """Amplitudes of an ``n_qubits`` register (little-endian basis order)."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be positive, got {self.n_qubits}")
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ValueError(
                f"amplitude vector must have length {1 << self.n_qubits}, "
                f"got shape {self.amplitudes.shape}"
            )

    @property
    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))


@dataclass
class FilterCircuit:
    """Per-filter circuit: ``depth`` layers of one unitary per qubit.

    ``theta`` and ``lam`` are trainable, shape (depth, n_qubits).  ``phi``
    has the same shape but is frozen after construction (its array is made
    read-only).
    """

    n_qubits: int
    depth: int
    theta: np.ndarray
    lam: np.ndarray
    phi: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.n_qubits < 1 or self.depth < 1:
            raise ValueError("n_qubits and depth must be positive")
        shape = (self.depth, self.n_qubits)
        self.theta = np.array(self.theta, dtype=np.float64)
        self.lam = np.array(self.lam, dtype=np.float64)
        self.phi = np.array(self.phi, dtype=np.float64)
        for name, arr in (("theta", self.theta), ("lam", self.lam), ("phi", self.phi)):
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
        self.phi.flags.writeable = False

    @classmethod
    def random(cls, n_qubits: int, depth: int, rng: np.random.Generator) -> "FilterCircuit":
        """theta, lam ~ U(-1, 1); phi ~ U(0, 2), all in half-turn units."""
        shape = (depth, n_qubits)
        return cls(
            n_qubits=n_qubits,
            depth=depth,
            theta=rng.uniform(-1.0, 1.0, shape),
            lam=rng.uniform(-1.0, 1.0, shape),
            phi=rng.uniform(0.0, 2.0, shape),
        )


# ---------------------------------------------------------------------------
# Batched primitives.  States are (batch, 2**n) complex arrays; the public
# single-state API below wraps batches of one.
# ---------------------------------------------------------------------------

def apply_gate_batch(states: np.ndarray, qubit: int, matrix: np.ndarray) -> np.ndarray:
    """Apply a 2x2 matrix to ``qubit`` of every state; returns a new array."""
    out = np.array(states, dtype=np.complex128, order="C")
    _kernels.gate_inplace(out, 1 << qubit, np.asarray(matrix, dtype=np.complex128))
    return out


def z_sign_table(n_qubits: int) -> np.ndarray:
    """(n, 2**n) table of Z eigenvalues: +1 where bit q of the index is 0."""
    idx = np.arange(1 << n_qubits)
    bits = (idx[None, :] >> np.arange(n_qubits)[:, None]) & 1
    return 1.0 - 2.0 * bits


def _gate_sequence(theta: np.ndarray, lam: np.ndarray, phi: np.ndarray):
    """Flat (G, 2, 2) matrices and (G,) lo offsets in application order:
    qubit 0..n-1 within each layer, layers in order."""
    depth, n = theta.shape
    mats = np.empty((depth * n, 2, 2), dtype=np.complex128)
    los = np.empty(depth * n, dtype=np.int64)
    g = 0
    for layer in range(depth):
        for q in range(n):
            mats[g] = gate_matrix(theta[layer, q], phi[layer, q], lam[layer, q])
            los[g] = 1 << q
            g += 1
    return mats, los


def run_circuit_batch(states: np.ndarray, theta: np.ndarray, lam: np.ndarray,
                      phi: np.ndarray) -> np.ndarray:
    """Apply every layer's unitaries (qubit 0..n-1 within each layer).

    The input array is left untouched; gates run in place on a copy.
    """
    mats, los = _gate_sequence(theta, lam, phi)
    out = np.array(states, dtype=np.complex128, order="C")
    _kernels.run_gates_inplace(out, mats, los)
    return out


def z_expectations_batch(states: np.ndarray, n_qubits: int) -> np.ndarray:
    # Per-qubit bit-axis sums rather than a matmul: each row's reduction
    # order is then independent of the batch size, so evaluations are
    # bit-identical however the batch is chunked.
    probs = np.abs(states) ** 2
    batch, dim = probs.shape
    out = np.empty((batch, n_qubits))
    for q in range(n_qubits):
        lo = 1 << q
        split = probs.reshape(batch, dim >> (q + 1), 2, lo)
        out[:, q] = (split[:, :, 0, :] - split[:, :, 1, :]).sum(axis=(1, 2))
    return out


def adjoint_gradients_batch(
    final_states: np.ndarray,
    theta: np.ndarray,
    lam: np.ndarray,
    phi: np.ndarray,
    upstream: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients of sum_b sum_q upstream[b, q] * E_q(state_b).

    ``final_states`` must be the circuit output for each batch row.  Returns
    (theta_grads, lam_grads) summed over the batch, shape (depth, n), plus
    the gradient with respect to the real input amplitudes, shape
    (batch, 2**n).  ``phi`` receives no gradient by contract.
    """
    depth, n = theta.shape
    signs = z_sign_table(n)
    # The observable sum_q u_q Z_q is diagonal; seed the costate with O|psi>.
    weights = np.ascontiguousarray(upstream @ signs)
    final_states = np.ascontiguousarray(final_states)
    mats, los = _gate_sequence(theta, lam, phi)
    dag_mats = np.ascontiguousarray(mats.conj().transpose(0, 2, 1))
    overlaps, amplitude_grads = _kernels.adjoint_sweep(final_states, weights, dag_mats, los)
    theta_grads = np.empty((depth, n))
    lam_grads = np.empty((depth, n))
    g = 0
    for layer in range(depth):
        for q in range(n):
            t, p, l = theta[layer, q], phi[layer, q], lam[layer, q]
            theta_grads[layer, q] = 2.0 * np.real(
                np.sum(overlaps[g] * _gate_theta_derivative(t, p, l))
            )
            lam_grads[layer, q] = 2.0 * np.real(
                np.sum(overlaps[g] * _gate_lam_derivative(t, p, l))
            )
            g += 1
    return theta_grads, lam_grads, amplitude_grads


# ---------------------------------------------------------------------------
# Public single-state operations.
# ---------------------------------------------------------------------------

def apply_single_qubit_unitary(state: StateVector, qubit: int, theta: float,
                               phi: float, lam: float) -> StateVector:
    """Apply U(theta, phi, lam) to one qubit; norm is preserved."""
    if not 0 <= qubit < state.n_qubits:
        raise ValueError(f"qubit index {qubit} out of range for {state.n_qubits} qubits")
    out = apply_gate_batch(state.amplitudes[None, :], qubit, gate_matrix(theta, phi, lam))[0]
    return StateVector(state.n_qubits, out)


def amplitude_embed(features: np.ndarray, n_qubits: int) -> StateVector:
    """Load a unit-norm real vector into the leading amplitudes, zero-padded.

    The caller is responsible for normalization (see quanv.normalize_patch);
    inputs whose squared sum deviates from 1 by more than 1e-9 are rejected.
    """
    features = np.asarray(features, dtype=np.float64).ravel()
    dim = 1 << n_qubits
    if features.size > dim:
        raise ValueError(f"{features.size} features exceed the {dim} amplitudes of {n_qubits} qubits")
    sq = float(np.sum(features**2))
    if abs(sq - 1.0) > _NORM_TOL:
        raise ValueError(f"features are not normalized: sum of squares {sq!r}")
    amps = np.zeros(dim, dtype=np.complex128)
    amps[: features.size] = features
    return StateVector(n_qubits, amps)


def z_expectations(state: StateVector) -> np.ndarray:
    """Per-qubit <Z> values, each in [-1, 1]."""
    return z_expectations_batch(state.amplitudes[None, :], state.n_qubits)[0]


def run_filter(features: np.ndarray, circuit: FilterCircuit) -> np.ndarray:
    """Embed, run all layers, measure: the full per-filter pipeline."""
    state = amplitude_embed(features, circuit.n_qubits)
    out = run_circuit_batch(state.amplitudes[None, :], circuit.theta, circuit.lam, circuit.phi)
    return z_expectations_batch(out, circuit.n_qubits)[0]


def filter_gradients(
    features: np.ndarray,
    circuit: FilterCircuit,
    upstream: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of sum_q upstream[q] * E_q w.r.t. theta, lam and features.

    Exact (adjoint-mode) differentiation of the simulation; phi is frozen and
    gets no gradient.  The feature gradient covers the embedded entries only;
    zero-padding positions are constants.
    """
    features = np.asarray(features, dtype=np.float64).ravel()
    upstream = np.asarray(upstream, dtype=np.float64).ravel()
    if upstream.shape != (circuit.n_qubits,):
        raise ValueError(f"upstream must have length {circuit.n_qubits}, got {upstream.shape}")
    state = amplitude_embed(features, circuit.n_qubits)
    final = run_circuit_batch(state.amplitudes[None, :], circuit.theta, circuit.lam, circuit.phi)
    theta_g, lam_g, amp_g = adjoint_gradients_batch(
        final, circuit.theta, circuit.lam, circuit.phi, upstream[None, :]
    )
    return theta_g, lam_g, amp_g[0, : features.size]
