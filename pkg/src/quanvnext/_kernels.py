"""Hot inner loops of the statevector simulation.

Numba-compiled when available, with pure-numpy equivalents as a fallback.
A register row is tiny (2**n complex values, n <= 10), so the compiled
paths sweep RAM once per circuit: every row is loaded, run through all
gates (and, on the backward pass, un-gated while overlap sums accumulate)
entirely in cache, then written back.

Determinism: per-row arithmetic never depends on the batch size; the
backward overlap reduction is chunked by the fixed thread count, so results
are reproducible on a given machine.
"""

from __future__ import annotations

import numpy as np

try:
    import numba

    # Avoid probing the TBB layer (old versions warn); OpenMP ships with the
    # numba wheel and handles our coarse row-parallel loops fine.
    numba.config.THREADING_LAYER = "omp"
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

__all__ = ["HAVE_NUMBA", "gate_inplace", "run_gates_inplace", "adjoint_sweep"]


# ---------------------------------------------------------------------------
# Pure-numpy reference paths
# ---------------------------------------------------------------------------

def _gate_inplace_numpy(states, lo, m00, m01, m10, m11) -> None:
    batch, dim = states.shape
    s = states.reshape(batch, dim // (2 * lo), 2, lo)
    a0 = s[:, :, 0, :].copy()
    a1 = s[:, :, 1, :]
    s[:, :, 0, :] = m00 * a0 + m01 * a1
    s[:, :, 1, :] = m11 * a1 + m10 * a0


def _pair_overlaps_numpy(adj, psi, lo) -> np.ndarray:
    batch, dim = psi.shape
    a = adj.reshape(batch, dim // (2 * lo), 2, lo)
    p = psi.reshape(batch, dim // (2 * lo), 2, lo)
    return np.einsum("bhil,bhjl->ij", a.conj(), p)


def _run_gates_numpy(states, mats, los) -> None:
    for g in range(los.size):
        m = mats[g]
        _gate_inplace_numpy(states, int(los[g]), m[0, 0], m[0, 1], m[1, 0], m[1, 1])


def _adjoint_sweep_numpy(final, weights, dag_mats, los, overlaps, amp_grads) -> None:
    psi = final.copy()
    adj = weights * final
    for g in range(los.size - 1, -1, -1):
        m = dag_mats[g]
        lo = int(los[g])
        _gate_inplace_numpy(psi, lo, m[0, 0], m[0, 1], m[1, 0], m[1, 1])
        overlaps[g] = _pair_overlaps_numpy(adj, psi, lo)
        _gate_inplace_numpy(adj, lo, m[0, 0], m[0, 1], m[1, 0], m[1, 1])
    amp_grads[:] = 2.0 * adj.real


# ---------------------------------------------------------------------------
# Numba paths
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(parallel=True, cache=True)
    def _gate_inplace_nb(states, lo, m00, m01, m10, m11):  # pragma: no cover - compiled
        batch, dim = states.shape
        hi = dim // (2 * lo)
        for b in numba.prange(batch):
            row = states[b]
            for h in range(hi):
                base = h * 2 * lo
                for lane in range(lo):
                    i0 = base + lane
                    i1 = base + lo + lane
                    a0 = row[i0]
                    a1 = row[i1]
                    row[i0] = m00 * a0 + m01 * a1
                    row[i1] = m10 * a0 + m11 * a1

    @numba.njit(parallel=True, cache=True)
    def _run_gates_nb(states, mats, los):  # pragma: no cover - compiled
        batch, dim = states.shape
        n_gates = los.size
        for b in numba.prange(batch):
            row = states[b]
            for g in range(n_gates):
                lo = los[g]
                m00 = mats[g, 0, 0]
                m01 = mats[g, 0, 1]
                m10 = mats[g, 1, 0]
                m11 = mats[g, 1, 1]
                hi = dim // (2 * lo)
                for h in range(hi):
                    base = h * 2 * lo
                    for lane in range(lo):
                        i0 = base + lane
                        i1 = base + lo + lane
                        a0 = row[i0]
                        a1 = row[i1]
                        row[i0] = m00 * a0 + m01 * a1
                        row[i1] = m10 * a0 + m11 * a1

    @numba.njit(parallel=True, cache=True)
    def _adjoint_sweep_nb(final, weights, dag_mats, los, n_chunks,
                          chunk_overlaps, amp_grads):  # pragma: no cover - compiled
        batch, dim = final.shape
        n_gates = los.size
        for t in numba.prange(n_chunks):
            start = t * batch // n_chunks
            stop = (t + 1) * batch // n_chunks
            psi = np.empty(dim, dtype=np.complex128)
            adj = np.empty(dim, dtype=np.complex128)
            for b in range(start, stop):
                for i in range(dim):
                    psi[i] = final[b, i]
                    adj[i] = weights[b, i] * final[b, i]
                for g in range(n_gates - 1, -1, -1):
                    lo = los[g]
                    m00 = dag_mats[g, 0, 0]
                    m01 = dag_mats[g, 0, 1]
                    m10 = dag_mats[g, 1, 0]
                    m11 = dag_mats[g, 1, 1]
                    hi = dim // (2 * lo)
                    s00 = 0j
                    s01 = 0j
                    s10 = 0j
                    s11 = 0j
                    for h in range(hi):
                        base = h * 2 * lo
                        for lane in range(lo):
                            i0 = base + lane
                            i1 = base + lo + lane
                            p0 = m00 * psi[i0] + m01 * psi[i1]
                            p1 = m10 * psi[i0] + m11 * psi[i1]
                            psi[i0] = p0
                            psi[i1] = p1
                            a0 = adj[i0]
                            a1 = adj[i1]
                            s00 += np.conj(a0) * p0
                            s01 += np.conj(a0) * p1
                            s10 += np.conj(a1) * p0
                            s11 += np.conj(a1) * p1
                            adj[i0] = m00 * a0 + m01 * a1
                            adj[i1] = m10 * a0 + m11 * a1
                    chunk_overlaps[t, g, 0, 0] += s00
                    chunk_overlaps[t, g, 0, 1] += s01
                    chunk_overlaps[t, g, 1, 0] += s10
                    chunk_overlaps[t, g, 1, 1] += s11
                for i in range(dim):
                    amp_grads[b, i] = 2.0 * adj[i].real


# ---------------------------------------------------------------------------
# Dispatchers
# ---------------------------------------------------------------------------

def gate_inplace(states: np.ndarray, lo: int, matrix: np.ndarray) -> None:
    """Apply a 2x2 gate in place; ``lo`` is 2**qubit."""
    if HAVE_NUMBA:
        _gate_inplace_nb(states, lo, matrix[0, 0], matrix[0, 1], matrix[1, 0], matrix[1, 1])
    else:
        _gate_inplace_numpy(states, lo, matrix[0, 0], matrix[0, 1], matrix[1, 0], matrix[1, 1])


def run_gates_inplace(states: np.ndarray, mats: np.ndarray, los: np.ndarray) -> None:
    """Apply a gate sequence (mats[g] on 2**qubit = los[g]) to every row."""
    if HAVE_NUMBA:
        _run_gates_nb(states, mats, los)
    else:
        _run_gates_numpy(states, mats, los)


def adjoint_sweep(final: np.ndarray, weights: np.ndarray, dag_mats: np.ndarray,
                  los: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reverse sweep for gradients.

    ``final`` are circuit outputs, ``weights`` the per-row diagonal of the
    observable, ``dag_mats[g]`` the conjugate transpose of gate ``g``
    (forward order).  Returns per-gate 2x2 overlap sums S[g, i, j] =
    sum_rows conj(adj_i) psi_j, evaluated with psi un-gated through g and
    adj un-gated through g+1, plus d/d(amplitudes) = 2 Re(adj) after the
    full sweep.
    """
    n_gates = los.size
    amp_grads = np.empty(final.shape)
    if HAVE_NUMBA:
        n_chunks = numba.get_num_threads()
        chunk_overlaps = np.zeros((n_chunks, n_gates, 2, 2), dtype=np.complex128)
        _adjoint_sweep_nb(final, weights, dag_mats, los, n_chunks, chunk_overlaps, amp_grads)
        return chunk_overlaps.sum(axis=0), amp_grads
    overlaps = np.zeros((n_gates, 2, 2), dtype=np.complex128)
    _adjoint_sweep_numpy(final, weights, dag_mats, los, overlaps, amp_grads)
    return overlaps, amp_grads
