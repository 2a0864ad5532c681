"""Statevector core: gates, embedding, measurement, exact gradients."""

import numpy as np
import pytest

from quanvnext import qsim
from quanvnext.qsim import (
    FilterCircuit,
    StateVector,
    amplitude_embed,
    apply_single_qubit_unitary,
    filter_gradients,
    run_filter,
    z_expectations,
)


def random_circuit(rng, max_qubits=4, max_depth=3):
    n = int(rng.integers(1, max_qubits + 1))
    depth = int(rng.integers(1, max_depth + 1))
    return FilterCircuit.random(n, depth, rng)


def random_features(rng, n_qubits):
    m = int(rng.integers(1, (1 << n_qubits) + 1))
    raw = rng.normal(size=m)
    return raw / np.linalg.norm(raw)


def weighted_expectation(features, circuit, upstream):
    return float(np.dot(upstream, run_filter(features, circuit)))


def raw_amplitude_value(amplitudes, circuit, upstream):
    """Evaluate the circuit directly from unconstrained head amplitudes.

    Finite differences must perturb the embedded amplitudes freely, which
    the norm-checked public embedding forbids.
    """
    full = np.zeros(1 << circuit.n_qubits, dtype=np.complex128)
    full[: len(amplitudes)] = amplitudes
    out = qsim.run_circuit_batch(full[None], circuit.theta, circuit.lam, circuit.phi)
    return float(np.dot(upstream, qsim.z_expectations_batch(out, circuit.n_qubits)[0]))


class TestStateVector:
    def test_length_must_match_qubits(self):
        with pytest.raises(ValueError):
            StateVector(2, np.ones(3))

    def test_norm_squared(self):
        state = StateVector(1, np.array([0.6, 0.8j]))
        assert state.norm_squared == pytest.approx(1.0, abs=1e-15)


class TestApplySingleQubitUnitary:
    def test_identity_angles_leave_ground_state(self):
        state = amplitude_embed([1.0], 1)
        out = apply_single_qubit_unitary(state, 0, 0.0, 0.0, 0.0)
        assert np.array_equal(out.amplitudes, np.array([1.0 + 0.0j, 0.0 + 0.0j]))

    def test_half_turn_flips_ground_state(self):
        out = apply_single_qubit_unitary(amplitude_embed([1.0], 1), 0, 1.0, 0.0, 0.0)
        assert abs(out.amplitudes[1] - 1.0) < 1e-12
        assert abs(out.amplitudes[0]) < 1e-12

    def test_norm_preserved_on_random_states(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            n = int(rng.integers(1, 5))
            raw = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
            state = StateVector(n, raw / np.linalg.norm(raw))
            out = apply_single_qubit_unitary(
                state, int(rng.integers(0, n)),
                float(rng.uniform(-2, 2)), float(rng.uniform(0, 2)), float(rng.uniform(-2, 2)),
            )
            assert abs(out.norm_squared - 1.0) < 1e-9

    def test_qubit_out_of_range(self):
        with pytest.raises(ValueError):
            apply_single_qubit_unitary(amplitude_embed([1.0], 1), 1, 0.5, 0.0, 0.0)


class TestAmplitudeEmbed:
    def test_single_feature(self):
        state = amplitude_embed([1.0], 1)
        assert np.array_equal(state.amplitudes, np.array([1.0 + 0j, 0.0 + 0j]))

    def test_zero_padding(self):
        state = amplitude_embed([1 / np.sqrt(2), 1 / np.sqrt(2)], 2)
        expected = np.array([1 / np.sqrt(2), 1 / np.sqrt(2), 0.0, 0.0], dtype=complex)
        assert np.allclose(state.amplitudes, expected, atol=1e-15)

    def test_uniform_eight(self):
        state = amplitude_embed(np.full(8, 1 / np.sqrt(8)), 3)
        assert np.allclose(state.amplitudes, 1 / np.sqrt(8), atol=1e-15)

    def test_too_many_features(self):
        with pytest.raises(ValueError):
            amplitude_embed(np.full(5, 1 / np.sqrt(5)), 2)

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError):
            amplitude_embed([1.0, 1.0], 1)


class TestZExpectations:
    def test_ground_state_all_plus_one(self):
        state = amplitude_embed([1.0] + [0.0] * 7, 3)
        assert np.array_equal(z_expectations(state), np.ones(3))

    def test_uniform_superposition_zero(self):
        state = amplitude_embed(np.full(4, 0.5), 2)
        assert np.allclose(z_expectations(state), 0.0, atol=1e-15)

    def test_quarter_turn_balances_z(self):
        state = apply_single_qubit_unitary(amplitude_embed([1.0], 1), 0, 0.5, 0.0, 0.0)
        assert z_expectations(state)[0] == pytest.approx(0.0, abs=1e-12)

    def test_bounds_on_random_states(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            n = int(rng.integers(1, 6))
            raw = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
            state = StateVector(n, raw / np.linalg.norm(raw))
            values = z_expectations(state)
            assert np.all(values >= -1.0 - 1e-12)
            assert np.all(values <= 1.0 + 1e-12)


class TestRunFilter:
    def test_identity_circuit_on_ground_state(self):
        circuit = FilterCircuit(3, 1, np.zeros((1, 3)), np.zeros((1, 3)), np.zeros((1, 3)))
        out = run_filter([1.0] + [0.0] * 7, circuit)
        assert np.array_equal(out, np.ones(3))

    def test_half_turn_gives_minus_one(self):
        circuit = FilterCircuit(1, 1, [[1.0]], [[0.0]], [[0.0]])
        assert run_filter([1.0], circuit)[0] == pytest.approx(-1.0, abs=1e-12)

    def test_outputs_bounded(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            circuit = random_circuit(rng)
            out = run_filter(random_features(rng, circuit.n_qubits), circuit)
            assert np.all(np.abs(out) <= 1.0 + 1e-12)

    def test_deterministic_across_calls(self):
        rng = np.random.default_rng(6)
        circuit = random_circuit(rng)
        features = random_features(rng, circuit.n_qubits)
        assert np.array_equal(run_filter(features, circuit), run_filter(features, circuit))


class TestFilterCircuit:
    def test_phi_is_frozen(self):
        circuit = FilterCircuit.random(2, 2, np.random.default_rng(0))
        with pytest.raises(ValueError):
            circuit.phi[0, 0] = 1.0

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            FilterCircuit(2, 1, np.zeros((1, 3)), np.zeros((1, 2)), np.zeros((1, 2)))


class TestFilterGradients:
    def test_zero_upstream_gives_zero_gradients(self):
        rng = np.random.default_rng(7)
        circuit = random_circuit(rng)
        features = random_features(rng, circuit.n_qubits)
        theta_g, lam_g, feat_g = filter_gradients(features, circuit, np.zeros(circuit.n_qubits))
        assert not theta_g.any() and not lam_g.any() and not feat_g.any()

    def test_single_qubit_analytic_derivative(self):
        # E(theta) = cos(theta*pi) for |0> input, so dE/dtheta = -pi*sin(theta*pi).
        for theta in (0.0, 0.3, -0.7):
            circuit = FilterCircuit(1, 1, [[theta]], [[0.0]], [[0.0]])
            theta_g, _, _ = filter_gradients([1.0], circuit, [1.0])
            assert theta_g[0, 0] == pytest.approx(-np.pi * np.sin(theta * np.pi), abs=1e-10)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        eps = 1e-5
        checked = 0
        while checked < 100:
            circuit = random_circuit(rng)
            features = random_features(rng, circuit.n_qubits)
            upstream = rng.normal(size=circuit.n_qubits)
            theta_g, lam_g, feat_g = filter_gradients(features, circuit, upstream)
            for arr, grads in (("theta", theta_g), ("lam", lam_g)):
                layer = int(rng.integers(0, circuit.depth))
                qubit = int(rng.integers(0, circuit.n_qubits))
                for sign in (+1, -1):
                    theta = circuit.theta.copy()
                    lam = circuit.lam.copy()
                    target = theta if arr == "theta" else lam
                    target[layer, qubit] += sign * eps
                    shifted = FilterCircuit(circuit.n_qubits, circuit.depth, theta, lam, circuit.phi)
                    value = weighted_expectation(features, shifted, upstream)
                    if sign > 0:
                        plus = value
                    else:
                        minus = value
                fd = (plus - minus) / (2 * eps)
                got = grads[layer, qubit]
                assert abs(fd - got) <= 1e-4 * max(1.0, abs(fd)), (arr, fd, got)
                checked += 1
            index = int(rng.integers(0, features.size))
            fp = features.copy()
            fp[index] += eps
            fm = features.copy()
            fm[index] -= eps
            fd = (
                raw_amplitude_value(fp, circuit, upstream)
                - raw_amplitude_value(fm, circuit, upstream)
            ) / (2 * eps)
            assert abs(fd - feat_g[index]) <= 1e-4 * max(1.0, abs(fd))
            checked += 1

    def test_upstream_length_validated(self):
        circuit = FilterCircuit(2, 1, np.zeros((1, 2)), np.zeros((1, 2)), np.zeros((1, 2)))
        with pytest.raises(ValueError):
            filter_gradients([1.0], circuit, [1.0, 0.0, 0.0])


class TestNormConservation:
    def test_thousand_random_circuits(self):
        rng = np.random.default_rng(9)
        worst = 0.0
        for _ in range(250):
            n = int(rng.integers(1, 7))
            circuit = FilterCircuit.random(n, int(rng.integers(1, 3)), rng)
            features = random_features(rng, n)
            state = amplitude_embed(features, n)
            out = qsim.run_circuit_batch(
                state.amplitudes[None], circuit.theta, circuit.lam, circuit.phi
            )
            worst = max(worst, abs(float(np.sum(np.abs(out) ** 2)) - 1.0))
        assert worst < 1e-9
