"""Built-in sanity suite: fast randomized checks of the core invariants.

Each check prints one PASS/FAIL line; the run exits nonzero if any fails.
This is a smoke screen for installations, not a substitute for the test
suite.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["run_selfcheck"]


def _check_quantum_invariants(rng: np.random.Generator) -> tuple[bool, str]:
    from . import qsim

    worst_norm = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 7))
        circuit = qsim.FilterCircuit.random(n, int(rng.integers(1, 3)), rng)
        raw = rng.normal(size=int(rng.integers(1, (1 << n) + 1)))
        features = raw / np.linalg.norm(raw)
        state = qsim.amplitude_embed(features, n)
        out = qsim.run_circuit_batch(state.amplitudes[None], circuit.theta, circuit.lam, circuit.phi)
        worst_norm = max(worst_norm, abs(float(np.sum(np.abs(out) ** 2)) - 1.0))
        expectations = qsim.z_expectations_batch(out, n)[0]
        if np.any(np.abs(expectations) > 1.0 + 1e-12):
            return False, f"expectation out of [-1, 1]: {expectations}"
    ok = worst_norm < 1e-9
    return ok, f"worst norm drift {worst_norm:.2e}"


def _check_filter_gradients(rng: np.random.Generator) -> tuple[bool, str]:
    from . import qsim

    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 5))
        depth = int(rng.integers(1, 4))
        circuit = qsim.FilterCircuit.random(n, depth, rng)
        raw = rng.normal(size=int(rng.integers(1, (1 << n) + 1)))
        features = raw / np.linalg.norm(raw)
        upstream = rng.normal(size=n)
        theta_g, _, _ = qsim.filter_gradients(features, circuit, upstream)
        eps = 1e-5
        layer = int(rng.integers(0, depth))
        q = int(rng.integers(0, n))
        for sign in (1.0, -1.0):
            theta = circuit.theta.copy()
            theta[layer, q] += sign * eps
            shifted = qsim.FilterCircuit(n, depth, theta, circuit.lam, circuit.phi)
            value = float(upstream @ qsim.run_filter(features, shifted))
            if sign > 0:
                plus = value
            else:
                minus = value
        fd = (plus - minus) / (2 * eps)
        worst = max(worst, abs(fd - theta_g[layer, q]) / max(1e-6, abs(fd), abs(theta_g[layer, q])))
    return worst < 1e-4, f"worst relative gradient error {worst:.2e}"


def _check_layer_gradient(rng: np.random.Generator) -> tuple[bool, str]:
    from .quanv import Quanv1D, QuanvConfig

    cfg = QuanvConfig(in_channels=2, out_channels=3, kernel=2, stride=1,
                      padding=1, temperature=0.9, depth=1)
    layer = Quanv1D(cfg, rng)
    x = rng.normal(size=(1, 2, 6))
    upstream = rng.normal(size=(1, 3, cfg.output_length(6)))
    layer.forward(x, keep_context=True)
    _, _, x_grad = layer.backward(upstream)
    eps = 1e-5
    worst = 0.0
    for idx in [(0, 0, 0), (0, 1, 3), (0, 0, 5)]:
        xp = x.copy(); xp[idx] += eps
        xm = x.copy(); xm[idx] -= eps
        fd = float((upstream * (layer.forward(xp) - layer.forward(xm))).sum()) / (2 * eps)
        worst = max(worst, abs(fd - x_grad[idx]) / max(1e-6, abs(fd)))
    return worst < 1e-4, f"worst input-gradient error {worst:.2e}"


def _check_metrics(rng: np.random.Generator) -> tuple[bool, str]:
    from .metrics import auc_roc, ece, mcc, ConfusionCounts

    for _ in range(200):
        n = int(rng.integers(4, 40))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        scores = np.round(rng.random(n), 2)
        pairs = 0.0
        for i in np.flatnonzero(labels == 1):
            for j in np.flatnonzero(labels == 0):
                if scores[i] > scores[j]:
                    pairs += 1.0
                elif scores[i] == scores[j]:
                    pairs += 0.5
        reference = pairs / (np.sum(labels == 1) * np.sum(labels == 0))
        if abs(auc_roc(scores, labels) - reference) > 1e-12:
            return False, "AUC disagrees with pairwise reference"
    if mcc(ConfusionCounts(10, 10, 0, 0)) != 1.0 or mcc(ConfusionCounts(25, 25, 25, 25)) != 0.0:
        return False, "MCC sanity values wrong"
    if abs(ece([0.9, 0.9], [True, False]) - 0.4) > 1e-12:
        return False, "ECE single-bin value wrong"
    return True, "AUC/MCC/ECE match references"


def _check_shuffle(rng: np.random.Generator) -> tuple[bool, str]:
    from .functional import channel_shuffle, shuffle_permutation

    for channels in range(1, 17):
        for groups in range(1, channels + 1):
            if channels % groups:
                continue
            perm = shuffle_permutation(channels, groups)
            if sorted(perm) != list(range(channels)):
                return False, f"C={channels} g={groups} is not a permutation"
            x = rng.normal(size=(channels, 3))
            if groups in (1, channels) and not np.array_equal(channel_shuffle(x, groups), x):
                return False, f"C={channels} g={groups} should be the identity"
    return True, "permutation and identity laws hold for C <= 16"


def _check_uncertainty_zero_eps(rng: np.random.Generator) -> tuple[bool, str]:
    from .model import BlockSpec, ModelConfig, QuanvNeXt
    from .uncertainty import perturb_predict
    from .functional import softmax

    config = ModelConfig(in_channels=2, in_length=32, width=8,
                         blocks=(BlockSpec(3, 1, 1.0),), proj_kernel=4, proj_stride=4)
    model = QuanvNeXt(config, seed=0)
    x = rng.normal(size=(2, 32))
    mean_probs, spread = perturb_predict(model, x, epsilon=0.0, n=8, seed=1)
    direct = softmax(model.predict_logits(x))
    ok = spread == 0.0 and np.array_equal(mean_probs, direct)
    return ok, f"spread {spread!r}"


def run_selfcheck(seed: int = 0) -> int:
    rng = np.random.default_rng(seed)
    checks = [
        ("quantum-core invariants (norm, bounds)", _check_quantum_invariants),
        ("filter gradients vs finite differences", _check_filter_gradients),
        ("layer gradient vs finite differences", _check_layer_gradient),
        ("metric oracle agreement", _check_metrics),
        ("channel-shuffle laws", _check_shuffle),
        ("zero-epsilon uncertainty exactness", _check_uncertainty_zero_eps),
    ]
    failures = 0
    for name, check in checks:
        try:
            ok, detail = check(rng)
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
        failures += 0 if ok else 1
    return 1 if failures else 0
