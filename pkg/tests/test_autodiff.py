"""Tape mechanics, op VJPs against finite differences, loss values."""

import numpy as np
import pytest

from quanvnext import autodiff as ad
from quanvnext.autodiff import Tape, Tensor, backward, cross_entropy_loss
from quanvnext.functional import cross_entropy, log_softmax


class TestTape:
    def test_records_in_execution_order(self):
        tape = Tape()
        a = Tensor(np.ones(3), trainable=True)
        b = ad.mish(a, tape)
        c = ad.sum_all(b, tape)
        assert len(tape) == 2
        assert tape.produced(b) and tape.produced(c)
        assert not tape.produced(a)

    def test_loss_not_on_tape_is_state_error(self):
        tape = Tape()
        stray = Tensor(np.array(1.0))
        with pytest.raises(RuntimeError):
            backward(tape, stray)

    def test_non_scalar_loss_rejected(self):
        tape = Tape()
        a = Tensor(np.ones(3), trainable=True)
        b = ad.mish(a, tape)
        with pytest.raises(ValueError):
            backward(tape, b)


class TestBackwardBasics:
    def test_constant_loss_gives_zero_gradients(self):
        tape = Tape()
        param = Tensor(np.array([1.0, 2.0]), trainable=True)
        ad.sum_all(param, tape)  # touch the parameter
        zero = ad.scale(ad.sum_all(param, tape), 0.0, tape)
        grads = backward(tape, zero)
        assert np.array_equal(grads[param], np.zeros(2))

    def test_quadratic_gradient_equals_params(self):
        tape = Tape()
        param = Tensor(np.array([3.0, -1.0, 0.5]), trainable=True)
        loss = ad.scale(ad.sum_all(ad.mul(param, param, tape), tape), 0.5, tape)
        grads = backward(tape, loss)
        assert np.allclose(grads[param], param.data, atol=1e-15)

    def test_untouched_parameter_gets_zeros(self):
        tape = Tape()
        used = Tensor(np.array([2.0]), trainable=True)
        unused = Tensor(np.array([5.0]), trainable=True)
        loss = ad.sum_all(ad.mul(used, used, tape), tape)
        _ = ad.sum_all(unused, tape)  # on the tape, but not feeding the loss
        grads = backward(tape, loss)
        assert np.array_equal(grads[unused], np.zeros(1))
        assert np.allclose(grads[used], 2 * used.data)

    def test_gradient_accumulates_over_reuse(self):
        tape = Tape()
        param = Tensor(np.array([1.5]), trainable=True)
        loss = ad.sum_all(ad.add(ad.mul(param, param, tape), param, tape), tape)
        grads = backward(tape, loss)
        assert np.allclose(grads[param], 2 * param.data + 1.0)


def finite_difference(fn, x, eps=1e-6):
    grad = np.zeros_like(x)
    flat = x.ravel()
    out = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = fn()
        flat[i] = orig - eps
        minus = fn()
        flat[i] = orig
        out[i] = (plus - minus) / (2 * eps)
    return grad


class TestOpGradients:
    @pytest.mark.parametrize("op,shape", [
        ("mish", (3, 4)),
        ("global_avg_pool", (2, 5)),
        ("channel_shuffle", (4, 3)),
        ("narrow", (4, 3)),
    ])
    def test_vjp_matches_finite_differences(self, op, shape):
        rng = np.random.default_rng(hash(op) % 2**32)
        x = rng.normal(size=shape)
        upstream_shape = {
            "mish": shape,
            "global_avg_pool": shape[:-1],
            "channel_shuffle": shape,
            "narrow": (2, shape[-1]),
        }[op]
        upstream = rng.normal(size=upstream_shape)

        def apply(tensor, tape=None):
            if op == "mish":
                return ad.mish(tensor, tape)
            if op == "global_avg_pool":
                return ad.global_avg_pool(tensor, tape)
            if op == "channel_shuffle":
                return ad.channel_shuffle(tensor, 2, tape)
            return ad.narrow(tensor, 1, 2, tape)

        tensor = Tensor(x, trainable=True)
        tape = Tape()
        out = apply(tensor, tape)
        loss = ad.sum_all(ad.mul(out, Tensor(upstream), tape), tape)
        grads = backward(tape, loss)

        def value():
            return float((apply(Tensor(x)).data * upstream).sum())

        fd = finite_difference(value, x)
        assert np.allclose(grads[tensor], fd, atol=1e-6)

    def test_layer_norm_vjp(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(5, 4))
        gamma = rng.normal(size=5)
        beta = rng.normal(size=5)
        upstream = rng.normal(size=(5, 4))
        xt, gt, bt = Tensor(x, trainable=True), Tensor(gamma, trainable=True), Tensor(beta, trainable=True)
        tape = Tape()
        out = ad.layer_norm(xt, gt, bt, tape)
        loss = ad.sum_all(ad.mul(out, Tensor(upstream), tape), tape)
        grads = backward(tape, loss)

        def value(xv, gv, bv):
            from quanvnext.functional import layer_norm
            return float((layer_norm(xv, gv, bv) * upstream).sum())

        for arr, tensor in ((x, xt), (gamma, gt), (beta, bt)):
            fd = finite_difference(lambda: value(x, gamma, beta), arr)
            assert np.allclose(grads[tensor], fd, atol=1e-5), tensor.name

    def test_concat_splits_gradient(self):
        rng = np.random.default_rng(13)
        a = Tensor(rng.normal(size=(2, 3)), trainable=True)
        b = Tensor(rng.normal(size=(1, 3)), trainable=True)
        upstream = rng.normal(size=(3, 3))
        tape = Tape()
        out = ad.concat(a, b, tape)
        loss = ad.sum_all(ad.mul(out, Tensor(upstream), tape), tape)
        grads = backward(tape, loss)
        assert np.allclose(grads[a], upstream[:2])
        assert np.allclose(grads[b], upstream[2:])


class TestCrossEntropy:
    def test_equal_logits(self):
        assert cross_entropy([0.1, 0.1], 1) == pytest.approx(np.log(2.0), abs=1e-12)

    def test_hand_value(self):
        assert cross_entropy([1.0, 0.0], 0) == pytest.approx(0.3132616875182228, abs=1e-12)

    def test_large_margin_saturates(self):
        assert cross_entropy([30.0, 0.0], 0) < 1e-12

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            cross_entropy([0.0, 0.0], 2)

    def test_batched_loss_matches_mean_of_single(self):
        rng = np.random.default_rng(14)
        logits = rng.normal(size=(6, 2))
        labels = rng.integers(0, 2, size=6)
        loss = cross_entropy_loss(Tensor(logits), labels)
        expected = np.mean([cross_entropy(logits[i], labels[i]) for i in range(6)])
        assert float(loss.data) == pytest.approx(expected, abs=1e-12)

    def test_batched_loss_gradient(self):
        rng = np.random.default_rng(15)
        logits = rng.normal(size=(4, 2))
        labels = np.array([0, 1, 1, 0])
        tensor = Tensor(logits, trainable=True)
        tape = Tape()
        loss = cross_entropy_loss(tensor, labels, tape)
        grads = backward(tape, loss)
        probs = np.exp(log_softmax(logits, axis=-1))
        expected = probs.copy()
        expected[np.arange(4), labels] -= 1.0
        assert np.allclose(grads[tensor], expected / 4, atol=1e-12)
