"""Quanv1D geometry, normalization, forward semantics and gradients."""

import numpy as np
import pytest

from quanvnext.qsim import amplitude_embed, z_expectations
from quanvnext.quanv import (
    Quanv1D,
    QuanvConfig,
    extract_patches,
    normalize_patch,
    output_length,
)


def reference_patches(x, cfg):
    """Naive nested-loop patch extraction (the geometry oracle)."""
    channels, length = x.shape
    l_out = output_length(length, cfg.kernel, cfg.stride, cfg.padding, cfg.dilation)
    out = np.zeros((l_out, channels * cfg.kernel))
    for t in range(l_out):
        col = 0
        for c in range(channels):
            for j in range(cfg.kernel):
                src = t * cfg.stride - cfg.padding + j * cfg.dilation
                if 0 <= src < length:
                    out[t, col] = x[c, src]
                col += 1
    return out


def zeroed(layer):
    layer.theta.data = np.zeros_like(layer.theta.data)
    layer.lam.data = np.zeros_like(layer.lam.data)
    phi = np.zeros_like(layer.phi)
    phi.flags.writeable = False
    layer.phi = phi
    return layer


class TestOutputLength:
    def test_table_values(self):
        assert output_length(2000, 8, 8, 0, 1) == 250
        assert output_length(250, 8, 8, 0, 1) == 31
        assert output_length(2048, 8, 8, 0, 1) == 256
        assert output_length(256, 8, 8, 0, 1) == 32

    def test_identity_geometry(self):
        for length in (1, 5, 100):
            assert output_length(length, 1, 1, 0, 1) == length

    def test_dilated_case_matches_enumeration(self):
        # Brute force: count starts t with all taps of the dilated kernel
        # inside the padded signal.
        length, kernel, stride, padding, dilation = 10, 3, 1, 1, 2
        count = 0
        t = 0
        while t * stride + dilation * (kernel - 1) < length + 2 * padding:
            count += 1
            t += 1
        assert count == 8
        assert output_length(length, kernel, stride, padding, dilation) == 8

    def test_oversized_kernel_rejected(self):
        with pytest.raises(ValueError):
            output_length(4, 9, 1, 0, 1)


class TestExtractPatches:
    def test_non_overlapping_split(self):
        cfg = QuanvConfig(in_channels=1, out_channels=1, kernel=2, stride=2)
        patches = extract_patches(np.array([[1.0, 2.0, 3.0, 4.0]]), cfg)
        assert np.array_equal(patches, np.array([[1.0, 2.0], [3.0, 4.0]]))

    def test_zero_padding(self):
        cfg = QuanvConfig(in_channels=1, out_channels=1, kernel=2, stride=1, padding=1)
        patches = extract_patches(np.array([[1.0, 2.0]]), cfg)
        assert np.array_equal(patches, np.array([[0.0, 1.0], [1.0, 2.0], [2.0, 0.0]]))

    def test_channel_major_flattening(self):
        cfg = QuanvConfig(in_channels=2, out_channels=1, kernel=1, stride=1)
        patches = extract_patches(np.array([[1.0, 2.0], [3.0, 4.0]]), cfg)
        assert np.array_equal(patches, np.array([[1.0, 3.0], [2.0, 4.0]]))

    def test_matches_nested_loop_reference(self):
        rng = np.random.default_rng(0)
        for _ in range(40):
            channels = int(rng.integers(1, 4))
            kernel = int(rng.integers(1, 5))
            stride = int(rng.integers(1, 4))
            padding = int(rng.integers(0, 3))
            dilation = int(rng.integers(1, 3))
            length = int(rng.integers(max(1, dilation * (kernel - 1) + 1), 20))
            cfg = QuanvConfig(in_channels=channels, out_channels=1, kernel=kernel,
                              stride=stride, padding=padding, dilation=dilation)
            x = rng.normal(size=(channels, length))
            assert np.allclose(extract_patches(x, cfg), reference_patches(x, cfg), atol=0)


class TestNormalizePatch:
    def test_constant_patch_is_uniform(self):
        for temp in (0.3, 1.0, 4.0):
            out = normalize_patch(np.full(4, 2.5), temp, 8)
            assert np.allclose(out[:4], 0.5, atol=1e-12)
            assert np.array_equal(out[4:], np.zeros(4))

    def test_unit_norm(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            m = int(rng.integers(1, 20))
            dim = 1 << int(np.ceil(np.log2(max(m, 2))))
            out = normalize_patch(rng.normal(size=m) * 10, float(rng.uniform(0.1, 3)), dim)
            assert abs(np.sum(out**2) - 1.0) < 1e-9

    def test_low_temperature_sharpens(self):
        out = normalize_patch(np.array([10.0, 0.0]), 0.1, 2)
        assert out[0] == pytest.approx(1.0, abs=1e-12)
        assert out[1] == pytest.approx(0.0, abs=1e-12)

    def test_temperature_must_be_positive(self):
        with pytest.raises(ValueError):
            normalize_patch(np.ones(2), 0.0, 2)


class TestQuanvConfig:
    def test_derived_qubits_and_filters(self):
        cfg = QuanvConfig(in_channels=19, out_channels=32, kernel=8, stride=8)
        assert cfg.n_qubits == 8
        assert cfg.n_filters == 4
        cfg = QuanvConfig(in_channels=8, out_channels=2, kernel=8, stride=8)
        assert cfg.n_qubits == 6
        assert cfg.n_filters == 1
        cfg = QuanvConfig(in_channels=128, out_channels=8, kernel=8, stride=8)
        assert cfg.n_qubits == 10
        assert cfg.n_filters == 1

    def test_minimum_one_qubit(self):
        assert QuanvConfig(in_channels=1, out_channels=1, kernel=1).n_qubits == 1


class TestQuanvForward:
    def test_output_shape_law(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            cfg = QuanvConfig(
                in_channels=int(rng.integers(1, 5)),
                out_channels=int(rng.integers(1, 9)),
                kernel=int(rng.integers(1, 4)),
                stride=int(rng.integers(1, 3)),
                padding=int(rng.integers(0, 2)),
                dilation=int(rng.integers(1, 3)),
                temperature=float(rng.uniform(0.3, 2.0)),
            )
            length = int(rng.integers(cfg.dilation * (cfg.kernel - 1) + 1, 16))
            layer = Quanv1D(cfg, rng)
            out = layer.forward(rng.normal(size=(cfg.in_channels, length)))
            assert out.shape == (cfg.out_channels, cfg.output_length(length))
            assert np.all(np.abs(out) <= 1.0 + 1e-12)

    def test_composition_identity_with_zero_parameters(self):
        rng = np.random.default_rng(3)
        cfg = QuanvConfig(in_channels=2, out_channels=4, kernel=3, stride=2,
                          padding=1, temperature=1.3)
        layer = zeroed(Quanv1D(cfg, rng))
        x = rng.normal(size=(2, 9))
        out = layer.forward(x)
        patches = extract_patches(x, cfg)
        for t in range(patches.shape[0]):
            amps = normalize_patch(patches[t], cfg.temperature, cfg.state_dim)
            expect = z_expectations(amplitude_embed(amps, cfg.n_qubits))
            stacked = np.tile(expect, cfg.n_filters)[: cfg.out_channels]
            assert np.array_equal(out[:, t], stacked)

    def test_truncation_adds_channel_without_change(self):
        rng = np.random.default_rng(4)
        base_cfg = QuanvConfig(in_channels=2, out_channels=2, kernel=4, stride=1,
                               temperature=0.8)
        wide_cfg = QuanvConfig(in_channels=2, out_channels=3, kernel=4, stride=1,
                               temperature=0.8)
        assert base_cfg.n_filters == wide_cfg.n_filters == 1
        base = Quanv1D(base_cfg, np.random.default_rng(10))
        wide = Quanv1D(wide_cfg, np.random.default_rng(11))
        wide.theta.data = base.theta.data.copy()
        wide.lam.data = base.lam.data.copy()
        wide.phi = base.phi
        x = rng.normal(size=(2, 7))
        narrow_out = base.forward(x)
        wide_out = wide.forward(x)
        assert wide_out.shape[0] == narrow_out.shape[0] + 1
        assert np.array_equal(wide_out[:2], narrow_out)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        cfg = QuanvConfig(in_channels=3, out_channels=5, kernel=2, stride=2, temperature=0.7)
        layer = Quanv1D(cfg, rng)
        x = rng.normal(size=(3, 12))
        assert np.array_equal(layer.forward(x), layer.forward(x))

    def test_rejects_non_finite(self):
        cfg = QuanvConfig(in_channels=1, out_channels=1, kernel=1)
        layer = Quanv1D(cfg, np.random.default_rng(0))
        with pytest.raises(ValueError):
            layer.forward(np.array([[np.nan, 1.0]]))


class TestQuanvBackward:
    def test_zero_upstream_gives_zero_gradients(self):
        rng = np.random.default_rng(6)
        cfg = QuanvConfig(in_channels=2, out_channels=3, kernel=2, stride=1, padding=1)
        layer = Quanv1D(cfg, rng)
        x = rng.normal(size=(2, 6))
        layer.forward(x, keep_context=True)
        theta_g, lam_g, x_g = layer.backward(np.zeros((3, cfg.output_length(6))))
        assert not theta_g.any() and not lam_g.any() and not x_g.any()

    def test_backward_without_context_is_state_error(self):
        cfg = QuanvConfig(in_channels=1, out_channels=1, kernel=1)
        layer = Quanv1D(cfg, np.random.default_rng(0))
        with pytest.raises(RuntimeError):
            layer.backward(np.zeros((1, 4)))

    def test_matches_finite_differences_on_micro_layer(self):
        rng = np.random.default_rng(7)
        cfg = QuanvConfig(in_channels=2, out_channels=3, kernel=2, stride=1,
                          padding=1, temperature=0.8, depth=2)
        layer = Quanv1D(cfg, rng)
        x = rng.normal(size=(2, 6))
        upstream = rng.normal(size=(3, cfg.output_length(6)))
        layer.forward(x, keep_context=True)
        theta_g, lam_g, x_g = layer.backward(upstream)

        def value():
            return float((upstream * layer.forward(x)).sum())

        eps = 1e-5
        for param, grads in ((layer.theta, theta_g), (layer.lam, lam_g)):
            live = param.data.ravel()
            for i in range(live.size):
                orig = live[i]
                live[i] = orig + eps
                plus = value()
                live[i] = orig - eps
                minus = value()
                live[i] = orig
                fd = (plus - minus) / (2 * eps)
                got = grads.ravel()[i]
                assert abs(fd - got) <= 1e-4 * max(1.0, abs(fd), abs(got))
        live = x.ravel()
        for i in range(live.size):
            orig = live[i]
            live[i] = orig + eps
            plus = value()
            live[i] = orig - eps
            minus = value()
            live[i] = orig
            fd = (plus - minus) / (2 * eps)
            assert abs(fd - x_g.ravel()[i]) <= 1e-4 * max(1.0, abs(fd))

    def test_input_gradient_shape_excludes_padding(self):
        rng = np.random.default_rng(8)
        cfg = QuanvConfig(in_channels=1, out_channels=2, kernel=3, stride=1, padding=2)
        layer = Quanv1D(cfg, rng)
        x = rng.normal(size=(1, 4))
        layer.forward(x, keep_context=True)
        _, _, x_g = layer.backward(rng.normal(size=(2, cfg.output_length(4))))
        assert x_g.shape == x.shape
