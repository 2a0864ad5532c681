"""Explainability exports: stage activations, latent spectrograms, embeddings.

Everything here writes plain CSV (floats with 9 significant digits) so
figures can be produced by external tooling; the spectrogram axes describe
latent feature dynamics, not raw signal hertz.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ActivationExport",
    "EmbeddingExport",
    "stft_spectrogram",
    "export_activations",
    "pca_2d",
    "export_embeddings",
]


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def stft_spectrogram(signal: np.ndarray, window: int = 64, hop: int = 8) -> np.ndarray:
    """Hann-windowed short-time Fourier magnitudes, (frames, window//2 + 1)."""
    signal = np.asarray(signal, dtype=np.float64).ravel()
    if window < 2 or hop < 1:
        raise ValueError("window must be >= 2 and hop >= 1")
    if signal.size < window:
        raise ValueError(f"signal of {signal.size} samples is shorter than the {window} window")
    hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(window) / window)
    starts = np.arange(0, signal.size - window + 1, hop)
    frames = np.stack([signal[s: s + window] * hann for s in starts])
    return np.abs(np.fft.rfft(frames, axis=1))


@dataclass
class ActivationExport:
    stage: str
    activations: np.ndarray            # (n_samples, channels, length)
    channel: int                       # highest-variance channel across samples
    class_means: dict[int, np.ndarray]
    class_stds: dict[int, np.ndarray]


def export_activations(model, X: np.ndarray, y: np.ndarray, stage: str,
                       out_path: Path | None = None) -> ActivationExport:
    """Stage activations plus per-class mean/std curves of one representative
    channel (picked by highest variance across samples)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp).ravel()
    acts = model.activations(X, stage)
    per_channel_var = acts.var(axis=0).mean(axis=-1)
    channel = int(per_channel_var.argmax())
    selected = acts[:, channel, :]
    class_means, class_stds = {}, {}
    for label in sorted(set(int(v) for v in y)):
        group = selected[y == label]
        class_means[label] = group.mean(axis=0)
        class_stds[label] = group.std(axis=0)
    export = ActivationExport(stage, acts, channel, class_means, class_stds)
    if out_path is not None:
        out_path = Path(out_path)
        labels = sorted(class_means)
        with out_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["position"]
            for label in labels:
                header += [f"mean_class{label}", f"std_class{label}"]
            writer.writerow(header)
            for pos in range(selected.shape[1]):
                row = [pos]
                for label in labels:
                    row += [_fmt(class_means[label][pos]), _fmt(class_stds[label][pos])]
                writer.writerow(row)
    return export


def write_spectrogram_csv(magnitudes: np.ndarray, path: Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame"] + [f"bin_{b}" for b in range(magnitudes.shape[1])])
        for f, row in enumerate(magnitudes):
            writer.writerow([f] + [_fmt(v) for v in row])
    return path


def pca_2d(features: np.ndarray) -> np.ndarray:
    """First two principal-component coordinates with a deterministic sign
    convention (largest loading of each component is positive)."""
    features = np.asarray(features, dtype=np.float64)
    centered = features - features.mean(axis=0, keepdims=True)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    coords = np.zeros((features.shape[0], 2))
    for comp in range(min(2, s.size)):
        flip = np.sign(vt[comp, np.argmax(np.abs(vt[comp]))]) or 1.0
        coords[:, comp] = u[:, comp] * s[comp] * flip
    return coords


@dataclass
class EmbeddingExport:
    features: np.ndarray               # (n_samples, flattened projection features)
    coordinates: np.ndarray            # (n_samples, 2) PCA projection


def export_embeddings(model, X: np.ndarray, y: np.ndarray, subjects,
                      out_path: Path | None = None) -> EmbeddingExport:
    """Flattened projection-stage features per sample plus 2-D PCA
    coordinates; the CSV is ready for an external manifold projector."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp).ravel()
    if X.shape[0] == 0:
        raise ValueError("dataset is empty")
    acts = model.activations(X, "projection")
    features = acts.reshape(acts.shape[0], -1)
    coords = pca_2d(features)
    export = EmbeddingExport(features, coords)
    if out_path is not None:
        out_path = Path(out_path)
        with out_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["subject_id", "label"]
            header += [f"f{j:03d}" for j in range(features.shape[1])]
            header += ["pc1", "pc2"]
            writer.writerow(header)
            for i in range(features.shape[0]):
                row = [subjects[i], int(y[i])]
                row += [_fmt(v) for v in features[i]]
                row += [_fmt(coords[i, 0]), _fmt(coords[i, 1])]
                writer.writerow(row)
    return export
