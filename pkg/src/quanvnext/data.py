"""Recording container, preprocessing pipeline and the synthetic generator.

On-disk format (written by ``write_manifest`` / read by ``load_manifest``):

* ``manifest.json`` lists per subject ``{subject_id, label, sampling_rate_hz,
  channels, samples, data_file}``.
* Each ``data_file`` is raw little-endian float32, channel-major (all of
  channel 0's samples first), no header.

The pipeline is subject-wise: recordings are split into train/test by
subject before windowing, the train side is undersampled to class balance,
and z-normalization statistics are computed from train windows only.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "SubjectRecording",
    "NormStats",
    "WindowedDataset",
    "write_subject",
    "load_subject",
    "write_manifest",
    "load_manifest",
    "window_signal",
    "window_dataset",
    "subject_split",
    "undersample",
    "zscore_fit",
    "zscore_apply",
    "synth_generate",
    "prepare_datasets",
    "PipelineResult",
]

MANIFEST_FORMAT = "quanvnext-eeg-v1"
STD_FLOOR = 1e-8


class DataError(ValueError):
    """Malformed manifest, data file, or pipeline configuration."""


@dataclass
class SubjectRecording:
    subject_id: str
    label: int
    sampling_rate_hz: int
    channels: int
    signal: np.ndarray

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise DataError(f"{self.subject_id}: label must be 0 (HC) or 1 (MDD), got {self.label}")
        if self.sampling_rate_hz < 1:
            raise DataError(f"{self.subject_id}: sampling_rate_hz must be positive")
        self.signal = np.asarray(self.signal, dtype=np.float64)
        if self.signal.ndim != 2 or self.signal.shape[0] != self.channels:
            raise DataError(
                f"{self.subject_id}: signal shape {self.signal.shape} does not match "
                f"channels={self.channels}"
            )
        if not np.all(np.isfinite(self.signal)):
            raise DataError(f"{self.subject_id}: signal contains NaN or Inf")

    @property
    def samples(self) -> int:
        return self.signal.shape[1]


@dataclass
class NormStats:
    """Per-channel mean and standard deviation, train-derived."""

    mean: np.ndarray
    std: np.ndarray


@dataclass
class WindowedDataset:
    """Fixed-length labeled windows with subject provenance."""

    X: np.ndarray                      # (n_windows, channels, window_len)
    y: np.ndarray                      # (n_windows,)
    subjects: list[str]
    stats: NormStats | None = None

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.intp)
        if self.X.ndim != 3:
            raise DataError(f"windows must be (n, channels, length), got {self.X.shape}")
        if len(self.y) != self.X.shape[0] or len(self.subjects) != self.X.shape[0]:
            raise DataError("window, label and subject counts disagree")

    def __len__(self) -> int:
        return self.X.shape[0]


# ---------------------------------------------------------------------------
# Container I/O
# ---------------------------------------------------------------------------

def write_subject(recording: SubjectRecording, data_path: Path) -> None:
    """Raw little-endian float32, channel-major, no header."""
    data_path = Path(data_path)
    payload = np.ascontiguousarray(recording.signal, dtype="<f4")
    data_path.write_bytes(payload.tobytes())


def load_subject(entry: dict, base_dir: Path) -> SubjectRecording:
    """Parse one manifest entry, validating every declared field."""
    for key in ("subject_id", "label", "sampling_rate_hz", "channels", "samples", "data_file"):
        if key not in entry:
            raise DataError(f"manifest entry missing field {key!r}: {entry}")
    subject_id = str(entry["subject_id"])
    path = Path(base_dir) / entry["data_file"]
    if not path.exists():
        raise DataError(f"{subject_id}: data_file {path} does not exist")
    raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    channels = int(entry["channels"])
    samples = int(entry["samples"])
    if channels < 1 or samples < 1:
        raise DataError(f"{subject_id}: channels and samples must be positive")
    if raw.size != channels * samples:
        raise DataError(
            f"{subject_id}: data_file holds {raw.size} values but channels={channels} "
            f"x samples={samples} = {channels * samples} were declared"
        )
    signal = raw.astype(np.float64).reshape(channels, samples)
    if not np.all(np.isfinite(signal)):
        raise DataError(f"{subject_id}: data_file payload contains NaN or Inf")
    return SubjectRecording(
        subject_id=subject_id,
        label=int(entry["label"]),
        sampling_rate_hz=int(entry["sampling_rate_hz"]),
        channels=channels,
        signal=signal,
    )


def write_manifest(recordings: list[SubjectRecording], out_dir: Path,
                   manifest_name: str = "manifest.json") -> Path:
    """Write every recording plus the manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in recordings:
        data_file = f"{rec.subject_id}.f32"
        write_subject(rec, out_dir / data_file)
        entries.append({
            "subject_id": rec.subject_id,
            "label": rec.label,
            "sampling_rate_hz": rec.sampling_rate_hz,
            "channels": rec.channels,
            "samples": rec.samples,
            "data_file": data_file,
        })
    manifest = out_dir / manifest_name
    manifest.write_text(json.dumps({"format": MANIFEST_FORMAT, "subjects": entries}, indent=2))
    return manifest


def load_manifest(path: Path) -> list[SubjectRecording]:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if raw.get("format") != MANIFEST_FORMAT:
        raise DataError(f"unsupported manifest format {raw.get('format')!r} in {path}")
    return [load_subject(entry, path.parent) for entry in raw.get("subjects", [])]


# ---------------------------------------------------------------------------
# Windowing, splitting, balancing, normalization
# ---------------------------------------------------------------------------

def window_signal(recording: SubjectRecording, window_s: float = 8.0,
                  overlap: float = 0.9) -> np.ndarray:
    """Overlapping windows fully inside the signal, shape (n, C, W).

    W = window_s * fs; hop = round(W * (1 - overlap)).  A signal shorter
    than one window yields zero windows (with a warning), not an error.
    """
    if not 0.0 <= overlap < 1.0:
        raise DataError(f"overlap must be in [0, 1), got {overlap}")
    width = int(round(window_s * recording.sampling_rate_hz))
    if width < 1:
        raise DataError(f"window of {window_s}s is empty at {recording.sampling_rate_hz} Hz")
    hop = max(1, int(round(width * (1.0 - overlap))))
    total = recording.samples
    if total < width:
        warnings.warn(
            f"{recording.subject_id}: signal of {total} samples is shorter than one "
            f"{width}-sample window; no windows produced",
            stacklevel=2,
        )
        return np.empty((0, recording.channels, width))
    starts = np.arange(0, total - width + 1, hop)
    return np.stack([recording.signal[:, s: s + width] for s in starts])


def window_dataset(recordings: list[SubjectRecording], window_s: float = 8.0,
                   overlap: float = 0.9) -> WindowedDataset:
    xs, ys, subjects = [], [], []
    for rec in sorted(recordings, key=lambda r: r.subject_id):
        wins = window_signal(rec, window_s, overlap)
        xs.append(wins)
        ys.extend([rec.label] * len(wins))
        subjects.extend([rec.subject_id] * len(wins))
    if not xs:
        raise DataError("no recordings to window")
    return WindowedDataset(np.concatenate(xs, axis=0), np.array(ys, dtype=np.intp), subjects)


def subject_split(subjects, train_fraction: float = 0.7, seed: int = 0):
    """Stratified subject-wise split into (train_ids, test_ids).

    ``subjects`` maps subject_id -> label (dict or (id, label) pairs).  Per
    class the train count follows largest-remainder apportionment of
    round(train_fraction * n_total), clamped so both sides keep at least one
    subject of every class.
    """
    pairs = sorted(dict(subjects).items())
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must be in (0, 1), got {train_fraction}")
    by_class: dict[int, list[str]] = {}
    for sid, label in pairs:
        by_class.setdefault(int(label), []).append(sid)
    if len(by_class) < 2:
        raise DataError("need at least one subject of each class to split")
    for label, ids in by_class.items():
        if len(ids) < 2:
            raise DataError(f"class {label} has a single subject; cannot stratify the split")
    rng = np.random.default_rng(seed)
    total_train = int(round(train_fraction * len(pairs)))
    labels = sorted(by_class)
    quota = {c: train_fraction * len(by_class[c]) for c in labels}
    take = {c: int(np.floor(quota[c])) for c in labels}
    # Hand out the remaining slots by descending fractional remainder.
    remainder_order = sorted(labels, key=lambda c: (-(quota[c] - take[c]), c))
    i = 0
    while sum(take.values()) < total_train and i < 10 * len(labels):
        c = remainder_order[i % len(labels)]
        if take[c] < len(by_class[c]) - 1:
            take[c] += 1
        i += 1
    train_ids, test_ids = [], []
    for c in labels:
        ids = list(by_class[c])
        rng.shuffle(ids)
        count = min(max(take[c], 1), len(ids) - 1)
        train_ids.extend(ids[:count])
        test_ids.extend(ids[count:])
    return sorted(train_ids), sorted(test_ids)


def undersample(dataset: WindowedDataset, seed: int = 0) -> WindowedDataset:
    """Randomly drop majority-class windows down to the minority count.

    The retained windows keep their original order.
    """
    counts = {label: int(np.sum(dataset.y == label)) for label in (0, 1)}
    if min(counts.values()) == 0:
        raise DataError(f"both classes must be present to undersample, got counts {counts}")
    if counts[0] == counts[1]:
        return dataset
    minority = min(counts, key=counts.get)
    majority = 1 - minority
    rng = np.random.default_rng(seed)
    major_idx = np.flatnonzero(dataset.y == majority)
    kept_major = rng.choice(major_idx, size=counts[minority], replace=False)
    keep = np.zeros(len(dataset), dtype=bool)
    keep[dataset.y == minority] = True
    keep[kept_major] = True
    idx = np.flatnonzero(keep)
    return WindowedDataset(
        dataset.X[idx], dataset.y[idx],
        [dataset.subjects[i] for i in idx],
        stats=dataset.stats,
    )


def zscore_fit(dataset: WindowedDataset) -> NormStats:
    """Per-channel mean/std pooled over all train windows and time points."""
    if len(dataset) == 0:
        raise DataError("cannot fit normalization statistics on an empty dataset")
    mean = dataset.X.mean(axis=(0, 2))
    std = dataset.X.std(axis=(0, 2))
    return NormStats(mean=mean, std=np.maximum(std, STD_FLOOR))


def zscore_apply(dataset: WindowedDataset, stats: NormStats) -> WindowedDataset:
    if stats.mean.shape[0] != dataset.X.shape[1]:
        raise DataError(
            f"statistics cover {stats.mean.shape[0]} channels but windows have {dataset.X.shape[1]}"
        )
    X = (dataset.X - stats.mean[None, :, None]) / stats.std[None, :, None]
    return WindowedDataset(X, dataset.y, list(dataset.subjects), stats=stats)


# ---------------------------------------------------------------------------
# Synthetic EEG-like recordings
# ---------------------------------------------------------------------------

def _pink_noise(rng: np.random.Generator, samples: int, fs: int) -> np.ndarray:
    """1/sqrt(f)-shaped noise, unit standard deviation."""
    white = rng.normal(size=samples)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(samples, d=1.0 / fs)
    spectrum /= np.sqrt(np.maximum(freqs, 1.0))
    shaped = np.fft.irfft(spectrum, n=samples)
    return shaped / max(shaped.std(), 1e-12)


def synth_generate(
    n_per_class: int,
    channels: int = 4,
    fs: int = 250,
    duration_s: float = 40.0,
    seed: int = 0,
    *,
    noise_scale: float = 1.0,
    class0_amp: float = 1.0,
    class1_amp: float = 1.0,
    residual_fraction: float = 0.3,
    amp_jitter: float = 0.2,
) -> list[SubjectRecording]:
    """Seeded two-class corpus: class 0 carries a strong 10 Hz component,
    class 1 a strong 4 Hz component plus an attenuated 10 Hz residue, both
    over a shared pink-ish noise floor.  Per-subject amplitudes vary within
    +-amp_jitter; values are float32-quantized so container round trips are
    lossless.
    """
    if min(n_per_class, channels, fs) < 1 or duration_s <= 0:
        raise DataError("all synthetic generator counts must be positive")
    rng = np.random.default_rng(seed)
    samples = int(round(fs * duration_s))
    t = np.arange(samples) / fs
    recordings = []
    for label, prefix in ((0, "hc"), (1, "mdd")):
        for j in range(n_per_class):
            gain = rng.uniform(1.0 - amp_jitter, 1.0 + amp_jitter)
            rows = []
            for _ in range(channels):
                noise = noise_scale * _pink_noise(rng, samples, fs)
                if label == 0:
                    tone = class0_amp * gain * np.sin(2 * np.pi * 10.0 * t + rng.uniform(0, 2 * np.pi))
                else:
                    tone = class1_amp * gain * np.sin(2 * np.pi * 4.0 * t + rng.uniform(0, 2 * np.pi))
                    tone += residual_fraction * class0_amp * gain * np.sin(
                        2 * np.pi * 10.0 * t + rng.uniform(0, 2 * np.pi)
                    )
                rows.append(noise + tone)
            signal = np.asarray(rows).astype(np.float32).astype(np.float64)
            recordings.append(SubjectRecording(
                subject_id=f"{prefix}{j:02d}",
                label=label,
                sampling_rate_hz=fs,
                channels=channels,
                signal=signal,
            ))
    return recordings


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

@dataclass
class PipelineResult:
    train: WindowedDataset
    test: WindowedDataset
    train_subjects: list[str] = field(default_factory=list)
    test_subjects: list[str] = field(default_factory=list)
    stats: NormStats | None = None


def prepare_datasets(
    recordings: list[SubjectRecording],
    *,
    window_s: float = 8.0,
    overlap: float = 0.9,
    train_fraction: float = 0.7,
    seed: int = 0,
    balance_train: bool = True,
) -> PipelineResult:
    """Split by subject, window, undersample the train side, z-normalize.

    Statistics come from train windows only and are applied to both sides.
    """
    if not recordings:
        raise DataError("no recordings supplied")
    fs = {rec.sampling_rate_hz for rec in recordings}
    chans = {rec.channels for rec in recordings}
    if len(fs) > 1 or len(chans) > 1:
        raise DataError(f"recordings disagree on sampling rate {fs} or channel count {chans}")
    labels = {rec.subject_id: rec.label for rec in recordings}
    if len(labels) != len(recordings):
        raise DataError("duplicate subject ids in the recording list")
    seq = np.random.SeedSequence(seed)
    split_seed, balance_seed = (int(s.generate_state(1)[0]) for s in seq.spawn(2))
    train_ids, test_ids = subject_split(labels, train_fraction, seed=split_seed)
    by_id = {rec.subject_id: rec for rec in recordings}
    train = window_dataset([by_id[s] for s in train_ids], window_s, overlap)
    test = window_dataset([by_id[s] for s in test_ids], window_s, overlap)
    if balance_train:
        train = undersample(train, seed=balance_seed)
    stats = zscore_fit(train)
    return PipelineResult(
        train=zscore_apply(train, stats),
        test=zscore_apply(test, stats),
        train_subjects=train_ids,
        test_subjects=test_ids,
        stats=stats,
    )
