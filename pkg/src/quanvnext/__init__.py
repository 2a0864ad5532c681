"""Quanvolutional time-series classification toolkit.

Statevector-simulated quantum filters stand in for convolution kernels;
cross-residual blocks, exact reverse-mode gradients, a subject-wise data
pipeline, calibration/uncertainty metrics and explainability exports make
the model trainable and inspectable end to end on CPU.
"""

from .autodiff import Tape, Tensor, backward, cross_entropy_loss
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (
    DataError,
    NormStats,
    PipelineResult,
    SubjectRecording,
    WindowedDataset,
    load_manifest,
    load_subject,
    prepare_datasets,
    subject_split,
    synth_generate,
    undersample,
    window_dataset,
    window_signal,
    write_manifest,
    write_subject,
    zscore_apply,
    zscore_fit,
)
from .estimator import QuanvNeXtClassifier
from .explain import export_activations, export_embeddings, pca_2d, stft_spectrogram
from .functional import (
    channel_shuffle,
    cross_entropy,
    global_avg_pool,
    layer_norm,
    mish,
    softmax,
)
from .metrics import ConfusionCounts, accuracy, auc_roc, confusion_counts, ece, mcc
from .model import (
    PRESETS,
    BlockSpec,
    ConfigError,
    CrossResidualBlock,
    ModelConfig,
    QuanvNeXt,
    build_model,
    count_trainable_parameters,
)
from .qsim import (
    FilterCircuit,
    StateVector,
    amplitude_embed,
    apply_single_qubit_unitary,
    filter_gradients,
    run_filter,
    z_expectations,
)
from .quanv import Quanv1D, QuanvConfig, extract_patches, normalize_patch, output_length
from .training import NAdam, TrainResult, train
from .uncertainty import (
    UncertaintyRecord,
    perturb_predict,
    uncertainty_report,
    wilson_interval,
    write_uncertainty_csv,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Tape", "Tensor", "backward", "cross_entropy_loss",
    "Checkpoint", "load_checkpoint", "save_checkpoint",
    "DataError", "NormStats", "PipelineResult", "SubjectRecording", "WindowedDataset",
    "load_manifest", "load_subject", "prepare_datasets", "subject_split",
    "synth_generate", "undersample", "window_dataset", "window_signal",
    "write_manifest", "write_subject", "zscore_apply", "zscore_fit",
    "QuanvNeXtClassifier",
    "export_activations", "export_embeddings", "pca_2d", "stft_spectrogram",
    "channel_shuffle", "cross_entropy", "global_avg_pool", "layer_norm", "mish", "softmax",
    "ConfusionCounts", "accuracy", "auc_roc", "confusion_counts", "ece", "mcc",
    "PRESETS", "BlockSpec", "ConfigError", "CrossResidualBlock", "ModelConfig",
    "QuanvNeXt", "build_model", "count_trainable_parameters",
    "FilterCircuit", "StateVector", "amplitude_embed", "apply_single_qubit_unitary",
    "filter_gradients", "run_filter", "z_expectations",
    "Quanv1D", "QuanvConfig", "extract_patches", "normalize_patch", "output_length",
    "NAdam", "TrainResult", "train",
    "UncertaintyRecord", "perturb_predict", "uncertainty_report",
    "wilson_interval", "write_uncertainty_csv",
]
