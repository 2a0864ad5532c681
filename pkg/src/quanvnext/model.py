"""Cross-residual blocks and the full quanvolutional classifier.

The network is Windowed Embedding (a strided quanvolution), four
cross-residual blocks that preserve shape, a Windowed Projection down to two
class channels, and global average pooling to produce the logits.

A block's fixed wiring, with ``C`` channels and all toggles on::

    s   = channel_shuffle(x, groups=4)
    q   = mish(layer_norm(quanv(s)))        # quanv emits C/2 channels
    a   = concat(q, s[:C/2])                # dense feature reuse
    a   = channel_shuffle(a, groups=8)
    out = a + x                             # residual skip

Toggles: ``use_shuffle=False`` turns both shuffles into the identity,
``use_aggregation=False`` swaps the concat for a full-width quanvolution
(C output channels), ``use_skip=False`` drops the final addition.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .quanv import Quanv1D, QuanvConfig, output_length

__all__ = [
    "ConfigError",
    "BlockSpec",
    "ModelConfig",
    "CrossResidualBlock",
    "QuanvNeXt",
    "build_model",
    "PRESETS",
    "count_trainable_parameters",
]

SHUFFLE_GROUPS_FIRST = 4
SHUFFLE_GROUPS_SECOND = 8


class ConfigError(ValueError):
    """A model configuration violates a structural invariant."""


@dataclass(frozen=True)
class BlockSpec:
    """Kernel geometry and temperature of one cross-residual block."""

    kernel: int
    padding: int
    temperature: float


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int
    in_length: int
    width: int
    blocks: tuple[BlockSpec, ...]
    embed_kernel: int = 8
    embed_stride: int = 8
    embed_temperature: float = 1.0
    out_channels: int = 2
    proj_kernel: int = 8
    proj_stride: int = 8
    proj_temperature: float = 1.0
    depth: int = 1
    use_skip: bool = True
    use_aggregation: bool = True
    use_shuffle: bool = True

    def __post_init__(self) -> None:
        if self.in_channels < 1 or self.in_length < 1 or self.width < 1:
            raise ConfigError("in_channels, in_length and width must be positive")
        if self.depth < 1:
            raise ConfigError("circuit depth must be positive")
        if self.use_shuffle:
            for groups in (SHUFFLE_GROUPS_FIRST, SHUFFLE_GROUPS_SECOND):
                if self.width % groups != 0:
                    raise ConfigError(
                        f"width {self.width} not divisible by shuffle group count {groups}"
                    )
        if self.use_aggregation and self.width % 2 != 0:
            raise ConfigError(f"width {self.width} must be even for feature aggregation")
        length = self.embedded_length
        for i, blk in enumerate(self.blocks):
            if blk.temperature <= 0:
                raise ConfigError(f"block {i}: temperature must be positive")
            if output_length(length, blk.kernel, 1, blk.padding, 1) != length:
                raise ConfigError(
                    f"block {i}: kernel {blk.kernel} with padding {blk.padding} "
                    "does not preserve sequence length (need 2*padding == kernel-1)"
                )
        if self.proj_kernel > length:
            raise ConfigError(
                f"projection kernel {self.proj_kernel} exceeds embedded length {length}"
            )

    @property
    def embedded_length(self) -> int:
        return output_length(self.in_length, self.embed_kernel, self.embed_stride, 0, 1)

    @property
    def projected_length(self) -> int:
        return output_length(self.embedded_length, self.proj_kernel, self.proj_stride, 0, 1)

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "in_length": self.in_length,
            "width": self.width,
            "blocks": [[b.kernel, b.padding, b.temperature] for b in self.blocks],
            "embed_kernel": self.embed_kernel,
            "embed_stride": self.embed_stride,
            "embed_temperature": self.embed_temperature,
            "out_channels": self.out_channels,
            "proj_kernel": self.proj_kernel,
            "proj_stride": self.proj_stride,
            "proj_temperature": self.proj_temperature,
            "depth": self.depth,
            "use_skip": self.use_skip,
            "use_aggregation": self.use_aggregation,
            "use_shuffle": self.use_shuffle,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        raw = dict(raw)
        raw["blocks"] = tuple(BlockSpec(int(k), int(p), float(t)) for k, p, t in raw["blocks"])
        return cls(**raw)


PRESETS: dict[str, ModelConfig] = {
    # 19-channel recordings at 256 Hz; 8 s windows hold 2048 samples.
    "dataset-1": ModelConfig(
        in_channels=19,
        in_length=2048,
        width=32,
        blocks=(
            BlockSpec(7, 3, 1.5),
            BlockSpec(17, 8, 1.2),
            BlockSpec(11, 5, 0.8),
            BlockSpec(7, 3, 0.5),
        ),
    ),
    # 128-channel recordings at 250 Hz; 8 s windows hold 2000 samples.
    "dataset-2": ModelConfig(
        in_channels=128,
        in_length=2000,
        width=8,
        blocks=(
            BlockSpec(7, 3, 1.5),
            BlockSpec(15, 7, 1.2),
            BlockSpec(9, 4, 0.8),
            BlockSpec(7, 3, 0.5),
        ),
    ),
}


class CrossResidualBlock:
    """Shape-preserving block: shuffle, quanvolve, aggregate, shuffle, add."""

    def __init__(self, width: int, spec: BlockSpec, depth: int,
                 use_skip: bool, use_aggregation: bool, use_shuffle: bool,
                 rng: np.random.Generator, name: str):
        self.width = width
        self.use_skip = use_skip
        self.use_aggregation = use_aggregation
        self.use_shuffle = use_shuffle
        quanv_out = width // 2 if use_aggregation else width
        self.quanv = Quanv1D(
            QuanvConfig(
                in_channels=width,
                out_channels=quanv_out,
                kernel=spec.kernel,
                stride=1,
                padding=spec.padding,
                dilation=1,
                temperature=spec.temperature,
                depth=depth,
            ),
            rng,
            name=f"{name}.quanv",
        )
        self.gamma = Tensor(np.ones(quanv_out), trainable=True, name=f"{name}.ln.gamma")
        self.beta = Tensor(np.zeros(quanv_out), trainable=True, name=f"{name}.ln.beta")
        self.name = name

    def parameters(self) -> list[Tensor]:
        return self.quanv.parameters() + [self.gamma, self.beta]

    def forward(self, x: Tensor, tape: Tape | None = None) -> Tensor:
        if x.data.shape[-2] != self.width:
            raise ValueError(f"expected {self.width} channels, got {x.data.shape[-2]}")
        s = ad.channel_shuffle(x, SHUFFLE_GROUPS_FIRST, tape) if self.use_shuffle else x
        q = self.quanv(s, tape)
        q = ad.mish(ad.layer_norm(q, self.gamma, self.beta, tape), tape)
        if self.use_aggregation:
            kept = ad.narrow(s, 0, self.width // 2, tape)
            a = ad.concat(q, kept, tape)
        else:
            a = q
        if self.use_shuffle:
            a = ad.channel_shuffle(a, SHUFFLE_GROUPS_SECOND, tape)
        return ad.add(a, x, tape) if self.use_skip else a


class QuanvNeXt:
    """The assembled model: embedding, blocks, projection, pooled logits."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        self.embedding = Quanv1D(
            QuanvConfig(
                in_channels=config.in_channels,
                out_channels=config.width,
                kernel=config.embed_kernel,
                stride=config.embed_stride,
                temperature=config.embed_temperature,
                depth=config.depth,
            ),
            rng,
            name="embedding",
        )
        self.blocks = [
            CrossResidualBlock(
                config.width, spec, config.depth,
                config.use_skip, config.use_aggregation, config.use_shuffle,
                rng, name=f"block{i + 1}",
            )
            for i, spec in enumerate(config.blocks)
        ]
        self.projection = Quanv1D(
            QuanvConfig(
                in_channels=config.width,
                out_channels=config.out_channels,
                kernel=config.proj_kernel,
                stride=config.proj_stride,
                temperature=config.proj_temperature,
                depth=config.depth,
            ),
            rng,
            name="projection",
        )

    # -- parameter access ----------------------------------------------------

    def parameters(self) -> list[Tensor]:
        params = self.embedding.parameters()
        for block in self.blocks:
            params += block.parameters()
        params += self.projection.parameters()
        return params

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(p.name, p) for p in self.parameters()]

    def frozen_phases(self) -> list[tuple[str, np.ndarray]]:
        layers = [self.embedding] + [b.quanv for b in self.blocks] + [self.projection]
        return [(f"{layer.name}.phi", layer.phi) for layer in layers]

    # -- evaluation ------------------------------------------------------------

    def _check_input(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        expected = (self.config.in_channels, self.config.in_length)
        if x.ndim != 3 or x.shape[1:] != expected:
            raise ValueError(f"expected input shaped {expected} (optionally batched), got {x.shape}")
        return x, single

    def forward(self, x, tape: Tape | None = None) -> Tensor:
        """(N, 2) logits for an (N, C, L) batch (Tensor or array)."""
        if isinstance(x, Tensor):
            self._check_input(x.data)
            if x.data.ndim != 3:
                raise ValueError("Tensor inputs must be batched (N, C, L)")
            x_t = x
        else:
            x_t = Tensor(self._check_input(x)[0])
        h = self.embedding(x_t, tape)
        for block in self.blocks:
            h = block.forward(h, tape)
        h = self.projection(h, tape)
        return ad.global_avg_pool(h, tape)

    def predict_logits(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        """Logits without recording: (C, L) -> (2,) or (N, C, L) -> (N, 2)."""
        x, single = self._check_input(x)
        chunks = [
            self.forward(x[i: i + batch_size]).data
            for i in range(0, x.shape[0], batch_size)
        ]
        out = np.concatenate(chunks, axis=0)
        return out[0] if single else out

    def predict_proba(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        from .functional import softmax

        return softmax(self.predict_logits(x, batch_size), axis=-1)

    def stage_names(self) -> list[str]:
        return ["embedding"] + [f"block_{i + 1}" for i in range(len(self.blocks))] + ["projection"]

    def activations(self, x: np.ndarray, stage: str) -> np.ndarray:
        """Intermediate feature maps at ``stage`` for every sample."""
        if stage not in self.stage_names():
            raise ValueError(f"unknown stage {stage!r}; one of {self.stage_names()}")
        x, _ = self._check_input(x)
        h = self.embedding(Tensor(x))
        if stage == "embedding":
            return h.data
        for i, block in enumerate(self.blocks):
            h = block.forward(h)
            if stage == f"block_{i + 1}":
                return h.data
        return self.projection(h).data


def build_model(preset: str | ModelConfig, seed: int = 0, **overrides) -> QuanvNeXt:
    """Instantiate a model from a preset name or an explicit config.

    Keyword overrides are applied on top of the chosen preset, e.g.
    ``build_model("dataset-2", use_shuffle=False)``.
    """
    if isinstance(preset, ModelConfig):
        config = preset
    else:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        config = PRESETS[preset]
    if overrides:
        config = replace(config, **overrides)
    return QuanvNeXt(config, seed=seed)


def count_trainable_parameters(model: QuanvNeXt) -> int:
    """Number of trained scalars: 2 * n_qubits * depth per filter, plus the
    per-channel layer-norm affine pairs.  Frozen phases are excluded."""
    return int(sum(p.data.size for p in model.parameters()))
