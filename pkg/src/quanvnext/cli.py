"""Command-line interface.

Subcommands: synth-data, train, eval, uncertainty, explain, selfcheck.
Every data-consuming command reads either ``--manifest PATH`` or ``--synth``
(with the generator flags); the two sources are mutually exclusive.  An
optional JSON config file can pre-set any long flag (explicit flags win).
Each command writes a ``run.json`` manifest next to its outputs with the
resolved options, the seed, and SHA-256 hashes of every artifact; on failure
partially written outputs are removed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

__all__ = ["build_parser", "main"]

PRESET_LEARNING_RATES = {"dataset-1": 0.00015, "dataset-2": 0.0025}
DEFAULT_LEARNING_RATE = 0.0025


class CliError(Exception):
    """Invalid invocation; reported as a one-line diagnostic, exit code 2."""


def _add_data_source(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("data source (choose exactly one)")
    group.add_argument("--manifest", type=Path, default=None,
                       help="path to a manifest.json (or its directory)")
    group.add_argument("--synth", action="store_true",
                       help="generate a seeded synthetic corpus in memory instead of reading a manifest")
    group.add_argument("--subjects", type=int, default=6,
                       help="synthetic subjects per class (with --synth)")
    group.add_argument("--channels", type=int, default=4,
                       help="synthetic channel count (with --synth)")
    group.add_argument("--fs", type=int, default=250,
                       help="synthetic sampling rate in Hz (with --synth)")
    group.add_argument("--seconds", type=float, default=40.0,
                       help="synthetic recording duration in seconds (with --synth)")
    group.add_argument("--data-seed", type=int, default=None,
                       help="seed for the synthetic generator (defaults to --seed)")


def _add_window_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("windowing")
    group.add_argument("--window-seconds", type=float, default=8.0,
                       help="window length in seconds")
    group.add_argument("--overlap", type=float, default=0.9,
                       help="fractional overlap between consecutive windows")


def _add_model_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("model")
    group.add_argument("--preset", choices=["dataset-1", "dataset-2"], default=None,
                       help="architecture preset (width, kernels, temperatures)")
    group.add_argument("--width", type=int, default=None,
                       help="embedding width; overrides the preset")
    group.add_argument("--kernels", type=str, default=None,
                       help="comma-separated block kernel sizes, e.g. 7,15,9,7")
    group.add_argument("--temps", type=str, default=None,
                       help="comma-separated block temperatures, e.g. 1.5,1.2,0.8,0.5")
    group.add_argument("--depth", type=int, default=None,
                       help="unitary layers per circuit (default 1)")
    group.add_argument("--embed-kernel", type=int, default=None,
                       help="embedding kernel/stride (default 8)")
    group.add_argument("--proj-kernel", type=int, default=None,
                       help="projection kernel/stride (default 8)")
    group.add_argument("--no-skip", action="store_true",
                       help="ablation: drop the residual skip connection")
    group.add_argument("--no-aggregation", action="store_true",
                       help="ablation: replace dense feature reuse with a full-width quanvolution")
    group.add_argument("--no-shuffle", action="store_true",
                       help="ablation: disable both channel shuffles")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quanvnext",
        description="Quanvolutional time-series classification: data synthesis, "
                    "training, evaluation, uncertainty and explainability exports.",
    )
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file whose keys mirror long flags; explicit flags win")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap the number of BLAS worker threads")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="write a synthetic recording corpus to disk")
    p.add_argument("--subjects", type=int, default=6, help="subjects per class")
    p.add_argument("--channels", type=int, default=4, help="channels per recording")
    p.add_argument("--fs", type=int, default=250, help="sampling rate in Hz")
    p.add_argument("--seconds", type=float, default=40.0, help="recording duration in seconds")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--out", type=Path, required=True, help="output directory for manifest and data files")

    p = sub.add_parser("train", help="train a model and save per-epoch checkpoints")
    _add_data_source(p)
    _add_window_options(p)
    _add_model_options(p)
    p.add_argument("--epochs", type=int, default=300, help="training epochs")
    p.add_argument("--batch", type=int, default=64, help="mini-batch size")
    p.add_argument("--lr", type=float, default=None,
                   help="learning rate (default 0.00015 for dataset-1, 0.0025 otherwise)")
    p.add_argument("--seed", type=int, default=0, help="seed for split, init and batch order")
    p.add_argument("--train-fraction", type=float, default=0.7,
                   help="subject fraction assigned to training")
    p.add_argument("--val-fraction", type=float, default=0.25,
                   help="fraction of train subjects held out for checkpoint selection")
    p.add_argument("--select-on", choices=["val", "test"], default="val",
                   help="checkpoint-selection split; 'test' reproduces test-set selection")
    p.add_argument("--out", type=Path, required=True, help="run output directory")

    p = sub.add_parser("eval", help="evaluate a checkpoint on held-out subjects")
    p.add_argument("--ckpt", type=Path, required=True, help="checkpoint file")
    _add_data_source(p)
    p.add_argument("--seed", type=int, default=0, help="seed (synthetic source only)")
    p.add_argument("--out", type=Path, default=None,
                   help="directory for evaluation.csv (defaults next to the checkpoint)")

    p = sub.add_parser("uncertainty", help="Gaussian-perturbation uncertainty report")
    p.add_argument("--ckpt", type=Path, required=True, help="checkpoint file")
    _add_data_source(p)
    p.add_argument("--eps", type=str, default="0.1,0.05,0.01",
                   help="comma-separated perturbation magnitudes")
    p.add_argument("--n", type=int, default=50, help="perturbations per sample")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--out", type=Path, default=None,
                   help="directory for uncertainty.csv (defaults next to the checkpoint)")

    p = sub.add_parser("explain", help="export activations, spectrograms and embeddings")
    p.add_argument("--ckpt", type=Path, required=True, help="checkpoint file")
    _add_data_source(p)
    p.add_argument("--stage", type=str, default="projection",
                   help="stage to export: embedding, block_1..block_4 or projection")
    p.add_argument("--stft-window", type=int, default=64, help="spectrogram window length")
    p.add_argument("--stft-hop", type=int, default=8, help="spectrogram hop length")
    p.add_argument("--seed", type=int, default=0, help="seed (synthetic source only)")
    p.add_argument("--out", type=Path, default=None,
                   help="directory for the CSV exports (defaults next to the checkpoint)")

    p = sub.add_parser("selfcheck", help="run the built-in gradient and invariant suites")
    p.add_argument("--seed", type=int, default=0, help="seed for the randomized checks")
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse twice: config values become defaults, explicit flags win."""
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    try:
        overrides = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config file {args.config}: {exc}") from exc
    if not isinstance(overrides, dict):
        raise CliError(f"config file {args.config} must hold a JSON object")
    known = set(vars(args))
    unknown = [k for k in overrides if k.replace("-", "_") not in known]
    if unknown:
        raise CliError(f"config file sets unknown options: {', '.join(sorted(unknown))}")
    merged = dict(vars(args))
    explicit = _explicit_flags(argv)
    for key, value in overrides.items():
        attr = key.replace("-", "_")
        if attr not in explicit:
            merged[attr] = Path(value) if isinstance(merged.get(attr), Path) else value
    return argparse.Namespace(**merged)


def _explicit_flags(argv: list[str]) -> set[str]:
    names = set()
    for token in argv:
        if token.startswith("--"):
            names.add(token[2:].split("=")[0].replace("-", "_"))
    return names


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class _RunDir:
    """Tracks created artifacts so failures leave no partial outputs."""

    def __init__(self, out_dir: Path, command: str):
        self.out_dir = Path(out_dir)
        self.command = command
        self.created_dir = not self.out_dir.exists()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.before = set(self.out_dir.rglob("*"))

    def new_artifacts(self) -> list[Path]:
        return sorted(p for p in self.out_dir.rglob("*") if p.is_file() and p not in self.before)

    def cleanup(self) -> None:
        for path in self.new_artifacts():
            try:
                path.unlink()
            except OSError:
                pass
        if self.created_dir:
            try:
                self.out_dir.rmdir()
            except OSError:
                pass

    def write_run_manifest(self, options: dict) -> Path:
        artifacts = {
            str(p.relative_to(self.out_dir)): _sha256(p)
            for p in sorted(self.out_dir.rglob("*"))
            if p.is_file() and not p.name.startswith("run_")
        }
        payload = {"command": self.command, "options": options, "artifacts": artifacts}
        path = self.out_dir / f"run_{self.command.replace('-', '_')}.json"
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str))
        return path


def _serializable_options(args: argparse.Namespace) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}


# ---------------------------------------------------------------------------
# Data plumbing shared by train / eval / uncertainty / explain
# ---------------------------------------------------------------------------

def _load_recordings(args: argparse.Namespace):
    from .data import load_manifest, synth_generate

    if args.manifest is not None and args.synth:
        raise CliError("--manifest and --synth are mutually exclusive")
    if args.manifest is not None:
        return load_manifest(args.manifest)
    if args.synth:
        seed = args.data_seed if args.data_seed is not None else getattr(args, "seed", 0)
        return synth_generate(
            args.subjects, channels=args.channels, fs=args.fs,
            duration_s=args.seconds, seed=seed,
        )
    raise CliError("one data source is required: --manifest PATH or --synth")


def _windows_for_checkpoint(args: argparse.Namespace, ckpt):
    """Window all subjects the checkpoint did not train on, using the
    checkpoint's stored geometry and normalization statistics."""
    from .data import window_dataset, zscore_apply

    recordings = _load_recordings(args)
    meta = ckpt.meta
    train_ids = set(meta.get("train_subjects", []))
    held_out = [rec for rec in recordings if rec.subject_id not in train_ids]
    if not held_out:
        raise CliError("every supplied subject was in the checkpoint's training split")
    window_s = meta.get("window_seconds", 8.0)
    overlap = meta.get("overlap", 0.9)
    windows = window_dataset(held_out, window_s, overlap)
    if ckpt.stats is not None:
        windows = zscore_apply(windows, ckpt.stats)
    return windows


def _build_model_config(args: argparse.Namespace, in_channels: int, in_length: int):
    from dataclasses import replace

    from .model import PRESETS, BlockSpec, ModelConfig

    if args.preset is not None:
        base = PRESETS[args.preset]
        config = replace(base, in_channels=in_channels, in_length=in_length)
    else:
        config = ModelConfig(
            in_channels=in_channels,
            in_length=in_length,
            width=8,
            blocks=PRESETS["dataset-2"].blocks,
        )
    updates: dict = {}
    if args.width is not None:
        updates["width"] = args.width
    kernels = temps = None
    if args.kernels is not None:
        kernels = [int(v) for v in args.kernels.split(",")]
    if args.temps is not None:
        temps = [float(v) for v in args.temps.split(",")]
    if kernels is not None or temps is not None:
        kernels = kernels if kernels is not None else [b.kernel for b in config.blocks]
        temps = temps if temps is not None else [b.temperature for b in config.blocks]
        if len(kernels) != len(temps):
            raise CliError("--kernels and --temps must list the same number of blocks")
        updates["blocks"] = tuple(
            BlockSpec(k, (k - 1) // 2, t) for k, t in zip(kernels, temps)
        )
    if args.depth is not None:
        updates["depth"] = args.depth
    if args.embed_kernel is not None:
        updates["embed_kernel"] = args.embed_kernel
        updates["embed_stride"] = args.embed_kernel
    if args.proj_kernel is not None:
        updates["proj_kernel"] = args.proj_kernel
        updates["proj_stride"] = args.proj_kernel
    if args.no_skip:
        updates["use_skip"] = False
    if args.no_aggregation:
        updates["use_aggregation"] = False
    if args.no_shuffle:
        updates["use_shuffle"] = False
    return replace(config, **updates) if updates else config


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _cmd_synth_data(args: argparse.Namespace) -> int:
    from .data import synth_generate, write_manifest

    run = _RunDir(args.out, "synth-data")
    try:
        recordings = synth_generate(
            args.subjects, channels=args.channels, fs=args.fs,
            duration_s=args.seconds, seed=args.seed,
        )
        manifest = write_manifest(recordings, args.out)
        run.write_run_manifest(_serializable_options(args))
    except Exception:
        run.cleanup()
        raise
    print(f"wrote {len(recordings)} recordings and {manifest}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    from .data import prepare_datasets, subject_split, undersample, window_dataset, zscore_apply
    from .model import QuanvNeXt
    from .training import train

    recordings = _load_recordings(args)
    pipeline = prepare_datasets(
        recordings,
        window_s=args.window_seconds,
        overlap=args.overlap,
        train_fraction=args.train_fraction,
        seed=args.seed,
    )
    if args.select_on == "val":
        labels = {rec.subject_id: rec.label for rec in recordings
                  if rec.subject_id in set(pipeline.train_subjects)}
        fit_ids, val_ids = subject_split(labels, 1.0 - args.val_fraction, seed=args.seed + 1)
        by_id = {rec.subject_id: rec for rec in recordings}
        fit_set = undersample(
            window_dataset([by_id[s] for s in fit_ids], args.window_seconds, args.overlap),
            seed=args.seed,
        )
        fit_set = zscore_apply(fit_set, pipeline.stats)
        eval_set = zscore_apply(
            window_dataset([by_id[s] for s in val_ids], args.window_seconds, args.overlap),
            pipeline.stats,
        )
    else:
        fit_set, eval_set = pipeline.train, pipeline.test
    config = _build_model_config(args, fit_set.X.shape[1], fit_set.X.shape[2])
    lr = args.lr
    if lr is None:
        lr = PRESET_LEARNING_RATES.get(args.preset, DEFAULT_LEARNING_RATE)
    meta = {
        "seed": args.seed,
        "window_seconds": args.window_seconds,
        "overlap": args.overlap,
        "train_subjects": pipeline.train_subjects,
        "test_subjects": pipeline.test_subjects,
        "selection": args.select_on,
    }
    run = _RunDir(args.out, "train")
    try:
        model = QuanvNeXt(config, seed=args.seed)
        result = train(
            model,
            (fit_set.X, fit_set.y),
            (eval_set.X, eval_set.y),
            epochs=args.epochs,
            batch_size=args.batch,
            learning_rate=lr,
            seed=args.seed,
            out_dir=args.out,
            stats=pipeline.stats,
            meta=meta,
        )
        options = _serializable_options(args)
        options["resolved_lr"] = lr
        options["best_epoch"] = result.best_epoch
        run.write_run_manifest(options)
    except Exception:
        run.cleanup()
        raise
    last = result.history[-1] if result.history else None
    summary = f"best epoch {result.best_epoch}" if result.history else "no epochs run"
    if last is not None and last.val_accuracy is not None:
        summary += f"; final {args.select_on} accuracy {last.val_accuracy:.4f}"
    print(f"trained {args.epochs} epochs -> {args.out} ({summary})")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    import csv

    from .checkpoint import load_checkpoint
    from .metrics import accuracy, auc_roc, confusion_counts, ece, mcc

    ckpt = load_checkpoint(args.ckpt)
    windows = _windows_for_checkpoint(args, ckpt)
    out_dir = args.out if args.out is not None else args.ckpt.parent
    run = _RunDir(out_dir, "eval")
    try:
        probs = ckpt.model.predict_proba(windows.X)
        preds = probs.argmax(axis=1)
        counts = confusion_counts(windows.y, preds)
        scores = {
            "n_windows": len(windows),
            "accuracy": accuracy(windows.y, preds),
            "mcc": mcc(counts),
            "auc_roc": auc_roc(probs[:, 1], windows.y),
            "ece": ece(probs.max(axis=1), preds == windows.y),
        }
        path = Path(out_dir) / "evaluation.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(scores))
            writer.writerow([
                scores["n_windows"],
                *(f"{scores[k]:.9g}" for k in ("accuracy", "mcc", "auc_roc", "ece")),
            ])
        run.write_run_manifest(_serializable_options(args))
    except Exception:
        run.cleanup()
        raise
    print(", ".join(f"{k}={v:.4f}" if isinstance(v, float) else f"{k}={v}"
                    for k, v in scores.items()))
    return 0


def _cmd_uncertainty(args: argparse.Namespace) -> int:
    from .checkpoint import load_checkpoint
    from .uncertainty import uncertainty_report, write_uncertainty_csv

    ckpt = load_checkpoint(args.ckpt)
    windows = _windows_for_checkpoint(args, ckpt)
    epsilons = [float(v) for v in args.eps.split(",") if v]
    if not epsilons:
        raise CliError("--eps must list at least one perturbation magnitude")
    out_dir = args.out if args.out is not None else args.ckpt.parent
    run = _RunDir(out_dir, "uncertainty")
    try:
        records = uncertainty_report(
            ckpt.model, windows.X, windows.y, epsilons=epsilons, n=args.n, seed=args.seed,
        )
        path = write_uncertainty_csv(records, Path(out_dir) / "uncertainty.csv")
        run.write_run_manifest(_serializable_options(args))
    except Exception:
        run.cleanup()
        raise
    for rec in records:
        print(f"eps={rec.epsilon:g}: accuracy {rec.accuracy:.4f} "
              f"[{rec.ci_low:.4f}, {rec.ci_high:.4f}], ece {rec.ece:.4f}")
    print(f"wrote {path}")
    return 0


def _cmd_explain(args: argparse.Namespace) -> int:
    from .checkpoint import load_checkpoint
    from .explain import export_activations, export_embeddings, stft_spectrogram, write_spectrogram_csv

    ckpt = load_checkpoint(args.ckpt)
    windows = _windows_for_checkpoint(args, ckpt)
    out_dir = Path(args.out) if args.out is not None else args.ckpt.parent
    run = _RunDir(out_dir, "explain")
    try:
        activation = export_activations(
            ckpt.model, windows.X, windows.y, args.stage,
            out_path=out_dir / f"activations_{args.stage}.csv",
        )
        for label, curve in sorted(activation.class_means.items()):
            if curve.size >= args.stft_window:
                magnitudes = stft_spectrogram(curve, args.stft_window, args.stft_hop)
                write_spectrogram_csv(
                    magnitudes, out_dir / f"spectrogram_{args.stage}_class{label}.csv"
                )
        export_embeddings(
            ckpt.model, windows.X, windows.y, windows.subjects,
            out_path=out_dir / "embeddings.csv",
        )
        run.write_run_manifest(_serializable_options(args))
    except Exception:
        run.cleanup()
        raise
    print(f"explainability exports written to {out_dir} "
          f"(stage {args.stage}, representative channel {activation.channel})")
    return 0


def _cmd_selfcheck(args: argparse.Namespace) -> int:
    from .selfcheck import run_selfcheck

    return run_selfcheck(seed=args.seed)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
        if args.threads is not None:
            if args.threads < 1:
                raise CliError("--threads must be at least 1")
            import threadpoolctl

            threadpoolctl.threadpool_limits(limits=args.threads)
        handler = {
            "synth-data": _cmd_synth_data,
            "train": _cmd_train,
            "eval": _cmd_eval,
            "uncertainty": _cmd_uncertainty,
            "explain": _cmd_explain,
            "selfcheck": _cmd_selfcheck,
        }[args.command]
        return handler(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surfaced as a single-line diagnostic
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
