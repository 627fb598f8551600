"""
Command-line interface for seqkit.

Provides the `seqkit` command with subcommands to describe, cost, run,
verify, analyze and train Sequencer models. Structured results go to
standard output as JSON; diagnostics go to standard error.

Exit codes: 0 success, 1 validation error or failed check, 2 I/O error.
"""

from __future__ import annotations

import json
import sys
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any, TypeVar

import click
import numpy as np
from pydantic import ValidationError

from seqkit import __version__
from seqkit.analysis import (
    count_flops,
    count_params,
    cost_table,
    cross_mass_ratio,
    erf_compute,
    erf_compute_blocks,
    erf_render,
    rescale_shared,
)
from seqkit.config import SeqkitConfig, load_model_config, load_settings, resolve_threads
from seqkit.datasets import Dataset, load_image_folder, make_bar_dataset, make_blob_dataset
from seqkit.errors import CheckFailedError, ConfigError, SeqkitError
from seqkit.logger import get_console, get_logger, log_error, log_grad_check, setup_logger
from seqkit.models import BlockKind, ModelConfig, get_preset
from seqkit.sequencer import Model, build_model, model_forward, validate_resolution
from seqkit.storage import (
    INDEX_NAME,
    checkpoint_config,
    load_checkpoint,
    read_dataset_index,
    save_checkpoint,
    write_history_csv,
    write_json,
    write_tensor,
)
from seqkit.tensor import Array, Tensor, gradient_check
from seqkit.training import TrainConfig, cross_entropy_smoothed, evaluate, train

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2

DEFAULT_PRESET = "sequencer2d_s"

console = get_console()
logger = get_logger()

F = TypeVar("F", bound=Callable[..., Any])


@dataclass
class CliState:
    settings: SeqkitConfig
    threads: int

    @property
    def dtype(self) -> np.dtype[Any]:
        return np.dtype(self.settings.runtime.dtype)

    def seed(self, flag: int | None) -> int:
        return self.settings.runtime.seed if flag is None else flag


class SeqkitGroup(click.Group):
    """Group that maps library failures to exit codes."""

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except SeqkitError as e:
            log_error(type(e).__name__, e)
            ctx.exit(EXIT_VALIDATION)
        except OSError as e:
            log_error("I/O error", e)
            ctx.exit(EXIT_IO)


class ResolutionType(click.ParamType):
    """``HxW`` (or a single ``N`` for square inputs)."""

    name = "HxW"

    def convert(
        self, value: Any, param: click.Parameter | None, ctx: click.Context | None
    ) -> tuple[int, int]:
        if isinstance(value, tuple):
            return value
        text = str(value).lower().strip()
        parts = text.split("x")
        try:
            dims = tuple(int(p) for p in parts)
        except ValueError:
            self.fail(f"{value!r} is not a resolution like 224x224", param, ctx)
        if len(dims) == 1:
            dims = (dims[0], dims[0])
        if len(dims) != 2 or min(dims) < 1:
            self.fail(f"{value!r} is not a resolution like 224x224", param, ctx)
        return dims[0], dims[1]


RESOLUTION = ResolutionType()


def _emit(data: Any) -> None:
    """Write one JSON document to standard output."""
    click.echo(json.dumps(data, indent=2))


def model_options(default_preset: str = DEFAULT_PRESET) -> Callable[[F], F]:
    """Shared model-selection flags."""
    options = [
        click.option(
            "--preset",
            "-p",
            default=None,
            help=f"Named architecture (default: {default_preset})",
        ),
        click.option(
            "--config",
            "model_config_path",
            type=click.Path(dir_okay=False),
            default=None,
            help="Model config file (JSON, TOML or YAML); excludes --preset",
        ),
        click.option("--merge", type=click.Choice(["concat", "add"]), default=None),
        click.option("--direction", type=click.Choice(["bi", "uni"]), default=None),
        click.option(
            "--active", type=click.Choice(["both", "vertical", "horizontal"]), default=None
        ),
        click.option("--cell", type=click.Choice(["lstm", "gru", "rnn"]), default=None),
        click.option("--seed", type=int, default=None, help="Seed for weights and random images"),
    ]

    def decorator(func: F) -> F:
        for option in reversed(options):
            func = option(func)
        return func

    return decorator


def resolve_model_config(
    preset: str | None,
    model_config_path: str | None,
    merge: str | None = None,
    direction: str | None = None,
    active: str | None = None,
    cell: str | None = None,
    default_preset: str = DEFAULT_PRESET,
) -> ModelConfig:
    """Model config from ``--preset``/``--config`` plus the ablation flags."""
    if preset is not None and model_config_path is not None:
        raise ConfigError("--preset and --config are mutually exclusive")
    if model_config_path is not None:
        cfg = load_model_config(model_config_path)
    else:
        cfg = get_preset(preset or default_preset)
    overrides = {
        key: value
        for key, value in (
            ("merge", merge),
            ("direction", direction),
            ("active", active),
            ("cell_kind", cell),
        )
        if value is not None
    }
    if overrides:
        cfg = cfg.with_overrides(options=overrides)
    return cfg


def load_images(
    source: str, cfg: ModelConfig, resolution: tuple[int, int], seed: int
) -> tuple[Array, Array | None]:
    """
    Resolve an ``--images`` source.

    ``random:n`` draws ``n`` standard-normal images from the global seed;
    a directory is read through its ``index.txt`` when present, else as an
    image folder.
    """
    if source.startswith("random:"):
        try:
            n = int(source.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"Bad image source {source!r}; use random:<n>") from None
        if n < 1:
            raise ConfigError("random:<n> needs n >= 1")
        h, w = resolution
        rng = np.random.default_rng(seed)
        return rng.standard_normal((n, h, w, cfg.in_chans)), None
    path = Path(source)
    if (path / INDEX_NAME).exists():
        return read_dataset_index(path)
    if path.is_dir():
        ds = load_image_folder(path, multiple=cfg.total_stride)
        return ds.images, ds.labels
    raise FileNotFoundError(f"Image source not found: {source}")


def _build(cfg: ModelConfig, seed: int, dtype: np.dtype[Any], checkpoint: str | None) -> Model:
    model = build_model(cfg, seed=seed, dtype=dtype)
    if checkpoint is not None:
        load_checkpoint(checkpoint, model)
        logger.info("Loaded weights from %s", checkpoint)
    return model


def _config_for_checkpoint(
    checkpoint: str | None,
    preset: str | None,
    model_config_path: str | None,
    default_preset: str,
    **flags: str | None,
) -> ModelConfig:
    if checkpoint is not None and preset is None and model_config_path is None:
        cfg = checkpoint_config(checkpoint)
        overrides = {k: v for k, v in flags.items() if v is not None}
        if overrides:
            raise ConfigError("Mixer flags cannot change a checkpoint's architecture")
        return cfg
    return resolve_model_config(
        preset, model_config_path, default_preset=default_preset, **flags
    )


@click.group(cls=SeqkitGroup)
@click.version_option(version=__version__, prog_name="seqkit")
@click.option(
    "--settings",
    "settings_path",
    type=click.Path(exists=True, dir_okay=False),
    help="Path to a settings file (TOML or YAML)",
)
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default=None,
    help="Log level (default from settings: INFO)",
)
@click.option("--debug", is_flag=True, help="Shortcut for --log-level DEBUG")
@click.option(
    "--threads",
    type=click.IntRange(min=1),
    default=None,
    help="Worker threads for per-image work (default: SEQKIT_THREADS or all cores)",
)
@click.pass_context
def cli(
    ctx: click.Context,
    settings_path: str | None,
    log_level: str | None,
    debug: bool,
    threads: int | None,
) -> None:
    """
    seqkit - LSTM-based vision backbones with BiLSTM2D token mixing.

    Build, cost, verify, analyze and train Sequencer2D models at desk scale.
    """
    settings = load_settings(settings_path)
    level = "DEBUG" if debug else (log_level or settings.logging.level)
    setup_logger(level, settings.logging.log_file, settings.logging.format)
    ctx.obj = CliState(settings=settings, threads=resolve_threads(threads, settings))


@cli.command()
@model_options()
def describe(
    preset: str | None,
    model_config_path: str | None,
    merge: str | None,
    direction: str | None,
    active: str | None,
    cell: str | None,
    seed: int | None,
) -> None:
    """
    Print the stage table of an architecture as JSON.

    Example:

        seqkit describe --preset sequencer2d-s
    """
    cfg = resolve_model_config(preset, model_config_path, merge, direction, active, cell)
    stages = []
    for i, st in enumerate(cfg.stages):
        vanilla = st.block_kind is BlockKind.VANILLA
        hidden = st.hidden if vanilla else cfg.options.effective_hidden(st.hidden)
        stages.append(
            {
                "stage": i,
                "downsample": st.downsample.value,
                "patch_size": st.patch_size,
                "dim": st.dim,
                "hidden": st.hidden,
                "effective_hidden": hidden,
                "mlp_ratio": st.mlp_ratio,
                "depth": st.depth,
                "block_kind": st.block_kind.value,
            }
        )
    _emit(
        {
            "name": cfg.name,
            "num_classes": cfg.num_classes,
            "in_chans": cfg.in_chans,
            "use_positional_embedding": cfg.use_positional_embedding,
            "train_resolution": list(cfg.train_resolution),
            "options": cfg.options.model_dump(mode="json"),
            "total_depth": cfg.total_depth,
            "total_stride": cfg.total_stride,
            "params": count_params(cfg).params,
            "stages": stages,
        }
    )


@cli.command("count-params")
@model_options()
@click.option("--breakdown/--no-breakdown", default=False, help="Include per-module counts")
def count_params_cmd(
    preset: str | None,
    model_config_path: str | None,
    merge: str | None,
    direction: str | None,
    active: str | None,
    cell: str | None,
    seed: int | None,
    breakdown: bool,
) -> None:
    """
    Count trainable parameters exactly.

    Example:

        seqkit count-params --preset sequencer2d-l
    """
    cfg = resolve_model_config(preset, model_config_path, merge, direction, active, cell)
    _emit(count_params(cfg).to_dict(with_breakdown=breakdown))


@cli.command("count-flops")
@model_options()
@click.option("--resolution", "-r", type=RESOLUTION, default=None, help="Input size HxW")
@click.option("--breakdown/--no-breakdown", default=False, help="Include per-module counts")
def count_flops_cmd(
    preset: str | None,
    model_config_path: str | None,
    merge: str | None,
    direction: str | None,
    active: str | None,
    cell: str | None,
    seed: int | None,
    resolution: tuple[int, int] | None,
    breakdown: bool,
) -> None:
    """
    Count forward-pass FLOPs at a resolution (default: the training resolution).

    Example:

        seqkit count-flops --preset sequencer2d-s --resolution 224x224
    """
    cfg = resolve_model_config(preset, model_config_path, merge, direction, active, cell)
    report = count_flops(cfg, resolution or cfg.train_resolution)
    _emit(report.to_dict(with_breakdown=breakdown))


@cli.command("cost-table")
@click.option(
    "--preset", "-p", "presets", multiple=True, help="Preset to include (repeatable; default all)"
)
@click.option("--resolution", "-r", type=RESOLUTION, default="224x224", help="Input size HxW")
def cost_table_cmd(presets: tuple[str, ...], resolution: tuple[int, int]) -> None:
    """
    Params and FLOPs for every preset, ablation variants included.

    Positional-embedding presets are always costed at their training resolution.
    """
    rows = cost_table(presets or None, resolution)
    _emit([row.to_dict(with_breakdown=False) for row in rows])


@cli.command()
@model_options()
@click.option("--resolution", "-r", type=RESOLUTION, default=None, help="Input size HxW")
@click.option(
    "--images", default="random:1", show_default=True, help="Image source: random:<n> or a dir"
)
@click.option("--checkpoint", type=click.Path(), default=None, help="Checkpoint to load")
@click.option("--out", "-o", type=click.Path(), default=None, help="Write logits as SQTN")
@click.pass_obj
def forward(
    state: CliState,
    preset: str | None,
    model_config_path: str | None,
    merge: str | None,
    direction: str | None,
    active: str | None,
    cell: str | None,
    seed: int | None,
    resolution: tuple[int, int] | None,
    images: str,
    checkpoint: str | None,
    out: str | None,
) -> None:
    """
    Run a forward pass and report the logits.

    Example:

        seqkit forward --preset sequencer2d-s --resolution 448x448 --images random:1
    """
    cfg = _config_for_checkpoint(
        checkpoint,
        preset,
        model_config_path,
        DEFAULT_PRESET,
        merge=merge,
        direction=direction,
        active=active,
        cell=cell,
    )
    run_seed = state.seed(seed)
    res = resolution or cfg.train_resolution
    validate_resolution(cfg, *res)
    batch, _ = load_images(images, cfg, res, run_seed)
    if resolution is not None and batch.shape[1:3] != res:
        raise ConfigError(f"Images are {batch.shape[1]}x{batch.shape[2]}, not {res[0]}x{res[1]}")
    validate_resolution(cfg, batch.shape[1], batch.shape[2])

    model = _build(cfg, run_seed, state.dtype, checkpoint)
    logits = model_forward(model, Tensor(batch, dtype=state.dtype)).data
    logger.info("Forward %s on %d images at %dx%d", cfg.name, *batch.shape[:3])

    result: dict[str, Any] = {
        "model": cfg.name,
        "resolution": [int(batch.shape[1]), int(batch.shape[2])],
        "n_images": int(batch.shape[0]),
        "logits_shape": list(logits.shape),
        "top1": np.argmax(logits, axis=-1).tolist(),
    }
    if out is not None:
        write_tensor(out, logits)
        result["out"] = out
    else:
        result["logits"] = logits.tolist()
    _emit(result)


@cli.command("grad-check")
@model_options(default_preset="mini")
@click.option("--resolution", "-r", type=RESOLUTION, default=None, help="Input size HxW")
@click.option("--batch", type=click.IntRange(min=1), default=2, show_default=True)
@click.option("--eps", type=float, default=1e-5, show_default=True, help="Finite-difference step")
@click.option("--tolerance", type=float, default=1e-4, show_default=True)
@click.option(
    "--max-coords",
    type=click.IntRange(min=0),
    default=8,
    show_default=True,
    help="Coordinates checked per tensor (0 = all)",
)
@click.pass_obj
def grad_check(
    state: CliState,
    preset: str | None,
    model_config_path: str | None,
    merge: str | None,
    direction: str | None,
    active: str | None,
    cell: str | None,
    seed: int | None,
    resolution: tuple[int, int] | None,
    batch: int,
    eps: float,
    tolerance: float,
    max_coords: int,
) -> None:
    """
    Compare tape gradients with central differences in float64.

    Exits with status 1 when the largest relative error reaches the tolerance.

    Example:

        seqkit grad-check --preset mini --seed 7
    """
    cfg = resolve_model_config(
        preset, model_config_path, merge, direction, active, cell, default_preset="mini"
    )
    run_seed = state.seed(seed)
    res = resolution or cfg.train_resolution
    validate_resolution(cfg, *res)

    model = build_model(cfg, seed=run_seed, dtype=np.float64, zero_head=False)
    rng = np.random.default_rng(run_seed)
    x = Tensor(rng.standard_normal((batch, *res, cfg.in_chans)), dtype=np.float64)
    labels = rng.integers(0, cfg.num_classes, size=batch)

    def loss_fn() -> Tensor:
        return cross_entropy_smoothed(model_forward(model, x), labels, 0.1)

    result = gradient_check(
        loss_fn,
        model.named_parameters(),
        eps=eps,
        max_coords=max_coords or None,
        rng=np.random.default_rng(run_seed),
    )
    for name, err in result.errors.items():
        log_grad_check(name, err, tolerance)
    passed = result.passed(tolerance)
    _emit(
        {
            "model": cfg.name,
            "seed": run_seed,
            "max_rel_error": result.max_rel_error,
            "tolerance": tolerance,
            "passed": passed,
            "checked_coords": result.checked_coords,
            "errors": result.errors,
        }
    )
    if not passed:
        raise CheckFailedError(
            f"max relative error {result.max_rel_error:.3e} >= tolerance {tolerance:.0e}"
        )


def _erf_paths(out: Path, blocks: Sequence[int]) -> list[Path]:
    if len(blocks) == 1:
        return [out]
    return [out.with_name(f"{out.stem}_block{b:02d}{out.suffix or '.pgm'}") for b in blocks]


@cli.command()
@model_options()
@click.option(
    "--block", default="1", show_default=True, help="1-based global block index, or 'all'"
)
@click.option("--resolution", "-r", type=RESOLUTION, default=None, help="Input size HxW")
@click.option(
    "--images", default="random:8", show_default=True, help="Image source: random:<n> or a dir"
)
@click.option("--checkpoint", type=click.Path(), default=None, help="Checkpoint to load")
@click.option("--out", "-o", type=click.Path(), default="erf.pgm", show_default=True)
@click.pass_obj
def erf(
    state: CliState,
    preset: str | None,
    model_config_path: str | None,
    merge: str | None,
    direction: str | None,
    active: str | None,
    cell: str | None,
    seed: int | None,
    block: str,
    resolution: tuple[int, int] | None,
    images: str,
    checkpoint: str | None,
    out: str,
) -> None:
    """
    Render the effective receptive field of a block as a PGM image.

    With --block all one map per block is written, rescaled jointly.

    Example:

        seqkit erf --preset sequencer2d-s --block 1 --images random:8 --out erf.pgm
    """
    cfg = _config_for_checkpoint(
        checkpoint,
        preset,
        model_config_path,
        DEFAULT_PRESET,
        merge=merge,
        direction=direction,
        active=active,
        cell=cell,
    )
    if block == "all":
        blocks = list(range(1, cfg.total_depth + 1))
    else:
        try:
            blocks = [int(block)]
        except ValueError:
            raise ConfigError(f"--block must be an integer or 'all', got {block!r}") from None
    for b in blocks:
        cfg.stride_at_block(b)

    run_seed = state.seed(seed)
    res = resolution or cfg.train_resolution
    validate_resolution(cfg, *res)
    batch, _ = load_images(images, cfg, res, run_seed)
    validate_resolution(cfg, batch.shape[1], batch.shape[2])
    model = _build(cfg, run_seed, state.dtype, checkpoint)

    if len(blocks) == 1:
        maps = [erf_compute(model, batch, blocks[0], threads=state.threads)]
    else:
        maps = rescale_shared(erf_compute_blocks(model, batch, blocks, threads=state.threads))

    entries = []
    for mp, path in zip(maps, _erf_paths(Path(out), blocks), strict=True):
        erf_render(mp, path)
        write_tensor(path.with_suffix(".sqtn"), mp.scores)
        meta = {**mp.metadata(), "cross_mass_ratio": cross_mass_ratio(mp), "out": str(path)}
        write_json(path.with_suffix(".json"), meta)
        entries.append(meta)
        logger.info("ERF block %d -> %s", mp.block, path)
    _emit(entries[0] if len(entries) == 1 else entries)


def _dataset_from_flag(
    source: str, samples: int, seed: int, cfg: ModelConfig, dtype: np.dtype[Any]
) -> Dataset:
    h, w = cfg.train_resolution
    if source == "bars":
        return make_bar_dataset(n=samples, size=h, num_classes=min(cfg.num_classes, 4), seed=seed)
    if source == "blobs":
        return make_blob_dataset(n=samples, size=h, num_classes=min(cfg.num_classes, 6), seed=seed)
    path = Path(source)
    if (path / INDEX_NAME).exists():
        images, labels = read_dataset_index(path)
        return Dataset(images.astype(dtype), labels, cfg.num_classes)
    if path.is_dir():
        return load_image_folder(path, multiple=cfg.total_stride, dtype=dtype)
    raise FileNotFoundError(f"Dataset not found: {source}")


@cli.command("train")
@model_options(default_preset="mini")
@click.option(
    "--dataset",
    default="bars",
    show_default=True,
    help="bars, blobs, or a dataset directory (index.txt or class folders)",
)
@click.option("--samples", type=click.IntRange(min=1), default=200, show_default=True)
@click.option("--eval-split", type=click.FloatRange(0.0, 1.0, max_open=True), default=0.0)
@click.option("--epochs", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--batch-size", type=click.IntRange(min=1), default=16, show_default=True)
@click.option("--lr", "base_lr", type=float, default=None, help="Base learning rate")
@click.option("--weight-decay", type=float, default=0.05, show_default=True)
@click.option("--beta1", type=float, default=0.9, show_default=True, help="AdamW beta1")
@click.option("--beta2", type=float, default=0.999, show_default=True, help="AdamW beta2")
@click.option("--adam-eps", type=float, default=1e-8, show_default=True, help="AdamW epsilon")
@click.option("--warmup-epochs", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--warmup-lr", type=float, default=1e-6, show_default=True, help="Warmup start rate")
@click.option("--cooldown-epochs", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--min-lr", type=float, default=1e-6, show_default=True)
@click.option("--label-smoothing", type=float, default=0.1, show_default=True)
@click.option("--drop-path", type=float, default=None, help="Stochastic depth probability")
@click.option("--clip-grad-norm", type=float, default=None, help="Global gradient norm limit")
@click.option("--checkpoint", type=click.Path(), default=None, help="Directory to save weights")
@click.option("--out", "-o", type=click.Path(), default=None, help="Metrics history CSV")
@click.pass_obj
def train_cmd(
    state: CliState,
    preset: str | None,
    model_config_path: str | None,
    merge: str | None,
    direction: str | None,
    active: str | None,
    cell: str | None,
    seed: int | None,
    dataset: str,
    samples: int,
    eval_split: float,
    epochs: int,
    batch_size: int,
    base_lr: float | None,
    weight_decay: float,
    beta1: float,
    beta2: float,
    adam_eps: float,
    warmup_epochs: int,
    warmup_lr: float,
    cooldown_epochs: int,
    min_lr: float,
    label_smoothing: float,
    drop_path: float | None,
    clip_grad_norm: float | None,
    checkpoint: str | None,
    out: str | None,
) -> None:
    """
    Train a model on a desk-scale dataset.

    Without --lr the base rate follows batch_size / 512 * 5e-4.

    Example:

        seqkit train --preset mini --dataset bars --epochs 5 --lr 1e-2 --out history.csv
    """
    cfg = resolve_model_config(
        preset, model_config_path, merge, direction, active, cell, default_preset="mini"
    )
    run_seed = state.seed(seed)
    try:
        train_cfg = TrainConfig(
            base_lr=base_lr if base_lr is not None else TrainConfig.scaled_lr(batch_size),
            weight_decay=weight_decay,
            beta1=beta1,
            beta2=beta2,
            eps=adam_eps,
            batch_size=batch_size,
            epochs=epochs,
            warmup_epochs=warmup_epochs,
            warmup_lr=warmup_lr,
            cooldown_epochs=cooldown_epochs,
            min_lr=min_lr,
            label_smoothing=label_smoothing,
            drop_path=drop_path,
            clip_grad_norm=clip_grad_norm,
            seed=run_seed,
        )
    except ValidationError as e:
        raise ConfigError(f"Invalid training settings: {e}") from e
    data = _dataset_from_flag(dataset, samples, run_seed, cfg, state.dtype)
    validate_resolution(cfg, *data.resolution)
    eval_data = None
    if eval_split > 0:
        eval_data, data = data.split(eval_split, seed=run_seed)

    model = build_model(cfg, seed=run_seed, dtype=state.dtype)
    history = train(model, data, train_cfg, eval_dataset=eval_data)

    result: dict[str, Any] = {
        "model": cfg.name,
        "samples": len(data),
        "train_config": train_cfg.model_dump(mode="json"),
        "history": [m.as_row() for m in history],
    }
    if out is not None:
        write_history_csv(out, (m.as_row() for m in history))
        result["history_csv"] = out
    if checkpoint is not None:
        save_checkpoint(checkpoint, model)
        result["checkpoint"] = checkpoint
    console.print(f"[green]✓ Trained {cfg.name} for {len(history)} epochs[/]")
    _emit(result)


@cli.command("eval")
@click.option("--checkpoint", type=click.Path(), required=True, help="Checkpoint directory")
@click.option("--dataset", default="bars", show_default=True, help="bars, blobs or a directory")
@click.option("--samples", type=click.IntRange(min=1), default=200, show_default=True)
@click.option("--seed", type=int, default=None)
@click.pass_obj
def eval_cmd(
    state: CliState, checkpoint: str, dataset: str, samples: int, seed: int | None
) -> None:
    """Top-1 accuracy of a checkpoint on a dataset."""
    cfg = checkpoint_config(checkpoint)
    run_seed = state.seed(seed)
    data = _dataset_from_flag(dataset, samples, run_seed, cfg, state.dtype)
    model = _build(cfg, run_seed, state.dtype, checkpoint)
    accuracy = evaluate(model, data)
    _emit({"model": cfg.name, "samples": len(data), "accuracy": accuracy})


def run(argv: Sequence[str] | None = None) -> int:
    """Invoke the CLI and return its exit code instead of exiting."""
    try:
        rv = cli.main(
            args=list(argv) if argv is not None else None,
            prog_name="seqkit",
            standalone_mode=False,
        )
    except click.ClickException as e:
        e.show()
        return EXIT_VALIDATION
    except click.Abort:
        return EXIT_VALIDATION
    return rv if isinstance(rv, int) else EXIT_OK


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
