"""
Parameter and FLOP accounting, and effective receptive fields.

FLOPs follow the vision convention of one multiply-accumulate per FLOP. Bias
additions count one op per output scalar and every sigmoid/tanh inside a
recurrent cell counts one op per hidden unit. Layer norms, GELUs, residual
additions and pooling are not counted.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from seqkit.bilstm2d import Axes, Direction
from seqkit.errors import ConfigError, ShapeError
from seqkit.logger import get_logger
from seqkit.models import BlockKind, ModelConfig, get_preset, preset_names
from seqkit.recurrent import CellKind
from seqkit.sequencer import Model, forward_features, parameter_shapes, validate_resolution
from seqkit.storage import write_pgm
from seqkit.tensor import Array, Tape, Tensor, backward, sum_

logger = get_logger()


@dataclass
class ModuleCost:
    params: int = 0
    flops: int = 0


@dataclass
class CostReport:
    """Totals plus a per-module breakdown whose entries sum to the totals."""

    model: str
    params: int
    flops: int | None = None
    resolution: tuple[int, int] | None = None
    breakdown: dict[str, ModuleCost] = field(default_factory=dict)

    def to_dict(self, with_breakdown: bool = True) -> dict[str, Any]:
        data: dict[str, Any] = {"model": self.model, "params": self.params}
        if self.flops is not None:
            data["flops"] = self.flops
            data["resolution"] = list(self.resolution) if self.resolution else None
        if with_breakdown:
            data["breakdown"] = {
                name: dataclasses.asdict(cost) if self.flops is not None else cost.params
                for name, cost in self.breakdown.items()
            }
        return data


def module_key(param_name: str) -> str:
    """Group ``stage0.block3.mlp.fc1.weight`` under ``stage0.block3``."""
    parts = param_name.split(".")
    if parts[0].startswith("stage") and len(parts) > 1:
        return f"{parts[0]}.{parts[1]}"
    return parts[0]


def _config_of(m: Model | ModelConfig) -> ModelConfig:
    return m.config if isinstance(m, Model) else m


def _param_breakdown(m: Model | ModelConfig) -> dict[str, ModuleCost]:
    if isinstance(m, Model):
        sizes = {name: p.size for name, p in m.named_parameters().items()}
    else:
        sizes = {name: int(np.prod(shape)) for name, shape in parameter_shapes(m).items()}
    breakdown: dict[str, ModuleCost] = {}
    for name, size in sizes.items():
        breakdown.setdefault(module_key(name), ModuleCost()).params += size
    return breakdown


def count_params(m: Model | ModelConfig) -> CostReport:
    """
    Exact count of trainable scalars.

    A built model is enumerated tensor by tensor; a bare config is counted
    from its shape manifest without allocating weights.
    """
    cfg = _config_of(m)
    breakdown = _param_breakdown(m)
    total = sum(c.params for c in breakdown.values())
    return CostReport(model=cfg.name, params=total, breakdown=breakdown)


def linear_flops(
    in_features: int, out_features: int, positions: int = 1, bias: bool = True
) -> int:
    return positions * (in_features * out_features + (out_features if bias else 0))


def cell_step_flops(kind: CellKind, input_size: int, hidden: int) -> int:
    """One recurrent step: both gate products, both bias vectors, gate activations."""
    rows = kind.gates * hidden
    return rows * input_size + rows * hidden + 2 * rows + kind.activations_per_unit * hidden


def mlp_flops(dim: int, hidden: int, positions: int = 1) -> int:
    return linear_flops(dim, hidden, positions) + linear_flops(hidden, dim, positions)


def _block_flops(cfg: ModelConfig, stage_index: int, tokens: int) -> int:
    st = cfg.stages[stage_index]
    opts = cfg.options
    kind = opts.cell_kind
    if st.block_kind is BlockKind.VANILLA:
        mixer = 2 * tokens * cell_step_flops(kind, st.dim, st.hidden)
    else:
        hidden = opts.effective_hidden(st.hidden)
        directions = 2 if opts.direction is Direction.BI else 1
        axes = 2 if opts.active is Axes.BOTH else 1
        mixer = axes * directions * tokens * cell_step_flops(kind, st.dim, hidden)
        if opts.use_fusion:
            mixer += linear_flops(opts.merged_width(hidden), st.dim, tokens)
    return mixer + mlp_flops(st.dim, int(st.dim * st.mlp_ratio), tokens)


def count_flops(m: Model | ModelConfig, resolution: tuple[int, int] = (224, 224)) -> CostReport:
    """FLOPs of one forward pass at ``resolution`` with the per-module breakdown."""
    cfg = _config_of(m)
    h, w = resolution
    validate_resolution(cfg, h, w)
    breakdown = _param_breakdown(m)

    def add(key: str, flops: int) -> None:
        breakdown.setdefault(key, ModuleCost()).flops += flops

    in_ch = cfg.in_chans
    for s, st in enumerate(cfg.stages):
        k = st.patch_size
        h, w = h // k, w // k
        tokens = h * w
        add(f"stage{s}.downsample", linear_flops(k * k * in_ch, st.dim, tokens))
        for b in range(st.depth):
            add(f"stage{s}.block{b}", _block_flops(cfg, s, tokens))
        in_ch = st.dim
    add("head", linear_flops(in_ch, cfg.num_classes))

    return CostReport(
        model=cfg.name,
        params=sum(c.params for c in breakdown.values()),
        flops=sum(c.flops for c in breakdown.values()),
        resolution=tuple(resolution),  # type: ignore[arg-type]
        breakdown=breakdown,
    )


def cost_table(
    presets: Iterable[str] | None = None, resolution: tuple[int, int] = (224, 224)
) -> list[CostReport]:
    """Params/FLOPs for each named preset (every preset by default)."""
    names = list(presets) if presets is not None else preset_names()
    rows = []
    for name in names:
        cfg = get_preset(name)
        res = resolution if not cfg.use_positional_embedding else cfg.train_resolution
        rows.append(count_flops(cfg, res))
    return rows


# -- effective receptive field -------------------------------------------------------


@dataclass
class ERFMap:
    """
    Per-pixel contribution scores for one block.

    ``log_scores`` is ``log10(sum of positive input gradients + 1)``;
    ``scores`` is its min-max rescaling to ``[0, 1]``.
    """

    scores: Array
    log_scores: Array
    model: str
    block: int
    resolution: tuple[int, int]
    n_images: int
    stride: int

    def metadata(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "block": self.block,
            "resolution": list(self.resolution),
            "n_images": self.n_images,
            "stride": self.stride,
        }


def rescale(values: Array, lo: float | None = None, hi: float | None = None) -> Array:
    """Min-max rescale to ``[0, 1]``; a constant input maps to all zeros."""
    lo = float(values.min()) if lo is None else lo
    hi = float(values.max()) if hi is None else hi
    if hi <= lo:
        return np.zeros_like(values, dtype=np.float64)
    return np.asarray((values - lo) / (hi - lo), dtype=np.float64)


def _positive_contribution(model: Model, image: Array, block: int) -> Array:
    dtype = model.head.weight.dtype
    x = Tensor(image[None], dtype=dtype)
    with Tape(track_parameters=False) as tape:
        tape.watch(x)
        out = forward_features(model, x, until_block=block)
        _, h, w, _ = out.shape
        center = sum_(out[0, h // 2, w // 2])
    grad = backward(tape, center).of(x)[0]
    return np.maximum(grad, 0).sum(axis=-1).astype(np.float64)


def erf_compute(
    m: Model,
    images: Array | Tensor,
    block: int,
    threads: int | None = None,
) -> ERFMap:
    """
    Effective receptive field of global block ``block`` (1-based).

    Per image, the positive part of the gradient of the block output's centre
    (summed over channels) with respect to the input is accumulated over
    images and channels, log-scaled and rescaled. Images run on a thread pool;
    results are summed in input order.
    """
    imgs = images.data if isinstance(images, Tensor) else np.asarray(images)
    if imgs.ndim != 4:
        raise ShapeError(f"ERF expects images [n, H, W, C], got {imgs.shape}")
    cfg = m.config
    stride = cfg.stride_at_block(block)
    n, h, w, _ = imgs.shape
    validate_resolution(cfg, h, w)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda img: _positive_contribution(m, img, block), imgs))
    total = np.sum(np.stack(parts), axis=0)
    log_scores = np.log10(total + 1.0)
    logger.debug("ERF block %d: %d images, max log score %.4f", block, n, log_scores.max())
    return ERFMap(
        scores=rescale(log_scores),
        log_scores=log_scores,
        model=cfg.name,
        block=block,
        resolution=(h, w),
        n_images=n,
        stride=stride,
    )


def erf_compute_blocks(
    m: Model,
    images: Array | Tensor,
    blocks: Sequence[int],
    threads: int | None = None,
) -> list[ERFMap]:
    """One map per block, each rescaled on its own."""
    for block in blocks:
        m.config.stride_at_block(block)
    return [erf_compute(m, images, block, threads) for block in blocks]


def rescale_shared(maps: Sequence[ERFMap]) -> list[ERFMap]:
    """Rescale several maps with one common min and max."""
    if not maps:
        return []
    lo = min(float(mp.log_scores.min()) for mp in maps)
    hi = max(float(mp.log_scores.max()) for mp in maps)
    return [dataclasses.replace(mp, scores=rescale(mp.log_scores, lo, hi)) for mp in maps]


def erf_render(erf: ERFMap, path: str | Path) -> Path:
    """Write ``round(255 * S)`` as an 8-bit binary PGM."""
    pixels = np.rint(255.0 * np.clip(erf.scores, 0.0, 1.0)).astype(np.uint8)
    return write_pgm(path, pixels)


def center_bands(shape: tuple[int, int], stride: int) -> Array:
    """Pixels whose token row or token column is the centre token's."""
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    h, w = shape
    center_row = (h // stride) // 2
    center_col = (w // stride) // 2
    rows = (np.arange(h) // stride) == center_row
    cols = (np.arange(w) // stride) == center_col
    return np.asarray(rows[:, None] | cols[None, :])


def cross_mass_ratio(erf: ERFMap, stride: int | None = None) -> float:
    """Mean score on the centre bands divided by the mean score off them."""
    mask = center_bands(erf.scores.shape, stride or erf.stride)  # type: ignore[arg-type]
    on = float(erf.scores[mask].mean())
    if mask.all():
        return float("inf")
    off = float(erf.scores[~mask].mean())
    if off == 0.0:
        return float("inf") if on > 0.0 else float("nan")
    return on / off
