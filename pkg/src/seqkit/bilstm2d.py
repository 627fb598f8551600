"""
BiLSTM2D token mixing.

A vertical bidirectional recurrence scans every column of an ``H×W×C`` grid,
a horizontal one scans every row (each axis shares its weights across all
columns/rows), the two results are merged and a pointwise linear layer
projects them back to ``C`` channels.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field

from seqkit.errors import ConfigError, ShapeError
from seqkit.layers import Linear, join
from seqkit.recurrent import BiRNNParams, CellKind, birnn_batch
from seqkit.tensor import (
    Array,
    Parameter,
    Tape,
    Tensor,
    add,
    backward,
    concat_last,
    permute,
    reshape,
    sum_,
)


class Merge(str, Enum):
    CONCAT = "concat"
    ADD = "add"


class Direction(str, Enum):
    BI = "bi"
    UNI = "uni"


class Axes(str, Enum):
    """Which scan axes are active."""

    BOTH = "both"
    VERTICAL = "vertical"
    HORIZONTAL = "horizontal"


class MixerOptions(BaseModel):
    """Ablation switches of the BiLSTM2D layer."""

    model_config = ConfigDict(frozen=True, use_enum_values=False)

    merge: Merge = Merge.CONCAT
    direction: Direction = Direction.BI
    active: Axes = Axes.BOTH
    # Project merged features back to C; without it merged width must already be C
    use_fusion: bool = True
    cell_kind: CellKind = CellKind.LSTM
    # Multiplier on the stage hidden size D
    hidden_ratio: float = Field(default=1.0, gt=0)

    def validate_for(self, channels: int, base_hidden: int) -> None:
        """Raise ConfigError if these options cannot form a layer of this size."""
        if self.merge is Merge.ADD and self.active is not Axes.BOTH:
            raise ConfigError("merge=add needs both scan axes active")
        if self.effective_hidden(base_hidden) < 1:
            raise ConfigError(f"hidden_ratio {self.hidden_ratio} leaves no hidden units")
        width = self.merged_width(self.effective_hidden(base_hidden))
        if not self.use_fusion and width != channels:
            raise ConfigError(
                f"use_fusion=False needs merged width {width} to equal channel width {channels}"
            )

    def effective_hidden(self, base_hidden: int) -> int:
        """Hidden size per direction, doubled for a single axis and again for one direction."""
        hidden = int(round(base_hidden * self.hidden_ratio))
        if self.active is not Axes.BOTH:
            hidden *= 2
        if self.direction is Direction.UNI:
            hidden *= 2
        return hidden

    def merged_width(self, hidden: int) -> int:
        """Channel width after merging the axis outputs, for an effective hidden size."""
        per_axis = hidden * (2 if self.direction is Direction.BI else 1)
        if self.active is Axes.BOTH and self.merge is Merge.CONCAT:
            return 2 * per_axis
        return per_axis


@dataclass
class BiLSTM2DLayer:
    channels: int
    hidden_size: int
    options: MixerOptions
    rnn_v: BiRNNParams | None
    rnn_h: BiRNNParams | None
    fc: Linear | None

    def __post_init__(self) -> None:
        self.check_widths()

    @classmethod
    def create(
        cls,
        channels: int,
        base_hidden: int,
        rng: np.random.Generator,
        options: MixerOptions | None = None,
        dtype: npt.DTypeLike = np.float32,
    ) -> BiLSTM2DLayer:
        """
        Build a layer for ``channels`` input channels.

        ``base_hidden`` is the stage's nominal D; the options scale it (see
        :meth:`MixerOptions.effective_hidden`).
        """
        options = options or MixerOptions()
        options.validate_for(channels, base_hidden)
        hidden = options.effective_hidden(base_hidden)
        bidirectional = options.direction is Direction.BI

        def make() -> BiRNNParams:
            return BiRNNParams.create(
                options.cell_kind, channels, hidden, rng, dtype, bidirectional=bidirectional
            )

        rnn_v = make() if options.active in (Axes.BOTH, Axes.VERTICAL) else None
        rnn_h = make() if options.active in (Axes.BOTH, Axes.HORIZONTAL) else None
        fc = None
        if options.use_fusion:
            fc = Linear.create(options.merged_width(hidden), channels, rng, dtype)
        return cls(channels, hidden, options, rnn_v, rnn_h, fc)

    @property
    def merged_width(self) -> int:
        return self.options.merged_width(self.hidden_size)

    def check_widths(self) -> None:
        """The fusion input width must equal the merged recurrent width."""
        axes = [p for p in (self.rnn_v, self.rnn_h) if p is not None]
        if not axes:
            raise ConfigError("BiLSTM2D layer needs at least one scan axis")
        for p in axes:
            if p.input_size != self.channels or p.hidden_size != self.hidden_size:
                raise ConfigError(
                    f"Recurrence C={p.input_size} D={p.hidden_size} does not match layer "
                    f"C={self.channels} D={self.hidden_size}"
                )
        per_axis = axes[0].output_size
        if len(axes) == 2 and self.options.merge is Merge.CONCAT:
            merged = 2 * per_axis
        else:
            merged = per_axis
        if merged != self.merged_width:
            raise ConfigError(f"Merged width {merged} disagrees with options ({self.merged_width})")
        if self.fc is None:
            if merged != self.channels:
                raise ConfigError(
                    f"Without fusion the merged width {merged} must equal C={self.channels}"
                )
        elif self.fc.in_features != merged or self.fc.out_features != self.channels:
            raise ConfigError(
                f"Inconsistent fc width: weight {self.fc.weight.shape} for merged width "
                f"{merged} and C={self.channels}"
            )

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        params: dict[str, Parameter] = {}
        if self.rnn_v is not None:
            params.update(self.rnn_v.named_parameters(join(prefix, "rnn_v")))
        if self.rnn_h is not None:
            params.update(self.rnn_h.named_parameters(join(prefix, "rnn_h")))
        if self.fc is not None:
            params.update(self.fc.named_parameters(join(prefix, "fc")))
        return params

    def __call__(self, x: Tensor) -> Tensor:
        return bilstm2d_forward(x, self)


def bilstm2d_forward(x: Tensor, layer: BiLSTM2DLayer) -> Tensor:
    """
    Mix tokens of ``x[H, W, C]`` (or batched ``x[B, H, W, C]``) along both axes.

    Columns are scanned top to bottom and back, rows left to right and back;
    the merged features are projected pointwise to ``C`` channels.
    """
    batched = x.ndim == 4
    if not batched:
        if x.ndim != 3:
            raise ShapeError(f"bilstm2d expects [H, W, C] or [B, H, W, C], got {x.shape}")
        x = reshape(x, (1, *x.shape))
    b, h, w, c = x.shape
    if c != layer.channels:
        raise ShapeError(f"bilstm2d: input has {c} channels, layer expects {layer.channels}")

    parts: list[Tensor] = []
    if layer.rnn_v is not None:
        cols = reshape(permute(x, (0, 2, 1, 3)), (b * w, h, c))
        v = birnn_batch(cols, layer.rnn_v)
        width = v.shape[-1]
        parts.append(permute(reshape(v, (b, w, h, width)), (0, 2, 1, 3)))
    if layer.rnn_h is not None:
        rows = reshape(x, (b * h, w, c))
        hz = birnn_batch(rows, layer.rnn_h)
        parts.append(reshape(hz, (b, h, w, hz.shape[-1])))

    if len(parts) == 1:
        merged = parts[0]
    elif layer.options.merge is Merge.ADD:
        merged = add(parts[0], parts[1])
    else:
        merged = concat_last(parts[0], parts[1])

    out = layer.fc(merged) if layer.fc is not None else merged
    if not batched:
        out = reshape(out, (h, w, layer.channels))
    return out


def bilstm2d_variant_forward(x: Tensor, layer: BiLSTM2DLayer) -> Tensor:
    """Forward pass for any option combination after re-checking the width bookkeeping."""
    layer.check_widths()
    return bilstm2d_forward(x, layer)


def input_gradient_support(
    fn: Callable[[Tensor], Tensor],
    h: int,
    w: int,
    c: int,
    dtype: npt.DTypeLike = np.float64,
    seed: int = 0,
) -> Array:
    """
    Boolean ``[H, W]`` mask of input positions the centre output depends on.

    ``fn`` maps ``[H, W, C]`` to ``[H, W, C']``; the probed scalar is the
    channel sum at ``(H // 2, W // 2)`` and the input is standard normal.
    """
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((h, w, c)), dtype=dtype)
    with Tape(track_parameters=False) as tape:
        tape.watch(x)
        out = fn(x)
        center = sum_(out[h // 2, w // 2])
    grad = backward(tape, center).of(x)
    return np.asarray(np.any(grad != 0, axis=-1))


def cross_mask(h: int, w: int) -> Array:
    """Centre row and centre column of an ``H×W`` grid."""
    mask = np.zeros((h, w), dtype=bool)
    mask[h // 2, :] = True
    mask[:, w // 2] = True
    return mask


def cross_support_check(
    layer: BiLSTM2DLayer | Sequence[BiLSTM2DLayer],
    h: int,
    w: int,
    c: int,
    seed: int = 0,
) -> bool:
    """
    True iff the centre output has exactly zero gradient off the centre cross.

    A sequence of layers is applied in order, which lets callers probe stacks.
    """
    layers = [layer] if isinstance(layer, BiLSTM2DLayer) else list(layer)
    if not layers:
        raise ConfigError("cross_support_check needs at least one layer")

    def stack(x: Tensor) -> Tensor:
        for lyr in layers:
            x = bilstm2d_forward(x, lyr)
        return x

    dtype = layers[0].rnn_v.forward.weight_ih.dtype if layers[0].rnn_v else np.float64
    support = input_gradient_support(stack, h, w, c, dtype=dtype, seed=seed)
    return not bool(np.any(support & ~cross_mask(h, w)))
