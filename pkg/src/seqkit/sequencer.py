"""
Sequencer models: patch embedding, residual blocks, stages and the classifier.

Parameter names follow dotted ``stage{S}.block{B}.<path>`` paths (0-based),
for example ``stage0.block0.bilstm2d.rnn_v.forward.weight_ih``. Block
indices used by analysis code are 1-based and global across stages.
"""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from seqkit.bilstm2d import Axes, BiLSTM2DLayer, Direction, bilstm2d_forward
from seqkit.errors import ConfigError, ResolutionError, ShapeError, UnsupportedResolutionError
from seqkit.layers import LayerNorm, Linear, Mlp, join
from seqkit.logger import get_logger
from seqkit.models import BlockKind, ModelConfig
from seqkit.recurrent import BiRNNParams, birnn_batch
from seqkit.tensor import Parameter, Tensor, add, mean, mul, permute, reshape

logger = get_logger()


@dataclass
class PatchEmbed:
    """Non-overlapping ``k×k`` patches flattened and projected to ``dim`` channels."""

    patch_size: int
    in_chans: int
    proj: Linear

    @classmethod
    def create(
        cls,
        patch_size: int,
        in_chans: int,
        dim: int,
        rng: np.random.Generator,
        dtype: npt.DTypeLike = np.float32,
    ) -> PatchEmbed:
        fan_in = patch_size * patch_size * in_chans
        return cls(patch_size, in_chans, Linear.create(fan_in, dim, rng, dtype))

    @property
    def dim(self) -> int:
        return self.proj.out_features

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        return self.proj.named_parameters(join(prefix, "proj"))

    def __call__(self, img: Tensor) -> Tensor:
        return patch_embed_forward(img, self)


def patch_embed_forward(img: Tensor, pe: PatchEmbed) -> Tensor:
    """
    Embed ``img[H, W, C]`` (or ``[B, H, W, C]``) into ``[H/k, W/k, d]``.

    Within a patch the flattened index of pixel ``(i, j)`` channel ``c`` is
    ``(i*k + j)*C + c``.
    """
    batched = img.ndim == 4
    x = img if batched else reshape(img, (1, *img.shape))
    if x.ndim != 4:
        raise ShapeError(f"patch embedding expects [H, W, C] or [B, H, W, C], got {img.shape}")
    b, h, w, c = x.shape
    k = pe.patch_size
    if c != pe.in_chans:
        raise ShapeError(f"patch embedding expects {pe.in_chans} channels, got {c}")
    if h % k or w % k:
        raise ResolutionError(
            f"Resolution {h}x{w} is not divisible by the patch size {k}", divisor=k
        )
    if k == 1:
        patches = x
    else:
        patches = reshape(x, (b, h // k, k, w // k, k, c))
        patches = permute(patches, (0, 1, 3, 2, 4, 5))
        patches = reshape(patches, (b, h // k, w // k, k * k * c))
    out = pe.proj(patches)
    return out if batched else reshape(out, out.shape[1:])


@dataclass
class SequencerBlock:
    """Pre-norm residual block: token mixer then channel MLP."""

    kind: BlockKind
    norm1: LayerNorm
    mixer: BiLSTM2DLayer | BiRNNParams
    norm2: LayerNorm
    mlp: Mlp
    drop_path: float = 0.0

    @property
    def dim(self) -> int:
        return self.norm1.gamma.shape[0]

    @property
    def mixer_name(self) -> str:
        return "bilstm2d" if self.kind is BlockKind.SEQUENCER2D else "bilstm"

    def named_parameters(self, prefix: str = "") -> dict[str, Parameter]:
        return {
            **self.norm1.named_parameters(join(prefix, "norm1")),
            **self.mixer.named_parameters(join(prefix, self.mixer_name)),
            **self.norm2.named_parameters(join(prefix, "norm2")),
            **self.mlp.named_parameters(join(prefix, "mlp")),
        }


@dataclass
class Stage:
    downsample: PatchEmbed
    blocks: list[SequencerBlock] = field(default_factory=list)
    kind: BlockKind = BlockKind.SEQUENCER2D


@dataclass
class Model:
    config: ModelConfig
    stages: list[Stage]
    head_norm: LayerNorm
    head: Linear
    pos_embed: Parameter | None = None

    def blocks(self) -> Iterator[SequencerBlock]:
        for stage in self.stages:
            yield from stage.blocks

    def named_parameters(self) -> dict[str, Parameter]:
        """Closed manifest: every tensor exactly once, in construction order."""
        params: dict[str, Parameter] = {}
        for s, stage in enumerate(self.stages):
            prefix = f"stage{s}"
            params.update(stage.downsample.named_parameters(join(prefix, "downsample")))
            if s == 0 and self.pos_embed is not None:
                params["pos_embed"] = self.pos_embed
            for b, blk in enumerate(stage.blocks):
                params.update(blk.named_parameters(f"{prefix}.block{b}"))
        params.update(self.head_norm.named_parameters("head_norm"))
        params.update(self.head.named_parameters("head"))
        ids = [id(p) for p in params.values()]
        if len(set(ids)) != len(ids):
            raise ConfigError("Parameter manifest is not closed: a tensor appears twice")
        return params

    def parameters(self) -> list[Parameter]:
        return list(self.named_parameters().values())


def _rnn_shapes(
    prefix: str, kind_gates: int, c: int, d: int, bidirectional: bool
) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    for direction in ("forward", "backward") if bidirectional else ("forward",):
        p = join(prefix, direction)
        shapes[f"{p}.weight_ih"] = (kind_gates * d, c)
        shapes[f"{p}.weight_hh"] = (kind_gates * d, d)
        shapes[f"{p}.bias_ih"] = (kind_gates * d,)
        shapes[f"{p}.bias_hh"] = (kind_gates * d,)
    return shapes


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """
    Name-to-shape manifest derived from the config alone.

    Used for cost accounting of large presets without allocating weights,
    and as an independent enumeration to check ``build_model`` against.
    """
    opts = cfg.options
    gates = opts.cell_kind.gates
    shapes: dict[str, tuple[int, ...]] = {}
    in_ch = cfg.in_chans
    for s, st in enumerate(cfg.stages):
        prefix = f"stage{s}"
        fan_in = st.patch_size * st.patch_size * in_ch
        shapes[f"{prefix}.downsample.proj.weight"] = (st.dim, fan_in)
        shapes[f"{prefix}.downsample.proj.bias"] = (st.dim,)
        if s == 0 and cfg.use_positional_embedding:
            shapes["pos_embed"] = (*cfg.pe_grid, st.dim)
        mlp_hidden = int(st.dim * st.mlp_ratio)
        for b in range(st.depth):
            bp = f"{prefix}.block{b}"
            shapes[f"{bp}.norm1.gamma"] = (st.dim,)
            shapes[f"{bp}.norm1.beta"] = (st.dim,)
            if st.block_kind is BlockKind.VANILLA:
                shapes.update(_rnn_shapes(f"{bp}.bilstm", gates, st.dim, st.hidden, True))
            else:
                hidden = opts.effective_hidden(st.hidden)
                bi = opts.direction is Direction.BI
                if opts.active in (Axes.BOTH, Axes.VERTICAL):
                    shapes.update(_rnn_shapes(f"{bp}.bilstm2d.rnn_v", gates, st.dim, hidden, bi))
                if opts.active in (Axes.BOTH, Axes.HORIZONTAL):
                    shapes.update(_rnn_shapes(f"{bp}.bilstm2d.rnn_h", gates, st.dim, hidden, bi))
                if opts.use_fusion:
                    shapes[f"{bp}.bilstm2d.fc.weight"] = (st.dim, opts.merged_width(hidden))
                    shapes[f"{bp}.bilstm2d.fc.bias"] = (st.dim,)
            shapes[f"{bp}.norm2.gamma"] = (st.dim,)
            shapes[f"{bp}.norm2.beta"] = (st.dim,)
            shapes[f"{bp}.mlp.fc1.weight"] = (mlp_hidden, st.dim)
            shapes[f"{bp}.mlp.fc1.bias"] = (mlp_hidden,)
            shapes[f"{bp}.mlp.fc2.weight"] = (st.dim, mlp_hidden)
            shapes[f"{bp}.mlp.fc2.bias"] = (st.dim,)
        in_ch = st.dim
    shapes["head_norm.gamma"] = (in_ch,)
    shapes["head_norm.beta"] = (in_ch,)
    shapes["head.weight"] = (cfg.num_classes, in_ch)
    shapes["head.bias"] = (cfg.num_classes,)
    return shapes


def build_model(
    cfg: ModelConfig,
    seed: int = 0,
    dtype: npt.DTypeLike = np.float32,
    zero_head: bool = True,
) -> Model:
    """
    Instantiate ``cfg`` deterministically from ``seed``.

    Linear layers draw from U(±1/sqrt(fan_in)), recurrences from
    U(±1/sqrt(D)), layer norms start at (1, 0) and the positional table at
    N(0, 0.02²). The classifier starts at zero unless ``zero_head`` is off.
    """
    rng = np.random.default_rng(seed)
    opts = cfg.options
    stages: list[Stage] = []
    pos_embed: Parameter | None = None
    in_ch = cfg.in_chans
    for s, st in enumerate(cfg.stages):
        embed = PatchEmbed.create(st.patch_size, in_ch, st.dim, rng, dtype)
        if s == 0 and cfg.use_positional_embedding:
            pos_embed = Parameter(rng.normal(0.0, 0.02, size=(*cfg.pe_grid, st.dim)), dtype=dtype)
        blocks: list[SequencerBlock] = []
        for _ in range(st.depth):
            norm1 = LayerNorm.create(st.dim, dtype, cfg.ln_eps)
            mixer: BiLSTM2DLayer | BiRNNParams
            if st.block_kind is BlockKind.VANILLA:
                mixer = BiRNNParams.create(opts.cell_kind, st.dim, st.hidden, rng, dtype)
            else:
                mixer = BiLSTM2DLayer.create(st.dim, st.hidden, rng, opts, dtype)
            norm2 = LayerNorm.create(st.dim, dtype, cfg.ln_eps)
            mlp = Mlp.create(st.dim, st.mlp_ratio, rng, dtype)
            blocks.append(SequencerBlock(st.block_kind, norm1, mixer, norm2, mlp, cfg.drop_path))
        stages.append(Stage(embed, blocks, st.block_kind))
        in_ch = st.dim
    head_norm = LayerNorm.create(in_ch, dtype, cfg.ln_eps)
    head = Linear.create(in_ch, cfg.num_classes, rng, dtype, zero=zero_head)
    model = Model(cfg, stages, head_norm, head, pos_embed)
    logger.debug(
        "Built %s: %d blocks, %d tensors", cfg.name, cfg.total_depth, len(model.named_parameters())
    )
    return model


def zero_residual_branches(model: Model) -> None:
    """Zero every branch's final projection so each block becomes the identity."""
    for blk in model.blocks():
        mixer = blk.mixer
        if isinstance(mixer, BiLSTM2DLayer) and mixer.fc is not None:
            targets = list(mixer.fc.named_parameters().values())
        else:
            targets = list(mixer.named_parameters().values())
        targets += list(blk.mlp.fc2.named_parameters().values())
        for p in targets:
            p.assign(np.zeros(p.shape))


def drop_path(
    branch: Tensor,
    prob: float,
    training: bool,
    rng: np.random.Generator | None,
) -> Tensor:
    """Zero the whole branch per sample with probability ``prob``; rescale survivors."""
    if not training or prob <= 0.0:
        return branch
    if rng is None:
        raise ConfigError("drop_path in training mode needs a random generator")
    keep = 1.0 - prob
    mask_shape = (branch.shape[0],) + (1,) * (branch.ndim - 1)
    mask = (rng.random(mask_shape) < keep).astype(branch.dtype) / keep
    return mul(branch, Tensor(mask, dtype=branch.dtype))


def _mix_tokens(x: Tensor, blk: SequencerBlock) -> Tensor:
    if isinstance(blk.mixer, BiLSTM2DLayer):
        return bilstm2d_forward(x, blk.mixer)
    if x.ndim == 2:
        n, d = x.shape
        out = birnn_batch(reshape(x, (1, n, d)), blk.mixer)
        return reshape(out, (n, out.shape[-1]))
    return birnn_batch(x, blk.mixer)


def _residual_block(
    x: Tensor,
    blk: SequencerBlock,
    training: bool,
    rng: np.random.Generator | None,
    drop_prob: float | None,
) -> Tensor:
    if x.shape[-1] != blk.dim:
        raise ShapeError(f"block expects width {blk.dim}, got input {x.shape}")
    p = blk.drop_path if drop_prob is None else drop_prob
    y = add(x, drop_path(_mix_tokens(blk.norm1(x), blk), p, training, rng))
    return add(y, drop_path(blk.mlp(blk.norm2(y)), p, training, rng))


def sequencer2d_block_forward(
    x: Tensor,
    blk: SequencerBlock,
    training: bool = False,
    rng: np.random.Generator | None = None,
    drop_prob: float | None = None,
) -> Tensor:
    """``y = x + DropPath(BiLSTM2D(LN(x)))``; ``out = y + DropPath(MLP(LN(y)))``."""
    if blk.kind is not BlockKind.SEQUENCER2D:
        raise ConfigError("sequencer2d_block_forward needs a Sequencer2D block")
    if x.ndim not in (3, 4):
        raise ShapeError(f"Sequencer2D block expects [H, W, d] or [B, H, W, d], got {x.shape}")
    return _residual_block(x, blk, training, rng, drop_prob)


def vanilla_block_forward(
    x: Tensor,
    blk: SequencerBlock,
    training: bool = False,
    rng: np.random.Generator | None = None,
    drop_prob: float | None = None,
) -> Tensor:
    """Residual block over a flattened token sequence ``[N, d]`` or ``[B, N, d]``."""
    if blk.kind is not BlockKind.VANILLA:
        raise ConfigError("vanilla_block_forward needs a vanilla block")
    if x.ndim not in (2, 3):
        raise ShapeError(f"vanilla block expects [N, d] or [B, N, d], got {x.shape}")
    return _residual_block(x, blk, training, rng, drop_prob)


def validate_resolution(cfg: ModelConfig, h: int, w: int) -> None:
    stride = cfg.total_stride
    if h < 1 or w < 1 or h % stride or w % stride:
        raise ResolutionError(
            f"Resolution {h}x{w} is not divisible by the model's downsampling factor {stride}",
            divisor=stride,
        )
    if cfg.use_positional_embedding and (h, w) != tuple(cfg.train_resolution):
        th, tw = cfg.train_resolution
        raise UnsupportedResolutionError(
            f"{cfg.name} has a learned positional embedding for {th}x{tw} inputs; "
            f"{h}x{w} is not supported",
            divisor=stride,
        )


def forward_features(
    model: Model,
    batch: Tensor,
    until_block: int | None = None,
    training: bool = False,
    rng: np.random.Generator | None = None,
    drop_prob: float | None = None,
) -> Tensor:
    """
    Run the trunk on ``batch[B, H, W, C]`` and return the ``[B, h, w, d]`` grid.

    With ``until_block`` (1-based, global) the output of that block is
    returned instead of the last stage's.
    """
    cfg = model.config
    if batch.ndim != 4:
        raise ShapeError(f"model expects [B, H, W, C] input, got {batch.shape}")
    if until_block is not None and not 1 <= until_block <= cfg.total_depth:
        raise ConfigError(f"Block index {until_block} outside 1..{cfg.total_depth}")
    validate_resolution(cfg, batch.shape[1], batch.shape[2])

    x = batch
    seen = 0
    for s, stage in enumerate(model.stages):
        x = patch_embed_forward(x, stage.downsample)
        if s == 0 and model.pos_embed is not None:
            x = add(x, model.pos_embed)
        if not stage.blocks:
            continue
        b, h, w, d = x.shape
        vanilla = stage.kind is BlockKind.VANILLA
        if vanilla:
            # Row-major token order
            x = reshape(x, (b, h * w, d))
        for blk in stage.blocks:
            seen += 1
            x = _residual_block(x, blk, training, rng, drop_prob)
            if seen == until_block:
                return reshape(x, (b, h, w, d)) if vanilla else x
        if vanilla:
            x = reshape(x, (b, h, w, d))
    return x


def model_forward(
    model: Model,
    batch: Tensor,
    training: bool = False,
    rng: np.random.Generator | None = None,
    drop_prob: float | None = None,
) -> Tensor:
    """Logits ``[B, num_classes]``: trunk, then layer norm, spatial mean and linear head."""
    feats = forward_features(model, batch, training=training, rng=rng, drop_prob=drop_prob)
    pooled = mean(model.head_norm(feats), axis=(1, 2))
    return model.head(pooled)


