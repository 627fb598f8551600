"""
Architecture descriptions and named presets.

A ``ModelConfig`` is a plain, validated description of a staged Sequencer
model; ``seqkit.sequencer.build_model`` turns it into parameters.
"""

from __future__ import annotations

from enum import Enum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from seqkit.bilstm2d import Axes, Direction, Merge, MixerOptions
from seqkit.errors import ConfigError
from seqkit.recurrent import CellKind


class Downsample(str, Enum):
    PATCH_EMBED = "patch_embed"
    POINTWISE_LINEAR = "pointwise_linear"


class BlockKind(str, Enum):
    SEQUENCER2D = "sequencer2d"
    VANILLA = "vanilla"


class StageSpec(BaseModel):
    """One stage: a downsampling/projection step followed by ``depth`` blocks."""

    model_config = ConfigDict(frozen=True)

    downsample: Downsample = Downsample.PATCH_EMBED
    patch_size: int = Field(default=1, ge=1)
    dim: int = Field(ge=1)
    hidden: int = Field(ge=1)
    mlp_ratio: float = Field(default=3.0, gt=0)
    depth: int = Field(default=1, ge=0)
    block_kind: BlockKind = BlockKind.SEQUENCER2D

    @model_validator(mode="after")
    def _pointwise_has_unit_stride(self) -> StageSpec:
        if self.downsample is Downsample.POINTWISE_LINEAR and self.patch_size != 1:
            raise ValueError("pointwise_linear stages must have patch_size 1")
        return self


class ModelConfig(BaseModel):
    """Staged architecture plus classifier and ablation options."""

    model_config = ConfigDict(frozen=True)

    name: str = "custom"
    stages: list[StageSpec] = Field(min_length=1)
    num_classes: int = Field(default=1000, ge=1)
    in_chans: int = Field(default=3, ge=1)
    use_positional_embedding: bool = False
    # Grid the positional table is sized for
    train_resolution: tuple[int, int] = (224, 224)
    options: MixerOptions = Field(default_factory=MixerOptions)
    # Uniform stochastic-depth probability for every residual branch
    drop_path: float = Field(default=0.0, ge=0.0, lt=1.0)
    ln_eps: float = Field(default=1e-6, gt=0)

    @model_validator(mode="after")
    def _check_stages(self) -> ModelConfig:
        if self.stages[0].downsample is not Downsample.PATCH_EMBED:
            raise ValueError("the first stage must start with a patch embedding")
        stride = self.total_stride
        for res in self.train_resolution:
            if res < 1 or res % stride:
                raise ValueError(
                    f"train_resolution {self.train_resolution} is not divisible by {stride}"
                )
        for i, stage in enumerate(self.stages):
            if stage.depth == 0:
                continue
            if stage.block_kind is BlockKind.VANILLA:
                if 2 * stage.hidden != stage.dim:
                    raise ValueError(
                        f"stage {i}: vanilla blocks need 2*hidden == dim, "
                        f"got hidden={stage.hidden} dim={stage.dim}"
                    )
            else:
                try:
                    self.options.validate_for(stage.dim, stage.hidden)
                except ConfigError as e:
                    raise ValueError(f"stage {i}: {e}") from e
        return self

    @property
    def total_depth(self) -> int:
        return sum(s.depth for s in self.stages)

    @property
    def total_stride(self) -> int:
        stride = 1
        for s in self.stages:
            stride *= s.patch_size
        return stride

    @property
    def pe_grid(self) -> tuple[int, int]:
        """Token grid right after the first embedding at the training resolution."""
        k = self.stages[0].patch_size
        return (self.train_resolution[0] // k, self.train_resolution[1] // k)

    def stride_at_block(self, block: int) -> int:
        """Cumulative patch stride at 1-based global block index ``block``."""
        if not 1 <= block <= self.total_depth:
            raise ConfigError(f"Block index {block} outside 1..{self.total_depth}")
        stride = 1
        seen = 0
        for s in self.stages:
            stride *= s.patch_size
            seen += s.depth
            if block <= seen:
                break
        return stride

    def with_overrides(
        self, options: dict[str, Any] | None = None, **fields: Any
    ) -> ModelConfig:
        """Copy with mixer options and top-level fields replaced, revalidated."""
        data = self.model_dump()
        if options:
            data["options"] = {**data["options"], **options}
        data.update(fields)
        try:
            return ModelConfig.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"Invalid model config: {e}") from e


def _stage(
    downsample: str, k: int, dim: int, hidden: int, depth: int, kind: str = "sequencer2d"
) -> StageSpec:
    return StageSpec(
        downsample=Downsample(downsample),
        patch_size=k,
        dim=dim,
        hidden=hidden,
        mlp_ratio=3.0,
        depth=depth,
        block_kind=BlockKind(kind),
    )


def _sequencer2d(
    name: str, depths: tuple[int, int, int, int], widths: tuple[int, int]
) -> ModelConfig:
    d1, d2 = widths
    return ModelConfig(
        name=name,
        stages=[
            _stage("patch_embed", 7, d1, d1 // 4, depths[0]),
            _stage("patch_embed", 2, d2, d2 // 4, depths[1]),
            _stage("pointwise_linear", 1, d2, d2 // 4, depths[2]),
            _stage("pointwise_linear", 1, d2, d2 // 4, depths[3]),
        ],
    )


def _vsequencer(name: str, hierarchical: bool, use_pe: bool = False) -> ModelConfig:
    if hierarchical:
        first = [
            _stage("patch_embed", 7, 192, 96, 4, "vanilla"),
            _stage("patch_embed", 2, 384, 192, 3, "vanilla"),
        ]
    else:
        first = [
            _stage("patch_embed", 14, 384, 192, 4, "vanilla"),
            _stage("pointwise_linear", 1, 384, 192, 3, "vanilla"),
        ]
    return ModelConfig(
        name=name,
        stages=[
            *first,
            _stage("pointwise_linear", 1, 384, 192, 8, "vanilla"),
            _stage("pointwise_linear", 1, 384, 192, 3, "vanilla"),
        ],
        use_positional_embedding=use_pe,
    )


def _build_presets() -> dict[str, ModelConfig]:
    s = _sequencer2d("sequencer2d_s", (4, 3, 8, 3), (192, 384))
    presets = {
        "sequencer2d_s": s,
        "sequencer2d_m": _sequencer2d("sequencer2d_m", (4, 3, 14, 3), (192, 384)),
        "sequencer2d_l": _sequencer2d("sequencer2d_l", (8, 8, 16, 4), (192, 384)),
        # 4/3 widths for the over-fitting study
        "sequencer2d_l_x1.3": _sequencer2d("sequencer2d_l_x1.3", (8, 8, 16, 4), (256, 512)),
        "vsequencer_s": _vsequencer("vsequencer_s", hierarchical=False),
        "vsequencer_s_h": _vsequencer("vsequencer_s_h", hierarchical=True),
        "vsequencer_s_pe": _vsequencer("vsequencer_s_pe", hierarchical=False, use_pe=True),
        "mini": ModelConfig(
            name="mini",
            stages=[
                _stage("patch_embed", 7, 16, 4, 1),
                _stage("patch_embed", 2, 16, 4, 1),
            ],
            num_classes=2,
            train_resolution=(28, 28),
        ),
    }
    ablations: dict[str, dict[str, Any]] = {
        "add": {"merge": Merge.ADD},
        "uni": {"direction": Direction.UNI},
        "vertical": {"active": Axes.VERTICAL},
        "horizontal": {"active": Axes.HORIZONTAL},
        "nofusion": {"use_fusion": False},
        "gru": {"cell_kind": CellKind.GRU},
        "rnn": {"cell_kind": CellKind.RNN},
        "2x": {"hidden_ratio": 2.0},
    }
    for suffix, options in ablations.items():
        name = f"sequencer2d_s_{suffix}"
        presets[name] = s.with_overrides(options=options, name=name)
    return presets


PRESETS: dict[str, ModelConfig] = _build_presets()


def normalize_preset_name(name: str) -> str:
    return name.strip().lower().replace("-", "_")


def preset_names() -> list[str]:
    return list(PRESETS)


def get_preset(name: str) -> ModelConfig:
    """Look up a preset; ``-`` and ``_`` are interchangeable in names."""
    key = normalize_preset_name(name)
    try:
        return PRESETS[key]
    except KeyError:
        raise ConfigError(
            f"Unknown preset {name!r}; choose one of: {', '.join(PRESETS)}"
        ) from None
