"""Tests for architecture configs and presets."""

import pytest
from pydantic import ValidationError

from seqkit.bilstm2d import Axes, Merge
from seqkit.errors import ConfigError
from seqkit.models import (
    PRESETS,
    BlockKind,
    Downsample,
    ModelConfig,
    StageSpec,
    get_preset,
    normalize_preset_name,
    preset_names,
)
from seqkit.recurrent import CellKind


class TestPresets:
    """Test the named architectures."""

    @pytest.mark.parametrize(
        ("name", "depths"),
        [
            ("sequencer2d_s", (4, 3, 8, 3)),
            ("sequencer2d_m", (4, 3, 14, 3)),
            ("sequencer2d_l", (8, 8, 16, 4)),
        ],
    )
    def test_sequencer2d_depths(self, name: str, depths: tuple[int, ...]) -> None:
        """Test per-stage depths and total stride of the 2D presets."""
        cfg = get_preset(name)
        assert tuple(s.depth for s in cfg.stages) == depths
        assert cfg.total_depth == sum(depths)
        assert cfg.total_stride == 14

    def test_sequencer2d_s_layout(self) -> None:
        """Test widths, hidden sizes and downsampling of the small preset."""
        stages = get_preset("sequencer2d_s").stages
        assert [s.patch_size for s in stages] == [7, 2, 1, 1]
        assert [s.dim for s in stages] == [192, 384, 384, 384]
        assert [s.hidden for s in stages] == [48, 96, 96, 96]
        assert [s.downsample for s in stages[2:]] == [Downsample.POINTWISE_LINEAR] * 2
        assert all(s.mlp_ratio == 3.0 for s in stages)

    def test_vsequencer(self) -> None:
        """Test the flat-sequence presets."""
        cfg = get_preset("vsequencer_s")
        assert cfg.stages[0].patch_size == 14
        assert cfg.stages[0].dim == 384 and cfg.stages[0].hidden == 192
        assert all(s.block_kind is BlockKind.VANILLA for s in cfg.stages)
        hier = get_preset("vsequencer_s_h")
        assert [s.patch_size for s in hier.stages] == [7, 2, 1, 1]

    def test_positional_variant(self) -> None:
        """Test the positional-table preset grid."""
        cfg = get_preset("vsequencer_s_pe")
        assert cfg.use_positional_embedding
        assert cfg.pe_grid == (16, 16)

    def test_ablation_presets(self) -> None:
        """Test that ablation presets only change mixer options."""
        assert get_preset("sequencer2d_s_add").options.merge is Merge.ADD
        assert get_preset("sequencer2d_s_vertical").options.active is Axes.VERTICAL
        assert get_preset("sequencer2d_s_gru").options.cell_kind is CellKind.GRU
        assert get_preset("sequencer2d_s_nofusion").options.use_fusion is False
        base = get_preset("sequencer2d_s")
        assert get_preset("sequencer2d_s_rnn").stages == base.stages

    def test_mini(self) -> None:
        """Test the desk-scale preset."""
        cfg = get_preset("mini")
        assert cfg.num_classes == 2
        assert cfg.train_resolution == (28, 28)
        assert cfg.total_stride == 14

    def test_name_normalization(self) -> None:
        """Test that dashes and case are ignored."""
        assert normalize_preset_name(" Sequencer2D-S ") == "sequencer2d_s"
        assert get_preset("sequencer2d-l") is PRESETS["sequencer2d_l"]

    def test_unknown_preset(self) -> None:
        """Test that unknown names list the choices."""
        with pytest.raises(ConfigError, match="sequencer2d_s"):
            get_preset("sequencer3d")

    def test_preset_names(self) -> None:
        """Test that every listed preset resolves."""
        names = preset_names()
        assert "mini" in names and "sequencer2d_l_x1.3" in names
        for name in names:
            assert get_preset(name).name == name


class TestStageSpec:
    """Test stage validation."""

    def test_pointwise_needs_unit_patch(self) -> None:
        """Test that pointwise stages cannot stride."""
        with pytest.raises(ValidationError):
            StageSpec(downsample=Downsample.POINTWISE_LINEAR, patch_size=2, dim=8, hidden=2)

    def test_positive_sizes(self) -> None:
        """Test that dim and hidden must be positive."""
        with pytest.raises(ValidationError):
            StageSpec(dim=0, hidden=2)

    def test_vanilla_width(self) -> None:
        """Test that vanilla blocks need 2*hidden == dim."""
        with pytest.raises(ValidationError):
            ModelConfig(
                stages=[StageSpec(patch_size=7, dim=8, hidden=3, block_kind=BlockKind.VANILLA)],
                train_resolution=(28, 28),
            )

    def test_train_resolution_divisible(self) -> None:
        """Test that the training grid must be a multiple of the stride."""
        with pytest.raises(ValidationError):
            ModelConfig(
                stages=[StageSpec(patch_size=7, dim=8, hidden=2)], train_resolution=(30, 30)
            )

    def test_zero_depth_stage_allowed(self) -> None:
        """Test that a stage without blocks skips mixer validation."""
        cfg = ModelConfig(stages=[StageSpec(patch_size=7, dim=8, hidden=3, depth=0)])
        assert cfg.total_depth == 0


class TestModelConfig:
    """Test derived quantities and overrides."""

    def test_stride_at_block(self) -> None:
        """Test cumulative strides by 1-based global block index."""
        cfg = get_preset("sequencer2d_s")
        assert cfg.stride_at_block(1) == 7
        assert cfg.stride_at_block(4) == 7
        assert cfg.stride_at_block(5) == 14
        assert cfg.stride_at_block(18) == 14

    def test_stride_at_block_range(self) -> None:
        """Test out-of-range block indices."""
        cfg = get_preset("sequencer2d_s")
        for block in (0, 19):
            with pytest.raises(ConfigError):
                cfg.stride_at_block(block)

    def test_with_overrides(self) -> None:
        """Test option and field overrides produce a new validated config."""
        base = get_preset("mini")
        cfg = base.with_overrides(options={"merge": "add"}, name="mini_add", num_classes=5)
        assert cfg.options.merge is Merge.ADD
        assert cfg.num_classes == 5 and cfg.name == "mini_add"
        assert base.options.merge is Merge.CONCAT

    def test_invalid_override(self) -> None:
        """Test that inconsistent overrides raise ConfigError."""
        with pytest.raises(ConfigError):
            get_preset("mini").with_overrides(options={"merge": "add", "active": "vertical"})

    def test_frozen(self) -> None:
        """Test that configs are immutable."""
        cfg = get_preset("mini")
        with pytest.raises(ValidationError):
            cfg.num_classes = 3  # type: ignore[misc]
