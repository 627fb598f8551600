"""Tests for the seqkit command line."""

import json
from pathlib import Path
from typing import Any

import pytest
from click.testing import CliRunner, Result

from seqkit import __version__
from seqkit.cli import cli, run
from seqkit.storage import read_tensor


@pytest.fixture
def workdir(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    """Empty working directory without settings files or SEQKIT_* variables."""
    for name in ("SEQKIT_THREADS", "SEQKIT_DTYPE", "SEQKIT_SEED", "SEQKIT_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path / "xdg"))
    monkeypatch.chdir(tmp_path)
    return tmp_path


def invoke(*args: str) -> Result:
    return CliRunner().invoke(cli, ["--log-level", "ERROR", *args])


def output(result: Result) -> Any:
    assert result.exit_code == 0, result.output
    return json.loads(result.stdout)


class TestDescribe:
    """Test architecture and cost commands."""

    def test_describe(self, workdir: Path) -> None:
        """Test the stage table of the small preset."""
        data = output(invoke("describe", "--preset", "sequencer2d-s"))
        assert data["name"] == "sequencer2d_s"
        assert data["params"] == 27_651_688
        assert [s["depth"] for s in data["stages"]] == [4, 3, 8, 3]
        assert data["options"]["merge"] == "concat"

    def test_describe_ablation_flags(self, workdir: Path) -> None:
        """Test that mixer flags change the effective hidden size."""
        data = output(invoke("describe", "-p", "sequencer2d-s", "--active", "vertical"))
        assert data["options"]["active"] == "vertical"
        assert data["stages"][0]["effective_hidden"] == 96

    def test_count_params(self, workdir: Path) -> None:
        """Test exact parameter counts with and without breakdown."""
        data = output(invoke("count-params", "--preset", "sequencer2d-s"))
        assert data == {"model": "sequencer2d_s", "params": 27_651_688}
        full = output(invoke("count-params", "-p", "mini", "--breakdown"))
        assert sum(full["breakdown"].values()) == full["params"]

    def test_count_flops(self, workdir: Path) -> None:
        """Test FLOPs at the default and a larger resolution."""
        base = output(invoke("count-flops", "-p", "sequencer2d-s"))
        assert base["resolution"] == [224, 224]
        assert base["flops"] == pytest.approx(8.4e9, rel=0.1)
        big = output(invoke("count-flops", "-p", "sequencer2d-s", "-r", "448x448"))
        assert big["flops"] == pytest.approx(4 * base["flops"], rel=0.02)

    def test_cost_table(self, workdir: Path) -> None:
        """Test selected rows of the cost table."""
        rows = output(invoke("cost-table", "-p", "sequencer2d-s", "-p", "sequencer2d-m"))
        assert [r["model"] for r in rows] == ["sequencer2d_s", "sequencer2d_m"]
        assert all("flops" in r for r in rows)

    def test_config_file(self, workdir: Path) -> None:
        """Test a model config file in place of a preset."""
        path = workdir / "model.yaml"
        path.write_text("preset: mini\nnum_classes: 5\n", encoding="utf-8")
        data = output(invoke("describe", "--config", str(path)))
        assert data["num_classes"] == 5

    def test_preset_and_config(self, workdir: Path) -> None:
        """Test that --preset and --config exclude each other."""
        path = workdir / "model.yaml"
        path.write_text("preset: mini\n", encoding="utf-8")
        assert invoke("describe", "-p", "mini", "--config", str(path)).exit_code == 1

    def test_unknown_preset(self, workdir: Path) -> None:
        """Test that an unknown preset is a validation failure."""
        assert invoke("describe", "-p", "sequencer9d").exit_code == 1


class TestForward:
    """Test the forward command."""

    def test_random_images(self, workdir: Path) -> None:
        """Test logits of a fresh model on random images."""
        data = output(invoke("forward", "-p", "mini", "--images", "random:2"))
        assert data["logits_shape"] == [2, 2]
        assert data["logits"] == [[0.0, 0.0], [0.0, 0.0]]
        assert data["top1"] == [0, 0]

    def test_out_file(self, workdir: Path) -> None:
        """Test writing logits to a tensor file."""
        data = output(
            invoke("forward", "-p", "mini", "--images", "random:3", "--out", "logits.sqtn")
        )
        assert "logits" not in data
        assert read_tensor(workdir / "logits.sqtn").shape == (3, 2)

    def test_other_resolution(self, workdir: Path) -> None:
        """Test a resolution other than the training one."""
        data = output(invoke("forward", "-p", "mini", "-r", "42x56"))
        assert data["resolution"] == [42, 56]

    def test_unsupported_resolution(self, workdir: Path) -> None:
        """Test that non-multiples of the stride fail validation."""
        assert invoke("forward", "-p", "mini", "-r", "29x29").exit_code == 1

    def test_bad_image_source(self, workdir: Path) -> None:
        """Test malformed and missing image sources."""
        assert invoke("forward", "-p", "mini", "--images", "random:x").exit_code == 1
        assert invoke("forward", "-p", "mini", "--images", "missing").exit_code == 2

    def test_bad_resolution_text(self, workdir: Path) -> None:
        """Test that an unparsable resolution is a usage error."""
        assert invoke("forward", "-p", "mini", "-r", "big").exit_code == 2


class TestGradCheck:
    """Test the gradient check command."""

    def test_passes(self, workdir: Path) -> None:
        """Test that the mini model passes."""
        data = output(invoke("grad-check", "--batch", "1", "--max-coords", "3", "--seed", "7"))
        assert data["passed"] is True
        assert data["max_rel_error"] < 1e-4
        assert data["checked_coords"] > 0

    def test_fails_below_tolerance(self, workdir: Path) -> None:
        """Test that an impossible tolerance exits with status 1."""
        result = invoke("grad-check", "--batch", "1", "--max-coords", "2", "--tolerance", "1e-30")
        assert result.exit_code == 1
        assert json.loads(result.stdout)["passed"] is False


class TestERF:
    """Test receptive-field rendering."""

    def test_single_block(self, workdir: Path) -> None:
        """Test the map, tensor and metadata files of one block."""
        data = output(invoke("erf", "-p", "mini", "--block", "1", "--images", "random:2"))
        assert data["block"] == 1
        assert data["stride"] == 7
        assert data["n_images"] == 2
        for suffix in (".pgm", ".sqtn", ".json"):
            assert (workdir / f"erf{suffix}").exists()
        assert read_tensor(workdir / "erf.sqtn").shape == (28, 28)

    def test_all_blocks(self, workdir: Path) -> None:
        """Test one map per block with numbered file names."""
        data = output(
            invoke("erf", "-p", "mini", "--block", "all", "--images", "random:1", "-o", "m.pgm")
        )
        assert [d["block"] for d in data] == [1, 2]
        assert (workdir / "m_block01.pgm").exists()
        assert (workdir / "m_block02.pgm").exists()

    @pytest.mark.parametrize("block", ["0", "3", "first"])
    def test_bad_block(self, workdir: Path, block: str) -> None:
        """Test block indices outside the model."""
        assert invoke("erf", "-p", "mini", "--block", block).exit_code == 1


class TestTraining:
    """Test training and evaluation commands."""

    def test_train_then_eval(self, workdir: Path) -> None:
        """Test that a trained checkpoint can be evaluated."""
        args = ["--samples", "32", "--epochs", "2", "--lr", "1e-2", "--checkpoint", "ckpt"]
        trained = output(invoke("train", *args, "--out", "history.csv"))
        assert len(trained["history"]) == 2
        assert trained["train_config"]["base_lr"] == 1e-2
        assert (workdir / "history.csv").read_text(encoding="utf-8").startswith("epoch,")
        evaluated = output(invoke("eval", "--checkpoint", "ckpt", "--samples", "16"))
        assert evaluated["model"] == "mini"
        assert 0.0 <= evaluated["accuracy"] <= 1.0

    def test_default_learning_rate(self, workdir: Path) -> None:
        """Test that the base rate scales with the batch size."""
        args = ["--samples", "8", "--epochs", "1", "--batch-size", "8", "--eval-split", "0.25"]
        data = output(invoke("train", *args))
        assert data["train_config"]["base_lr"] == pytest.approx(8 / 512 * 5e-4)
        assert data["samples"] == 6
        assert data["history"][0]["eval_acc"] is not None

    def test_checkpoint_architecture_is_fixed(self, workdir: Path) -> None:
        """Test that mixer flags cannot alter a loaded checkpoint."""
        output(invoke("train", "--samples", "8", "--epochs", "1", "--checkpoint", "ckpt"))
        result = invoke("forward", "--checkpoint", "ckpt", "--merge", "add")
        assert result.exit_code == 1

    def test_missing_checkpoint(self, workdir: Path) -> None:
        """Test that a missing checkpoint is an I/O failure."""
        assert invoke("eval", "--checkpoint", "nowhere").exit_code == 2

    def test_optimizer_flags(self, workdir: Path) -> None:
        """Test that AdamW and warmup flags reach the training settings."""
        args = ["--samples", "8", "--epochs", "1", "--beta1", "0.8", "--beta2", "0.99"]
        data = output(invoke("train", *args, "--adam-eps", "1e-6", "--warmup-lr", "1e-5"))
        settings = data["train_config"]
        assert settings["beta1"] == 0.8
        assert settings["beta2"] == 0.99
        assert settings["eps"] == 1e-6
        assert settings["warmup_lr"] == 1e-5

    def test_invalid_optimizer_flag(self, workdir: Path) -> None:
        """Test that an out-of-range beta is a configuration error."""
        args = ["--samples", "8", "--epochs", "1", "--beta1", "1.0"]
        assert invoke("train", *args).exit_code == 1


class TestReproducibility:
    """Test that repeated runs with the default seed write identical files."""

    def test_erf_files(self, workdir: Path) -> None:
        """Test byte-identical ERF outputs across two runs."""
        names = ("a.pgm", "a.sqtn", "a.json")
        output(invoke("erf", "-p", "mini", "--images", "random:2", "-o", "a.pgm"))
        first = [(workdir / n).read_bytes() for n in names]
        output(invoke("erf", "-p", "mini", "--images", "random:2", "-o", "a.pgm"))
        assert [(workdir / n).read_bytes() for n in names] == first

    def test_train_history(self, workdir: Path) -> None:
        """Test byte-identical training histories across two runs."""
        args = ["train", "-p", "mini", "--samples", "16", "--epochs", "1", "--out", "h.csv"]
        first_run = invoke(*args)
        first = (workdir / "h.csv").read_bytes()
        second_run = invoke(*args)
        assert (workdir / "h.csv").read_bytes() == first
        assert output(first_run) == output(second_run)


class TestEntryPoint:
    """Test global options and the run() wrapper."""

    def test_version(self, workdir: Path) -> None:
        """Test --version."""
        result = CliRunner().invoke(cli, ["--version"])
        assert result.exit_code == 0
        assert __version__ in result.output

    def test_threads_usage_error(self, workdir: Path) -> None:
        """Test that --threads must be positive."""
        assert invoke("--threads", "0", "describe").exit_code == 2
        assert run(["--threads", "0", "describe"]) == 1

    def test_run_exit_codes(self, workdir: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Test exit codes returned by run()."""
        assert run(["--log-level", "ERROR", "count-params", "-p", "mini"]) == 0
        assert json.loads(capsys.readouterr().out)["model"] == "mini"
        assert run(["--log-level", "ERROR", "forward", "-p", "mini", "-r", "15"]) == 1
        assert run(["--log-level", "ERROR", "eval", "--checkpoint", "nowhere"]) == 2

    def test_settings_file(self, workdir: Path) -> None:
        """Test a settings file with float64 precision."""
        path = workdir / "s.toml"
        path.write_text('[runtime]\ndtype = "float64"\nseed = 3\n', encoding="utf-8")
        result = CliRunner().invoke(
            cli, ["--settings", str(path), "--log-level", "ERROR", "forward", "-p", "mini"]
        )
        assert output(result)["n_images"] == 1
