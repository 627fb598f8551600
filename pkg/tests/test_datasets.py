"""Tests for synthetic datasets and image folders."""

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from seqkit.datasets import Dataset, load_image_folder, make_bar_dataset, make_blob_dataset
from seqkit.errors import EmptySequenceError, FormatError, ShapeError


def save_png(path: Path, rgb: tuple[int, int, int], size: int = 20) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.new("RGB", (size, size), rgb).save(path)


class TestSynthetic:
    """Test the bar and blob tasks."""

    def test_bar_shapes_and_balance(self) -> None:
        """Test shapes, dtype and class balance."""
        data = make_bar_dataset(40, size=28, num_classes=4, seed=1)
        assert data.images.shape == (40, 28, 28, 3)
        assert data.images.dtype == np.float64
        assert np.bincount(data.labels).tolist() == [10, 10, 10, 10]
        assert data.class_names == ["horizontal", "vertical", "diagonal", "antidiagonal"]

    def test_bar_orientation(self) -> None:
        """Test that noiseless bars lie on the centre row or column."""
        data = make_bar_dataset(8, size=14, noise=0.0, seed=2)
        for img, label in zip(data.images, data.labels, strict=True):
            bright = img[..., 0] > 0.5
            if label == 0:
                assert bright[6:8].all() and bright.sum() == 2 * 14
            else:
                assert bright[:, 6:8].all() and bright.sum() == 2 * 14

    def test_deterministic(self) -> None:
        """Test that a seed fixes the dataset."""
        a = make_bar_dataset(10, seed=7, jitter=True)
        b = make_bar_dataset(10, seed=7, jitter=True)
        assert np.array_equal(a.images, b.images)
        assert np.array_equal(a.labels, b.labels)
        assert not np.array_equal(a.images, make_bar_dataset(10, seed=8, jitter=True).images)

    def test_blob(self) -> None:
        """Test blob colours follow the labels."""
        data = make_blob_dataset(12, num_classes=3, noise=0.0, seed=0, dtype=np.float32)
        assert data.images.dtype == np.float32
        for img, label in zip(data.images, data.labels, strict=True):
            assert int(np.argmax(img.sum(axis=(0, 1)))) == label

    @pytest.mark.parametrize("classes", [1, 5])
    def test_bar_class_range(self, classes: int) -> None:
        """Test the supported class counts."""
        with pytest.raises(ValueError):
            make_bar_dataset(10, num_classes=classes)

    def test_empty(self) -> None:
        """Test that at least one sample is required."""
        with pytest.raises(EmptySequenceError):
            make_blob_dataset(0)


class TestDataset:
    """Test the dataset container."""

    def test_label_count(self) -> None:
        """Test that labels must match the images."""
        with pytest.raises(ShapeError):
            Dataset(np.zeros((3, 2, 2, 1)), np.zeros(2, dtype=np.int64), 2)
        with pytest.raises(ShapeError):
            Dataset(np.zeros((3, 2, 2)), np.zeros(3, dtype=np.int64), 2)

    def test_batches(self) -> None:
        """Test ordered and shuffled batching."""
        data = make_bar_dataset(10, size=14)
        sizes = [len(y) for _, y in data.batches(4)]
        assert sizes == [4, 4, 2]
        shuffled = np.concatenate([y for _, y in data.batches(3, np.random.default_rng(0))])
        assert sorted(shuffled.tolist()) == sorted(data.labels.tolist())

    def test_split(self) -> None:
        """Test that a split partitions the samples."""
        data = make_bar_dataset(20, size=14)
        first, rest = data.split(0.25, seed=1)
        assert (len(first), len(rest)) == (5, 15)
        assert first.resolution == (14, 14)
        assert first.num_classes == 2 and rest.class_names == data.class_names


class TestImageFolder:
    """Test loading class sub-directories of images."""

    def test_load(self, tmp_path: Path) -> None:
        """Test labels from sorted directories and resizing to a multiple of 14."""
        save_png(tmp_path / "cat" / "a.png", (255, 0, 0), size=30)
        save_png(tmp_path / "cat" / "b.png", (255, 0, 0), size=16)
        save_png(tmp_path / "dog" / "c.png", (0, 0, 255), size=30)
        (tmp_path / "dog" / "notes.txt").write_text("skip me", encoding="utf-8")
        data = load_image_folder(tmp_path)
        assert data.class_names == ["cat", "dog"]
        assert data.labels.tolist() == [0, 0, 1]
        assert data.images.shape == (3, 28, 28, 3)
        assert data.images.dtype == np.float32
        assert np.allclose(data.images[2, ..., 2], 1.0)
        assert np.allclose(data.images[0, ..., 1], 0.0)

    def test_explicit_size(self, tmp_path: Path) -> None:
        """Test resizing to a requested side."""
        save_png(tmp_path / "x" / "a.png", (10, 20, 30))
        assert load_image_folder(tmp_path, size=15).resolution == (14, 14)

    def test_no_classes(self, tmp_path: Path) -> None:
        """Test a directory without class folders."""
        with pytest.raises(FormatError):
            load_image_folder(tmp_path)

    def test_no_images(self, tmp_path: Path) -> None:
        """Test class folders without images."""
        (tmp_path / "empty").mkdir()
        with pytest.raises(EmptySequenceError):
            load_image_folder(tmp_path)
