"""
On-disk formats for seqkit.

- SQTN tensor files: magic ``SQTN``, u8 version, u8 dtype (0 = f32, 1 = f64),
  u8 rank, ``rank`` little-endian u64 extents, then the row-major payload.
- Checkpoint directories: ``manifest.json`` plus one SQTN file per tensor.
- Dataset directories: ``index.txt`` with ``<tensor path> <label>`` lines.
- Metrics history CSV and binary PGM renders.
"""

from __future__ import annotations

import csv
import json
import struct
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
from PIL import Image
from pydantic import BaseModel, ValidationError

from seqkit.errors import FormatError
from seqkit.logger import get_logger
from seqkit.tensor import Array

if TYPE_CHECKING:
    from seqkit.models import ModelConfig
    from seqkit.sequencer import Model

MAGIC = b"SQTN"
VERSION = 1
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_HEADER = struct.Struct("<4sBBB")

CHECKPOINT_FORMAT = "seqkit-checkpoint"
MANIFEST_NAME = "manifest.json"
INDEX_NAME = "index.txt"
HISTORY_FIELDS = ("epoch", "lr", "train_loss", "train_acc", "eval_acc")


def encode_tensor(array: Any) -> bytes:
    """Serialize a float32/float64 array as an SQTN blob."""
    arr = np.asarray(array)
    if arr.dtype not in _DTYPE_CODES:
        arr = arr.astype(np.float64)
    code = _DTYPE_CODES[arr.dtype]
    header = _HEADER.pack(MAGIC, VERSION, code, arr.ndim)
    extents = struct.pack(f"<{arr.ndim}Q", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=_CODE_DTYPES[code]).tobytes()
    return header + extents + payload


def decode_tensor(blob: bytes) -> Array:
    """Parse an SQTN blob; malformed input raises FormatError."""
    if len(blob) < _HEADER.size:
        raise FormatError("SQTN blob is shorter than its header")
    magic, version, code, rank = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"Bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"Unsupported SQTN version {version}")
    if code not in _CODE_DTYPES:
        raise FormatError(f"Unknown SQTN dtype code {code}")
    offset = _HEADER.size
    extents_end = offset + 8 * rank
    if len(blob) < extents_end:
        raise FormatError("SQTN blob truncated inside its extents")
    shape = struct.unpack_from(f"<{rank}Q", blob, offset)
    if any(extent < 1 for extent in shape):
        raise FormatError(f"SQTN extents must be >= 1, got {shape}")
    dtype = _CODE_DTYPES[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    payload = blob[extents_end:]
    if len(payload) != expected:
        raise FormatError(f"SQTN payload has {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))


def write_tensor(path: str | Path, array: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor(array))
    return path


def read_tensor(path: str | Path) -> Array:
    return decode_tensor(Path(path).read_bytes())


class CheckpointManifest(BaseModel):
    format: str = CHECKPOINT_FORMAT
    version: int = VERSION
    config: dict[str, Any]
    tensors: dict[str, str]


def _tensor_filename(name: str) -> str:
    return f"{name}.sqtn"


def save_checkpoint(directory: str | Path, model: Model) -> Path:
    """Write every named parameter plus a manifest holding the model config."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tensors: dict[str, str] = {}
    for name, param in model.named_parameters().items():
        filename = _tensor_filename(name)
        write_tensor(directory / filename, param.data)
        tensors[name] = filename
    manifest = CheckpointManifest(config=model.config.model_dump(mode="json"), tensors=tensors)
    (directory / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    get_logger().debug("Saved %d tensors to %s", len(tensors), directory)
    return directory


def read_manifest(directory: str | Path) -> CheckpointManifest:
    path = Path(directory) / MANIFEST_NAME
    try:
        manifest = CheckpointManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise FormatError(f"Invalid checkpoint manifest {path}: {e}") from e
    if manifest.format != CHECKPOINT_FORMAT or manifest.version != VERSION:
        raise FormatError(f"{path} is not a version {VERSION} seqkit checkpoint")
    return manifest


def checkpoint_config(directory: str | Path) -> ModelConfig:
    """Model config stored alongside a checkpoint."""
    from seqkit.models import ModelConfig

    manifest = read_manifest(directory)
    try:
        return ModelConfig.model_validate(manifest.config)
    except ValidationError as e:
        raise FormatError(f"Checkpoint config is invalid: {e}") from e


def load_checkpoint(directory: str | Path, model: Model) -> Model:
    """
    Replace ``model``'s parameter values with the checkpoint's.

    The manifest must name exactly the model's tensors with matching shapes.
    """
    directory = Path(directory)
    manifest = read_manifest(directory)
    params = model.named_parameters()
    missing = sorted(set(params) - set(manifest.tensors))
    extra = sorted(set(manifest.tensors) - set(params))
    if missing or extra:
        raise FormatError(
            f"Checkpoint does not match the model: missing {missing[:5]}, unexpected {extra[:5]}"
        )
    loaded: dict[str, Array] = {}
    for name, param in params.items():
        arr = read_tensor(directory / manifest.tensors[name])
        if arr.shape != param.shape:
            raise FormatError(f"{name}: checkpoint shape {arr.shape} != model shape {param.shape}")
        loaded[name] = arr
    for name, arr in loaded.items():
        params[name].assign(arr)
    return model


def read_dataset_index(directory: str | Path) -> tuple[Array, Array]:
    """
    Load ``(images[N, H, W, C], labels[N])`` from a dataset directory.

    Blank lines and ``#`` comments in ``index.txt`` are ignored; every image
    must have the same shape.
    """
    directory = Path(directory)
    index_path = directory / INDEX_NAME
    images: list[Array] = []
    labels: list[int] = []
    for lineno, raw in enumerate(index_path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.rsplit(maxsplit=1)
        if len(parts) != 2:
            raise FormatError(f"{index_path}:{lineno}: expected '<path> <label>'")
        try:
            label = int(parts[1])
        except ValueError:
            raise FormatError(
                f"{index_path}:{lineno}: label {parts[1]!r} is not an integer"
            ) from None
        img = read_tensor(directory / parts[0])
        if img.ndim != 3:
            raise FormatError(f"{index_path}:{lineno}: image must be [H, W, C], got {img.shape}")
        if images and img.shape != images[0].shape:
            raise FormatError(
                f"{index_path}:{lineno}: shape {img.shape} differs from {images[0].shape}"
            )
        images.append(img)
        labels.append(label)
    if not images:
        raise FormatError(f"{index_path} lists no images")
    return np.stack(images), np.asarray(labels, dtype=np.int64)


def write_dataset(directory: str | Path, images: Array, labels: Iterable[int]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, (img, label) in enumerate(zip(images, labels, strict=True)):
        name = f"img{i:05d}.sqtn"
        write_tensor(directory / name, img)
        lines.append(f"{name} {int(label)}")
    (directory / INDEX_NAME).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return directory


def write_history_csv(path: str | Path, rows: Iterable[Mapping[str, Any]]) -> Path:
    """Write epoch metrics; a missing ``eval_acc`` becomes an empty cell."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=HISTORY_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row[k]) for k in HISTORY_FIELDS})
    return path


def write_pgm(path: str | Path, pixels: Array) -> Path:
    """Write an 8-bit ``[H, W]`` grid as binary PGM (P5)."""
    arr = np.asarray(pixels)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise FormatError(f"PGM needs a 2-D uint8 grid, got {arr.dtype} {arr.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path, format="PPM")
    return path


def write_json(path: str | Path, data: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    return path
