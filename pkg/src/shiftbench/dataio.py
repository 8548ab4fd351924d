"""Dataset persistence: PNG directory + manifest, raw tensors, CIFAR-10 binary.

On-disk dataset layout: a directory of 8-bit RGB PNG files plus a
`manifest.json` describing class names, entries and the generator that
produced them. A raw tensor alternative uses the "ROZT" container.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .data import Dataset, Image, LabeledExample

MANIFEST_VERSION = 1
TENSOR_MAGIC = b"ROZT"


def save_dataset(dirpath, dataset: Dataset, generator: dict | None = None) -> Path:
    """Write PNGs + manifest.json; returns the manifest path."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, ex in enumerate(dataset.examples):
        fname = f"{i:06d}.png"
        arr = np.transpose(ex.image.to_u8(), (1, 2, 0))  # HWC for PIL
        PILImage.fromarray(arr, mode="RGB").save(dirpath / fname)
        entry = {"file": fname, "label": int(ex.label)}
        if ex.target is not None:
            entry["target"] = int(ex.target)
        entries.append(entry)
    manifest = {
        "version": MANIFEST_VERSION,
        "name": dataset.name,
        "class_names": dataset.class_names,
        "entries": entries,
        "generator": generator or {},
        "content_hash": dataset.content_hash(),
    }
    path = dirpath / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def load_dataset(dirpath) -> tuple[Dataset, dict]:
    """Read a PNG-directory dataset back; verifies the stored content hash."""
    dirpath = Path(dirpath)
    manifest = json.loads((dirpath / "manifest.json").read_text())
    if manifest["version"] != MANIFEST_VERSION:
        raise ValueError(f"unsupported dataset manifest version {manifest['version']}")
    examples = []
    for entry in manifest["entries"]:
        arr = np.asarray(PILImage.open(dirpath / entry["file"]).convert("RGB"))
        img = Image.from_u8(np.transpose(arr, (2, 0, 1)))
        examples.append(LabeledExample(img, entry["label"], entry.get("target")))
    ds = Dataset(examples, manifest["class_names"], manifest.get("name", "dataset"))
    if ds.content_hash() != manifest["content_hash"]:
        raise ValueError(f"{dirpath}: content hash mismatch on reload")
    return ds, manifest


def write_tensor(path, arr: np.ndarray) -> None:
    """Raw float tensor container: magic, rank, dims, little-endian f32."""
    arr = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as f:
        f.write(TENSOR_MAGIC)
        f.write(struct.pack("<I", arr.ndim))
        for d in arr.shape:
            f.write(struct.pack("<I", d))
        f.write(arr.tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(4) != TENSOR_MAGIC:
            raise ValueError(f"{path}: not a raw tensor file (bad magic)")
        (rank,) = struct.unpack("<I", f.read(4))
        shape = struct.unpack(f"<{rank}I", f.read(4 * rank))
        data = np.frombuffer(f.read(), dtype="<f4")
    expected = int(np.prod(shape))
    if data.size != expected:
        raise ValueError(f"{path}: expected {expected} values, found {data.size}")
    return data.reshape(shape).astype(np.float64)


CIFAR10_CLASS_NAMES = ["airplane", "automobile", "bird", "cat", "deer",
                       "dog", "frog", "horse", "ship", "truck"]
_CIFAR_RECORD = 1 + 3072


def read_cifar10_batch(path, class_names=None, limit: int | None = None) -> Dataset:
    """Bit-exact reader for the CIFAR-10 binary format.

    Each record is 1 label byte followed by 3072 pixel bytes laid out as
    full R, G, B planes of a 32x32 image.
    """
    raw = Path(path).read_bytes()
    if len(raw) % _CIFAR_RECORD:
        raise ValueError(f"{path}: size {len(raw)} is not a whole number of records")
    n = len(raw) // _CIFAR_RECORD
    if limit is not None:
        n = min(n, limit)
    buf = np.frombuffer(raw, dtype=np.uint8)
    examples = []
    for i in range(n):
        rec = buf[i * _CIFAR_RECORD:(i + 1) * _CIFAR_RECORD]
        label = int(rec[0])
        pixels = rec[1:].reshape(3, 32, 32)
        examples.append(LabeledExample(Image.from_u8(pixels), label))
    return Dataset(examples, list(class_names or CIFAR10_CLASS_NAMES),
                   name=Path(path).stem)
