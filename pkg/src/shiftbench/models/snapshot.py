"""Model snapshot files: magic "ROZM", then length-prefixed f32 blobs.

Layout: magic (4 bytes) | format version u32 LE | manifest length u32 LE |
manifest JSON (utf-8) | one length-prefixed little-endian f32 blob per
parameter, in manifest order. The manifest records parameter names/shapes
plus the architecture metadata needed to rebuild the model.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .encoder import DualEncoder, Tokenizer
from .nets import FeedForwardClassifier

MAGIC = b"ROZM"
VERSION = 1


def _write_blob(f, arr: np.ndarray) -> None:
    blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    f.write(struct.pack("<I", len(blob)))
    f.write(blob)


def _read_blob(f, shape) -> np.ndarray:
    (n,) = struct.unpack("<I", f.read(4))
    raw = f.read(n)
    if len(raw) != n:
        raise ValueError("snapshot truncated inside a parameter blob")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)


def save_snapshot(path, kind: str, meta: dict, params: dict[str, np.ndarray]) -> None:
    names = sorted(params)
    manifest = dict(meta)
    manifest["kind"] = kind
    manifest["params"] = [{"name": k, "shape": list(np.asarray(params[k]).shape)}
                          for k in names]
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for k in names:
            _write_blob(f, params[k])


def load_snapshot(path):
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: not a model snapshot (bad magic)")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        (mlen,) = struct.unpack("<I", f.read(4))
        manifest = json.loads(f.read(mlen).decode("utf-8"))
        params = {}
        for entry in manifest["params"]:
            params[entry["name"]] = _read_blob(f, entry["shape"])
    return manifest, params


def save_classifier(path, model: FeedForwardClassifier) -> None:
    h, w, c = model.input_hwc
    meta = {"input": {"h": h, "w": w, "c": c}, "pool": model.pool,
            "class_names": model.class_names}
    save_snapshot(path, "feed_forward", meta, model.weights)


def load_classifier(path) -> FeedForwardClassifier:
    manifest, params = load_snapshot(path)
    if manifest["kind"] != "feed_forward":
        raise ValueError(f"{path}: snapshot holds a {manifest['kind']}, not a classifier")
    spec = manifest["input"]
    return FeedForwardClassifier(params, (spec["h"], spec["w"], spec["c"]),
                                 manifest["class_names"], pool=manifest["pool"])


def save_encoder(path, encoder: DualEncoder) -> None:
    h, w, c = encoder.input_hwc
    meta = {"input": {"h": h, "w": w, "c": c}, "pool": encoder.pool,
            "vocab": encoder.tokenizer.vocab}
    save_snapshot(path, "dual_encoder", meta, encoder.params)


def load_encoder(path) -> DualEncoder:
    manifest, params = load_snapshot(path)
    if manifest["kind"] != "dual_encoder":
        raise ValueError(f"{path}: snapshot holds a {manifest['kind']}, not an encoder")
    spec = manifest["input"]
    params["log_tau"] = params["log_tau"].reshape(())
    return DualEncoder(params, Tokenizer(manifest["vocab"]),
                       (spec["h"], spec["w"], spec["c"]), pool=manifest["pool"])
