"""Served model wrappers.

Model specs:
  echo                      fixed-logit conformance fixture (no gradients)
  snapshot:PATH             rebuild a snapshot file in torch (classifier or
                            dual encoder); exact parity with the producer
  torchvision:NAME          pretrained torchvision classifier (needs local
                            weights)
  clip:HF_ID                pretrained dual encoder via transformers (needs
                            local weights); serves embed_image/embed_text

Gradients come from torch autograd on the input tensor; models run in
inference mode with gradient tracking enabled only for the input. Snapshot
models compute in float64 so answers match the producing implementation to
well below the 1e-5 parity tolerance.
"""

from __future__ import annotations

import json
import re
import struct

import numpy as np
import torch
import torch.nn.functional as F

from .protocol import PROTOCOL_VERSION, RequestError, decode_tensor, encode_tensor

SNAPSHOT_MAGIC = b"ROZM"
_TOKEN_RE = re.compile(r"[a-z0-9]+")


def read_snapshot(path):
    """Parse the length-prefixed f32 snapshot container."""
    with open(path, "rb") as f:
        if f.read(4) != SNAPSHOT_MAGIC:
            raise ValueError(f"{path}: not a model snapshot")
        (version,) = struct.unpack("<I", f.read(4))
        if version != 1:
            raise ValueError(f"{path}: unsupported snapshot version {version}")
        (mlen,) = struct.unpack("<I", f.read(4))
        manifest = json.loads(f.read(mlen).decode("utf-8"))
        params = {}
        for entry in manifest["params"]:
            (blen,) = struct.unpack("<I", f.read(4))
            arr = np.frombuffer(f.read(blen), dtype="<f4").astype(np.float64)
            params[entry["name"]] = torch.from_numpy(arr.reshape(entry["shape"]).copy())
    return manifest, params


class ServedModel:
    """Base class: handle_* methods answer protocol requests."""

    classes: list[str] = []
    has_input_gradient = False
    has_embeddings = False
    input_hwc = (1, 1, 3)
    model_id = "served"

    def handle_info(self, frame):
        h, w, c = self.input_hwc
        return {"protocol_version": PROTOCOL_VERSION,
                "classes": self.classes,
                "has_input_gradient": self.has_input_gradient,
                "has_embeddings": self.has_embeddings,
                "input": {"h": h, "w": w, "c": c},
                "model_id": self.model_id}

    def _image_from(self, frame) -> torch.Tensor:
        h, w, c = self.input_hwc
        try:
            arr = decode_tensor(frame["image"], shape=(c, h, w))
        except (KeyError, ValueError) as exc:
            raise RequestError("bad_request", f"bad image payload: {exc}") from exc
        return torch.from_numpy(np.clip(arr, 0.0, 1.0))


class EchoModel(ServedModel):
    """Three fixed logits; exercises protocol plumbing, nothing else."""

    classes = ["alpha", "beta", "gamma"]
    input_hwc = (2, 2, 3)
    model_id = "echo-fixed"
    LOGITS = np.array([0.1, 0.2, 0.7])

    def handle_logits(self, frame):
        self._image_from(frame)
        return {"logits": encode_tensor(self.LOGITS)}


class TorchFeedForward(ServedModel):
    """Affine/relu stack restored from a classifier snapshot."""

    has_input_gradient = True

    def __init__(self, manifest, params):
        spec = manifest["input"]
        self.input_hwc = (spec["h"], spec["w"], spec["c"])
        self.classes = manifest["class_names"]
        self.pool = manifest["pool"]
        self.params = params
        self.n_layers = sum(1 for k in params if k.startswith("w"))
        self.model_id = f"snapshot-feed-forward-{len(self.classes)}c"

    def _forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.pool > 1:
            x = F.avg_pool2d(x.unsqueeze(0), self.pool).squeeze(0)
        z = x.reshape(1, -1)
        for i in range(self.n_layers):
            z = z @ self.params[f"w{i}"] + self.params[f"b{i}"]
            if i < self.n_layers - 1:
                z = torch.relu(z)
        return z

    def handle_logits(self, frame):
        with torch.no_grad():
            z = self._forward(self._image_from(frame))
        return {"logits": encode_tensor(z[0].numpy())}

    def handle_grad_input(self, frame):
        x = self._image_from(frame).requires_grad_(True)
        z = self._forward(x)
        label = int(frame.get("label", 0))
        if not (0 <= label < len(self.classes)):
            raise RequestError("bad_request", f"label {label} out of range")
        loss = F.cross_entropy(z, torch.tensor([label]))
        loss.backward()
        g = x.grad.numpy()
        direction = frame.get("direction", "maximize")
        if direction == "minimize":
            g = -g
        elif direction != "maximize":
            raise RequestError("bad_request", f"bad direction {direction!r}")
        return {"grad": encode_tensor(g)}


class TorchDualEncoder(ServedModel):
    """Bag-of-token-embeddings text side plus MLP image trunk, restored
    from a dual-encoder snapshot; serves embeddings only."""

    has_embeddings = True

    def __init__(self, manifest, params):
        spec = manifest["input"]
        self.input_hwc = (spec["h"], spec["w"], spec["c"])
        self.pool = manifest["pool"]
        self.vocab = manifest["vocab"]
        self.index = {tok: i for i, tok in enumerate(self.vocab)}
        self.params = params
        self.n_trunk = sum(1 for k in params if k.startswith("iw"))
        self.model_id = f"snapshot-dual-encoder-v{len(self.vocab)}"

    def _encode_tokens(self, text: str) -> list[int]:
        ids = [self.index.get(t, 0) for t in _TOKEN_RE.findall(text.lower())]
        return ids or [0]

    def handle_embed_image(self, frame):
        x = self._image_from(frame)
        with torch.no_grad():
            if self.pool > 1:
                x = F.avg_pool2d(x.unsqueeze(0), self.pool).squeeze(0)
            z = x.reshape(1, -1)
            for i in range(self.n_trunk):
                z = z @ self.params[f"iw{i}"] + self.params[f"ib{i}"]
                if i < self.n_trunk - 1:
                    z = torch.relu(z)
            z = F.normalize(z, dim=1)
        return {"embedding": encode_tensor(z[0].numpy())}

    def handle_embed_text(self, frame):
        if "text" not in frame:
            raise RequestError("bad_request", "embed_text needs a 'text' field")
        ids = self._encode_tokens(str(frame["text"]))
        with torch.no_grad():
            bag = self.params["emb"][ids].mean(dim=0, keepdim=True)
            z = bag @ self.params["tw"] + self.params["tb"]
            z = F.normalize(z, dim=1)
        return {"embedding": encode_tensor(z[0].numpy())}


class TorchvisionClassifier(ServedModel):
    """Pretrained torchvision classifier; gradients via autograd."""

    has_input_gradient = True

    def __init__(self, name: str):
        import torchvision.models as tvm
        weights = tvm.get_model_weights(name).DEFAULT
        self.net = tvm.get_model(name, weights=weights).eval()
        self.classes = list(weights.meta["categories"])
        self.input_hwc = (224, 224, 3)
        self.model_id = f"torchvision-{name}"
        t = weights.transforms()
        self.mean = torch.tensor(t.mean).view(3, 1, 1)
        self.std = torch.tensor(t.std).view(3, 1, 1)

    def _forward(self, x: torch.Tensor) -> torch.Tensor:
        normed = (x - self.mean) / self.std
        return self.net(normed.unsqueeze(0).float())

    def handle_logits(self, frame):
        with torch.no_grad():
            z = self._forward(self._image_from(frame))
        return {"logits": encode_tensor(z[0].detach().numpy())}

    def handle_grad_input(self, frame):
        x = self._image_from(frame).requires_grad_(True)
        loss = F.cross_entropy(self._forward(x),
                               torch.tensor([int(frame.get("label", 0))]))
        loss.backward()
        g = x.grad.numpy()
        if frame.get("direction", "maximize") == "minimize":
            g = -g
        return {"grad": encode_tensor(g)}


class HFCLIPEncoder(ServedModel):
    """Pretrained vision-language dual encoder via transformers; serves
    unit-norm image/text embeddings for client-side zero-shot synthesis
    (e.g. ensembling many prompts per class over the embedding space)."""

    has_embeddings = True

    def __init__(self, hf_id: str):
        from transformers import CLIPModel, CLIPProcessor
        self.model = CLIPModel.from_pretrained(hf_id).eval()
        self.processor = CLIPProcessor.from_pretrained(hf_id)
        size = self.processor.image_processor.crop_size
        if isinstance(size, int):  # older processors use a bare int
            size = {"height": size, "width": size}
        self.input_hwc = (size["height"], size["width"], 3)
        self.model_id = f"clip-{hf_id}"

    def handle_embed_image(self, frame):
        x = self._image_from(frame)
        arr = (x.numpy() * 255).astype(np.uint8).transpose(1, 2, 0)
        inputs = self.processor(images=arr, return_tensors="pt")
        with torch.no_grad():
            e = self.model.get_image_features(**inputs)
            e = F.normalize(e, dim=1)
        return {"embedding": encode_tensor(e[0].numpy())}

    def handle_embed_text(self, frame):
        inputs = self.processor(text=[str(frame["text"])], return_tensors="pt",
                                padding=True)
        with torch.no_grad():
            e = self.model.get_text_features(**inputs)
            e = F.normalize(e, dim=1)
        return {"embedding": encode_tensor(e[0].numpy())}


def load_model(spec: str) -> ServedModel:
    if spec == "echo":
        return EchoModel()
    if spec.startswith("snapshot:"):
        manifest, params = read_snapshot(spec.split(":", 1)[1])
        if manifest["kind"] == "feed_forward":
            return TorchFeedForward(manifest, params)
        if manifest["kind"] == "dual_encoder":
            return TorchDualEncoder(manifest, params)
        raise ValueError(f"snapshot kind {manifest['kind']!r} not servable")
    if spec.startswith("torchvision:"):
        return TorchvisionClassifier(spec.split(":", 1)[1])
    if spec.startswith("clip:"):
        return HFCLIPEncoder(spec.split(":", 1)[1])
    raise ValueError(f"unknown model spec {spec!r}")
