"""Protocol conformance suite run against a bridge peer.

Covers version negotiation, capability truthfulness, tensor round-trip
bit-exactness, error-code coverage, and (given a snapshot of the same
model) native-vs-bridge parity of logits and gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bridgeclient import (BridgeConnection, BridgeRemoteError,
                           connect_external_model, decode_tensor, encode_tensor)
from .data import Image
from .errors import BridgeError
from .rng import substream

PARITY_TOLERANCE = 1e-5


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def _probe_image(conn: BridgeConnection, seed: int) -> Image:
    spec = conn.info["input"]
    rng = substream(seed, "bridge-probe")
    return Image(rng.uniform(0.05, 0.95, size=(spec["c"], spec["h"], spec["w"])))


def run_conformance(endpoint, snapshot=None, timeout: float = 30.0):
    """Drive the peer through the protocol; returns a list of CheckResult."""
    results = []

    def check(name, fn):
        try:
            detail = fn() or ""
            results.append(CheckResult(name, True, detail))
        except Exception as exc:  # each check is independent
            results.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))

    conn = connect_external_model(endpoint, timeout=timeout)
    try:
        check("handshake-version", lambda: f"protocol_version={conn.info['protocol_version']}")

        def input_spec():
            spec = conn.info["input"]
            assert all(spec[k] >= 1 for k in ("h", "w", "c")), spec
            return f"input={spec}"
        check("info-input-spec", input_spec)

        def logits_roundtrip():
            clf = conn.classifier()
            img = _probe_image(conn, 0)
            z1 = clf.logits(img)
            z2 = clf.logits(img)
            assert np.all(np.isfinite(z1)), "non-finite logits"
            assert np.array_equal(z1, z2), "forward is not pure"
            return f"C={z1.size}"
        if conn.info.get("classes"):
            check("logits-pure-roundtrip", logits_roundtrip)

        def tensor_bits():
            img = _probe_image(conn, 1)
            payload = encode_tensor(img.data)
            back = decode_tensor(payload, shape=img.data.shape)
            assert np.array_equal(back.astype(np.float32),
                                  img.data.astype(np.float32)), "f32 round trip drifted"
            return "f32 round trip exact"
        check("tensor-bit-exact", tensor_bits)

        def gradient_capability():
            clf = conn.classifier()
            img = _probe_image(conn, 2)
            if conn.info.get("has_input_gradient"):
                g = clf.input_gradient(img, 0)
                assert g.shape == img.data.shape, "gradient shape mismatch"
                assert np.all(np.isfinite(g)), "non-finite gradient"
                return "gradient served"
            try:
                conn.request("grad_input", image=encode_tensor(img.data),
                             label=0, direction="maximize")
            except BridgeRemoteError as exc:
                assert exc.code == "unsupported", f"unexpected code {exc.code}"
                return "correctly refused"
            raise AssertionError("peer served gradients it never advertised")
        if conn.info.get("classes"):
            check("gradient-capability-truthful", gradient_capability)

        def embeddings():
            enc = conn.encoder()
            img = _probe_image(conn, 3)
            e_img = enc.embed_image(img)
            assert np.all(np.isfinite(e_img))
            assert abs(np.linalg.norm(e_img) - 1.0) <= 1e-3, "image embedding not unit norm"
            e_txt = enc.embed_text("a photo of a test pattern")
            assert e_txt.size == e_img.size, "embedding dimension mismatch"
            assert abs(np.linalg.norm(e_txt) - 1.0) <= 1e-3, "text embedding not unit norm"
            return f"d={e_img.size}"
        if conn.info.get("has_embeddings"):
            check("embeddings-roundtrip", embeddings)

        def bad_frame():
            reply = conn.send_raw_line("this is not json")
            assert reply.get("ok") is False and reply.get("code") == "bad_frame", reply
            conn.request("info")  # connection must survive
            return "bad_frame answered, connection alive"
        check("malformed-frame", bad_frame)

        def unsupported_method():
            try:
                conn.request("frobnicate")
            except BridgeRemoteError as exc:
                assert exc.code == "unsupported", f"unexpected code {exc.code}"
                return "unsupported answered"
            raise AssertionError("peer accepted an unknown method")
        check("unsupported-method", unsupported_method)

        if snapshot is not None:
            check("native-parity", lambda: _parity(conn, snapshot))
    finally:
        conn.close()
    return results


def _parity(conn: BridgeConnection, snapshot_path) -> str:
    from .models import load_classifier
    native = load_classifier(snapshot_path)
    remote = conn.classifier()
    assert remote.class_names == native.class_names, "class names differ"
    worst_z, worst_g = 0.0, 0.0
    for seed in range(5):
        img = _probe_image(conn, 100 + seed)
        worst_z = max(worst_z, float(np.abs(remote.logits(img) - native.logits(img)).max()))
        if remote.has_input_gradient:
            g_r = remote.input_gradient(img, seed % native.n_classes)
            g_n = native.input_gradient(img, seed % native.n_classes)
            worst_g = max(worst_g, float(np.abs(g_r - g_n).max()))
    assert worst_z <= PARITY_TOLERANCE, f"logit gap {worst_z:.2e}"
    assert worst_g <= PARITY_TOLERANCE, f"gradient gap {worst_g:.2e}"
    return f"max logit gap {worst_z:.1e}, max grad gap {worst_g:.1e}"
