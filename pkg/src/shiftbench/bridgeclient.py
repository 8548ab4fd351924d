"""Client for externally served models speaking the bridge protocol.

Frames are line-delimited JSON over a byte stream (subprocess stdio or
TCP). Requests carry a `method` plus flat fields; responses are
{ok:true, data:...} or {ok:false, code, message}. Tensor payloads are
base64 of little-endian float32, channel-major.

Endpoints: "tcp:HOST:PORT", "cmd:<shell command>", or an argv list.
One request is in flight per connection; handles serialize access, and
parallel evaluation should open independent connections.
"""

from __future__ import annotations

import base64
import json
import shlex
import socket
import subprocess
import threading

import numpy as np

from .data import Image
from .errors import (BridgeProtocolError, BridgeRemoteError,
                     BridgeTimeoutError, UnsupportedCapabilityError)
from .models.base import ClassifierModel

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 30.0


def encode_tensor(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f4").tobytes()).decode("ascii")


def decode_tensor(payload: str, shape=None) -> np.ndarray:
    arr = np.frombuffer(base64.b64decode(payload), dtype="<f4").astype(np.float64)
    return arr.reshape(shape) if shape is not None else arr


class _StdioTransport:
    def __init__(self, argv, timeout: float):
        self.timeout = timeout
        self.proc = subprocess.Popen(argv, stdin=subprocess.PIPE,
                                     stdout=subprocess.PIPE,
                                     stderr=subprocess.DEVNULL, text=True,
                                     bufsize=1)

    def send_line(self, line: str) -> None:
        if self.proc.poll() is not None:
            raise BridgeProtocolError("peer process exited")
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()

    def recv_line(self) -> str:
        # a watchdog timer guards against a silent peer
        timer = threading.Timer(self.timeout, self.proc.kill)
        timer.start()
        try:
            line = self.proc.stdout.readline()
        finally:
            alive = timer.is_alive()
            timer.cancel()
        if not alive:
            raise BridgeTimeoutError(f"peer silent for {self.timeout}s")
        if line == "":
            raise BridgeProtocolError("peer closed the stream")
        return line

    def close(self) -> None:
        try:
            if self.proc.poll() is None:
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
        except Exception:
            self.proc.kill()


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.sock.settimeout(timeout)
        self._file = self.sock.makefile("rw", encoding="utf-8", newline="\n")

    def send_line(self, line: str) -> None:
        self._file.write(line + "\n")
        self._file.flush()

    def recv_line(self) -> str:
        try:
            line = self._file.readline()
        except socket.timeout as exc:
            raise BridgeTimeoutError(str(exc)) from exc
        if line == "":
            raise BridgeProtocolError("peer closed the connection")
        return line

    def close(self) -> None:
        try:
            self._file.close()
            self.sock.close()
        except Exception:
            pass


def _open_transport(endpoint, timeout: float):
    if isinstance(endpoint, (list, tuple)):
        return _StdioTransport(list(endpoint), timeout)
    if endpoint.startswith("tcp:"):
        _, host, port = endpoint.split(":")
        return _TcpTransport(host, int(port), timeout)
    if endpoint.startswith("cmd:"):
        return _StdioTransport(shlex.split(endpoint[4:]), timeout)
    raise ValueError(f"endpoint must be 'tcp:HOST:PORT', 'cmd:...' or argv, "
                     f"got {endpoint!r}")


class BridgeConnection:
    """Handshaken connection to a bridge peer."""

    def __init__(self, endpoint, timeout: float = DEFAULT_TIMEOUT):
        self._transport = _open_transport(endpoint, timeout)
        self._lock = threading.Lock()
        self.endpoint = str(endpoint)
        self.info = self.request("info")
        version = self.info.get("protocol_version")
        if version != PROTOCOL_VERSION:
            self.close()
            raise BridgeProtocolError(
                f"peer speaks protocol version {version!r}, need {PROTOCOL_VERSION}")

    def request(self, method: str, **fields):
        frame = {"method": method, **fields}
        with self._lock:
            self._transport.send_line(json.dumps(frame))
            raw = self._transport.recv_line()
        try:
            reply = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise BridgeProtocolError(f"malformed frame from peer: {raw!r}") from exc
        if not isinstance(reply, dict) or "ok" not in reply:
            raise BridgeProtocolError(f"frame missing 'ok' field: {raw!r}")
        if not reply["ok"]:
            raise BridgeRemoteError(reply.get("code", "unknown"),
                                    reply.get("message", ""))
        return reply.get("data")

    def send_raw_line(self, line: str) -> dict:
        """Send a raw frame (conformance checks for bad-frame handling)."""
        with self._lock:
            self._transport.send_line(line)
            return json.loads(self._transport.recv_line())

    def close(self) -> None:
        self._transport.close()

    def classifier(self) -> "BridgeClassifier":
        if not self.info.get("classes"):
            raise UnsupportedCapabilityError("peer serves no classifier")
        return BridgeClassifier(self)

    def encoder(self) -> "BridgeEncoder":
        if not self.info.get("has_embeddings"):
            raise UnsupportedCapabilityError("peer advertises no embeddings")
        return BridgeEncoder(self)


class BridgeClassifier(ClassifierModel):
    """ClassifierModel view of a remote peer; capabilities mirror `info`."""

    def __init__(self, conn: BridgeConnection):
        self.conn = conn
        self.class_names = list(conn.info["classes"])
        spec = conn.info["input"]
        self.input_hwc = (spec["h"], spec["w"], spec["c"])
        self.has_input_gradient = bool(conn.info.get("has_input_gradient"))

    @property
    def snapshot_id(self) -> str:
        return self.conn.info.get("model_id", f"bridge:{self.conn.endpoint}")

    def logits(self, image: Image) -> np.ndarray:
        self.check_input(image)
        data = self.conn.request("logits", image=encode_tensor(image.data))
        z = decode_tensor(data["logits"])
        if z.size != self.n_classes:
            raise BridgeProtocolError(
                f"peer returned {z.size} logits for {self.n_classes} classes")
        return z

    def input_gradient(self, image, label, direction="maximize"):
        if not self.has_input_gradient:
            raise UnsupportedCapabilityError(
                "peer does not advertise input gradients")
        self.check_input(image)
        data = self.conn.request("grad_input", image=encode_tensor(image.data),
                                 label=int(label), direction=direction)
        return decode_tensor(data["grad"], shape=image.data.shape)


class BridgeEncoder:
    """Embedding provider backed by a remote peer."""

    def __init__(self, conn: BridgeConnection):
        self.conn = conn
        spec = conn.info["input"]
        self.input_hwc = (spec["h"], spec["w"], spec["c"])

    @property
    def snapshot_id(self) -> str:
        return self.conn.info.get("model_id", f"bridge:{self.conn.endpoint}")

    def embed_image(self, image: Image) -> np.ndarray:
        data = self.conn.request("embed_image", image=encode_tensor(image.data))
        return decode_tensor(data["embedding"])

    def embed_text(self, text: str) -> np.ndarray:
        data = self.conn.request("embed_text", text=text)
        return decode_tensor(data["embedding"])


def connect_external_model(endpoint, timeout: float = DEFAULT_TIMEOUT) -> BridgeConnection:
    """Handshake with a peer; raises typed transport errors, never falls
    back silently."""
    return BridgeConnection(endpoint, timeout=timeout)
