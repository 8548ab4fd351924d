"""Wire helpers for the line-delimited JSON bridge protocol.

Requests: {"method": ..., ...fields}. Responses: {"ok": true, "data": ...}
or {"ok": false, "code": ..., "message": ...}. Tensor payloads are base64
of little-endian float32, channel-major.
"""

from __future__ import annotations

import base64
import json

import numpy as np

PROTOCOL_VERSION = 1


def encode_tensor(arr) -> str:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    return base64.b64encode(arr.tobytes()).decode("ascii")


def decode_tensor(payload: str, shape=None) -> np.ndarray:
    arr = np.frombuffer(base64.b64decode(payload), dtype="<f4").astype(np.float64)
    if shape is not None:
        arr = arr.reshape(shape)
    return arr


def ok(data) -> str:
    return json.dumps({"ok": True, "data": data})


def error(code: str, message: str) -> str:
    return json.dumps({"ok": False, "code": code, "message": message})


class RequestError(Exception):
    """Maps to an ok=false reply without terminating the connection."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def handle_line(line: str, served) -> str:
    """Dispatch one request line against a served model; always returns a
    reply line (malformed frames answer with code "bad_frame")."""
    try:
        frame = json.loads(line)
        method = frame["method"]
        if not isinstance(method, str):
            raise TypeError
    except (json.JSONDecodeError, KeyError, TypeError):
        return error("bad_frame", "frame is not a JSON object with a 'method'")
    try:
        handler = getattr(served, f"handle_{method}", None)
        if handler is None:
            return error("unsupported", f"method {method!r} not supported")
        return ok(handler(frame))
    except RequestError as exc:
        return error(exc.code, str(exc))
    except Exception as exc:  # never kill the connection on a handler bug
        return error("internal", f"{type(exc).__name__}: {exc}")
