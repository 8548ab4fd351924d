"""Request loops: stdio (one connection) and TCP (one loop per connection).

One request is in flight per connection; the served model is read-only
shared state, so multiple TCP connections are safe. End-of-stream shuts a
connection down gracefully.
"""

from __future__ import annotations

import socketserver
import sys

from .protocol import handle_line


def serve_stdio(served, stdin=None, stdout=None) -> None:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        stdout.write(handle_line(line, served) + "\n")
        stdout.flush()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace").strip()
            if not line:
                continue
            reply = handle_line(line, self.server.served_model)
            self.wfile.write((reply + "\n").encode("utf-8"))
            self.wfile.flush()


class BridgeTCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, served):
        super().__init__(address, _Handler)
        self.served_model = served


def serve_tcp(served, host: str, port: int) -> None:
    with BridgeTCPServer((host, port), served) as server:
        actual = server.server_address[1]
        print(f"listening on {host}:{actual}", file=sys.stderr, flush=True)
        server.serve_forever()
