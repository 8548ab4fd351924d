"""modelbridge CLI: serve a model over the bridge protocol."""

from __future__ import annotations

import argparse
import sys

from .models import load_model
from .server import serve_stdio, serve_tcp


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="modelbridge")
    sub = parser.add_subparsers(dest="command", required=True)
    s = sub.add_parser("serve", help="answer bridge requests for one model")
    s.add_argument("--model", required=True,
                   help="echo | snapshot:PATH | torchvision:NAME | clip:HF_ID")
    s.add_argument("--transport", default="stdio",
                   help="stdio or tcp:PORT (port 0 picks a free port)")
    s.add_argument("--host", default="127.0.0.1")
    args = parser.parse_args(argv)

    try:
        served = load_model(args.model)
    except Exception as exc:
        print(f"cannot load model {args.model!r}: {exc}", file=sys.stderr)
        return 2
    if args.transport == "stdio":
        serve_stdio(served)
        return 0
    if args.transport.startswith("tcp:"):
        serve_tcp(served, args.host, int(args.transport.split(":", 1)[1]))
        return 0
    print(f"unknown transport {args.transport!r}", file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
