"""Entry point: run the HTTP/WebSocket gateway against a device server."""

from __future__ import annotations

import argparse
import sys

import uvicorn

from .gateway import make_app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="beamline-gateway",
        description="HTTP/WebSocket bridge to the beamline device server")
    parser.add_argument("--upstream-host", default="127.0.0.1")
    parser.add_argument("--upstream-port", type=int, default=5025)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8080)
    parser.add_argument("--console-dir", default=None,
                        help="directory with the built operator console")
    args = parser.parse_args(argv)

    app = make_app(args.upstream_host, args.upstream_port, args.console_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
