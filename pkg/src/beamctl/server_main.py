"""Entry point: run the TCP device server from a config file."""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import BeamlineError
from .protocol import serve
from .server import init_once


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="beamline-server",
        description="Beamline device server (line-JSON over TCP)")
    parser.add_argument("--config", required=True, help="beamline TOML file")
    parser.add_argument("--host", default=None, help="override bind host")
    parser.add_argument("--port", type=int, default=None,
                        help="override TCP port (0 picks a free port)")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
    except BeamlineError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    instance = init_once(config)
    instance.start_ticker()
    host = args.host if args.host is not None else config.host
    port = args.port if args.port is not None else config.tcp_port
    srv = serve(instance, host, port, background=True)
    print(f"listening on {host}:{srv.port}", flush=True)
    try:
        _block()
    except KeyboardInterrupt:
        pass
    finally:
        srv.shutdown()
        instance.stop_ticker()
    return 0


def _block():
    import threading
    threading.Event().wait()


if __name__ == "__main__":
    sys.exit(main())
