"""Line-delimited JSON control protocol over TCP.

One request or response per LF-terminated UTF-8 line. Two connection
disciplines:

  dynamic  -- one connection carries exactly one request/response pair;
              the server closes after answering, so every call pays the
              full connect cost.
  static   -- the first request is op="attach"; the connection then stays
              open and is reused for any number of pipelined requests,
              answered in request order.

Request:  {"id": <uint64>, "op": <string>, "args": {...}?}
Response: {"id": <id>, "ok": true, "result": {...}}
        | {"id": <id>, "ok": false, "error": {"code": ..., "message": ...}}

id 0 is reserved for server-generated parse-error responses. Lines longer
than 64 KiB are rejected with E_PARSE and the connection is closed.
Malformed input never takes the server down and never touches another
connection's session.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
import time

from .errors import ConnectionLost, ParseError, ProtocolError

MAX_LINE_BYTES = 64 * 1024
DEFAULT_PORT = 5025


# ------------------------------------------------------------------- codec

def encode_message(obj: dict) -> bytes:
    """Canonical wire encoding: compact JSON, one LF-terminated line."""
    return json.dumps(obj, separators=(",", ":")).encode("utf-8") + b"\n"


def encode_request(req_id: int, op: str, args: dict | None = None) -> bytes:
    msg = {"id": req_id, "op": op}
    if args is not None:
        msg["args"] = args
    return encode_message(msg)


def decode_request(line: bytes) -> dict:
    """Parse one request line; raises ParseError, never anything else."""
    if len(line) > MAX_LINE_BYTES:
        raise ParseError("line exceeds 64 KiB")
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"malformed JSON: {e}") from e
    if not isinstance(obj, dict):
        raise ParseError("request must be a JSON object")
    req_id = obj.get("id")
    if not isinstance(req_id, int) or isinstance(req_id, bool) or req_id < 0:
        raise ParseError("id must be an unsigned integer")
    op = obj.get("op")
    if not isinstance(op, str) or not op:
        raise ParseError("op must be a non-empty string")
    args = obj.get("args")
    if args is not None and not isinstance(args, dict):
        raise ParseError("args must be an object")
    return {"id": req_id, "op": op, "args": args}


def decode_response(line: bytes) -> dict:
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"malformed JSON: {e}") from e
    if not isinstance(obj, dict) or "id" not in obj or "ok" not in obj:
        raise ParseError("response missing id/ok")
    return obj


def error_response(req_id: int, code: str, message: str) -> dict:
    return {"id": req_id, "ok": False,
            "error": {"code": code, "message": message}}


# ------------------------------------------------------------------ server

def _read_line(rfile) -> bytes | None:
    """One line, bounded; None on EOF; ParseError on oversize."""
    line = rfile.readline(MAX_LINE_BYTES + 1)
    if not line:
        return None
    if len(line) > MAX_LINE_BYTES:
        raise ParseError("line exceeds 64 KiB")
    return line


class _Handler(socketserver.StreamRequestHandler):
    disable_nagle_algorithm = True

    def handle(self):
        server: BeamlineTCPServer = self.server
        with server.stats_lock:
            server.accept_count += 1
        try:
            self._serve_connection(server)
        except (ConnectionError, OSError, TimeoutError):
            pass  # that connection only; others and the instance survive

    def _serve_connection(self, server):
        first = self._read_request()
        if first is None:
            return
        if isinstance(first, ParseError):
            self._send(error_response(0, "E_PARSE", first.message))
            return
        if first["op"] == "attach":
            self._send({"id": first["id"], "ok": True,
                        "result": {"session": "static",
                                   "server": server.instance.config.server_name}})
            self._serve_static(server, last_id=first["id"])
        else:
            # dynamic: exactly one request/response, then close
            self._send(self._answer(server, first))

    def _serve_static(self, server, last_id: int):
        while True:
            req = self._read_request()
            if req is None:
                return
            if isinstance(req, ParseError):
                self._send(error_response(0, "E_PARSE", req.message))
                if "64 KiB" in req.message:
                    return  # oversize line: close per protocol
                continue
            if req["id"] <= last_id:
                self._send(error_response(
                    req["id"], "E_PROTO",
                    f"id {req['id']} not greater than {last_id}"))
                continue
            last_id = req["id"]
            self._send(self._answer(server, req))

    def _read_request(self):
        try:
            line = _read_line(self.rfile)
        except ParseError as e:
            return e
        if line is None:
            return None
        try:
            return decode_request(line)
        except ParseError as e:
            return e

    def _answer(self, server, req: dict) -> dict:
        payload = server.instance.dispatch(req["op"], req.get("args"))
        if req["op"] == "ping" and payload.get("ok"):
            payload["result"]["accept_count"] = server.accept_count
        return {"id": req["id"], **payload}

    def _send(self, obj: dict):
        self.wfile.write(encode_message(obj))
        self.wfile.flush()


class BeamlineTCPServer(socketserver.ThreadingTCPServer):
    """TCP front end for one BeamlineInstance."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, instance):
        self.instance = instance
        self.accept_count = 0
        self.stats_lock = threading.Lock()
        super().__init__(address, _Handler)

    @property
    def port(self) -> int:
        return self.server_address[1]


def serve(instance, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
          background: bool = False) -> BeamlineTCPServer:
    """Bind and serve; with background=True, runs in a daemon thread and
    returns the server handle immediately."""
    srv = BeamlineTCPServer((host, port), instance)
    if background:
        threading.Thread(target=srv.serve_forever, name="beamline-tcp",
                         daemon=True).start()
    else:
        srv.serve_forever()
    return srv


# ------------------------------------------------------------------ client

_CONNECT_TIMEOUT_S = 5.0
_CALL_TIMEOUT_S = 60.0


def call_dynamic(host: str, port: int, op: str, args: dict | None = None,
                 req_id: int = 1) -> dict:
    """One full connect -> send -> receive -> close cycle."""
    try:
        with socket.create_connection((host, port),
                                      timeout=_CONNECT_TIMEOUT_S) as sock:
            sock.settimeout(_CALL_TIMEOUT_S)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            sock.sendall(encode_request(req_id, op, args))
            line = _recv_line(sock)
    except (ConnectionError, OSError, TimeoutError) as e:
        raise ConnectionLost(f"{host}:{port}: {e}") from e
    return decode_response(line)


def _recv_line(sock: socket.socket) -> bytes:
    chunks = []
    total = 0
    while True:
        b = sock.recv(4096)
        if not b:
            raise ConnectionLost("connection closed before response")
        chunks.append(b)
        total += len(b)
        if b.endswith(b"\n") or b"\n" in b:
            break
        if total > MAX_LINE_BYTES:
            raise ParseError("response exceeds 64 KiB")
    data = b"".join(chunks)
    return data.split(b"\n", 1)[0] + b"\n"


class Session:
    """Persistent attached session: one connection reused for all calls,
    ids strictly increasing."""

    def __init__(self, host: str, port: int):
        self.host = host
        self.port = port
        self._next_id = 1
        self._sock: socket.socket | None = None
        self._rfile = None
        self._open()

    def _open(self):
        try:
            sock = socket.create_connection((self.host, self.port),
                                            timeout=_CONNECT_TIMEOUT_S)
            sock.settimeout(_CALL_TIMEOUT_S)
            # small request/response pairs: Nagle stalls the whole session
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        except (ConnectionError, OSError, TimeoutError) as e:
            raise ConnectionLost(f"{self.host}:{self.port}: {e}") from e
        self._sock = sock
        self._rfile = sock.makefile("rb")
        resp = self._roundtrip("attach", None)
        if not resp.get("ok"):
            self.close()
            raise ProtocolError("attach rejected")

    def _roundtrip(self, op: str, args: dict | None) -> dict:
        if self._sock is None:
            raise ConnectionLost("session closed")
        req_id = self._next_id
        self._next_id += 1
        try:
            self._sock.sendall(encode_request(req_id, op, args))
            line = _read_line(self._rfile)
        except (ConnectionError, OSError, TimeoutError) as e:
            self.close()
            raise ConnectionLost(str(e)) from e
        if line is None:
            self.close()
            raise ConnectionLost("server closed the session")
        resp = decode_response(line)
        if resp.get("id") not in (req_id, 0):
            raise ProtocolError(
                f"response id {resp.get('id')} for request {req_id}")
        return resp

    def call(self, op: str, args: dict | None = None) -> dict:
        return self._roundtrip(op, args)

    def close(self):
        if self._rfile is not None:
            try:
                self._rfile.close()
            except OSError:
                pass
            self._rfile = None
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def session_open(host: str, port: int) -> Session:
    return Session(host, port)


def bench_sessions(host: str, port: int, calls: int, e_ev: float = 400.0,
                   modes: tuple = ("dynamic", "static")) -> dict:
    """Time a calc_positions batch under each connection discipline."""
    results = {}
    args = {"e_ev": e_ev, "mode": "realtime"}
    if "dynamic" in modes:
        t0 = time.perf_counter()
        for i in range(calls):
            call_dynamic(host, port, "calc_positions", args, req_id=1)
        results["dynamic_ms"] = (time.perf_counter() - t0) * 1e3
    if "static" in modes:
        with Session(host, port) as ses:
            t0 = time.perf_counter()
            for i in range(calls):
                ses.call("calc_positions", args)
            results["static_ms"] = (time.perf_counter() - t0) * 1e3
    if "dynamic_ms" in results and "static_ms" in results:
        results["ratio"] = results["dynamic_ms"] / results["static_ms"]
    results["calls"] = calls
    return results
