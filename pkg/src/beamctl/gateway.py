"""HTTP/WebSocket gateway in front of the TCP device server.

Stateless bridge: every REST route maps to exactly one wire op, upstream
errors are translated to HTTP statuses, and a WebSocket at /ws streams
state snapshots (throttled to one per 250 ms) plus every scan point as it
appears. All upstream traffic is multiplexed over one static protocol
session guarded by a lock; the gateway can be killed and restarted
mid-scan without losing data, since the device server owns all of it.
"""

from __future__ import annotations

import asyncio
import json
import threading
import time
from importlib import resources

from fastapi import FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, JSONResponse

from . import protocol as proto
from .errors import BeamlineError, ConnectionLost

SNAPSHOT_INTERVAL_S = 0.250
SCAN_POLL_S = 0.05
WS_QUEUE_MAX = 64

# error code -> HTTP status
STATUS_MAP = {
    "E_NO_UNIT": 404,
    "E_BUSY": 409,
    "E_FAULT": 409,
    "E_STALE_FIT": 409,
    "E_NO_SCAN": 409,
    "E_RANGE": 400,
    "E_PARSE": 400,
    "E_UNSOLVABLE": 422,
    "E_CONN": 502,
    "E_PROTO": 502,
}

# op -> (HTTP method, route path); the console and the route test both
# read this table. move_rel shares move_abs's path, selected by the
# "rel": true body flag.
ROUTE_TABLE = {
    "ping": ("GET", "/api/ping"),
    "snapshot": ("GET", "/api/snapshot"),
    "list_units": ("GET", "/api/units"),
    "unit_state": ("GET", "/api/units/{name}"),
    "move_abs": ("POST", "/api/units/{name}/move"),
    "move_rel": ("POST", "/api/units/{name}/move"),   # body {"rel": true}
    "stop": ("POST", "/api/units/{name}/stop"),
    "inject_fault": ("POST", "/api/units/{name}/fault"),
    "clear_fault": ("DELETE", "/api/units/{name}/fault"),
    "read_detector": ("POST", "/api/units/{name}/read"),
    "set_energy": ("POST", "/api/energy"),
    "get_energy": ("GET", "/api/energy"),
    "calc_positions": ("POST", "/api/calc"),
    "set_mono_param": ("POST", "/api/mono/params"),
    "build_fit": ("POST", "/api/fit"),
    "fit_report": ("GET", "/api/fit"),
    "start_scan": ("POST", "/api/scan"),
    "scan_status": ("GET", "/api/scan"),
    "abort_scan": ("DELETE", "/api/scan"),
    "scan_points": ("GET", "/api/scan/points"),
}


class UpstreamClient:
    """One static session to the device server, shared by all gateway
    requests; reconnects with backoff when the link drops."""

    def __init__(self, host: str, port: int):
        self.host = host
        self.port = port
        self._lock = threading.Lock()
        self._session: proto.Session | None = None

    def call(self, op: str, args: dict | None = None) -> dict:
        with self._lock:
            last_err = None
            for attempt in range(3):
                try:
                    if self._session is None:
                        self._session = proto.Session(self.host, self.port)
                    return self._session.call(op, args)
                except ConnectionLost as e:
                    last_err = e
                    self._session = None
                    time.sleep(0.05 * (attempt + 1))
            raise last_err

    def close(self):
        with self._lock:
            if self._session is not None:
                self._session.close()
                self._session = None


def _http_error(code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=STATUS_MAP.get(code, 500),
                        content={"code": code, "message": message})


class _Subscriber:
    """Bounded per-client message buffer; overflow marks the client as
    dropped so its socket gets closed."""

    def __init__(self):
        self.queue: asyncio.Queue = asyncio.Queue(maxsize=WS_QUEUE_MAX)
        self.dropped = False

    def offer(self, msg: dict) -> bool:
        if self.dropped:
            return False
        try:
            self.queue.put_nowait(msg)
            return True
        except asyncio.QueueFull:
            self.dropped = True
            return False

    async def next(self) -> dict | None:
        """Next message, or None once this subscriber has been dropped."""
        while True:
            if self.dropped and self.queue.empty():
                return None
            try:
                return await asyncio.wait_for(self.queue.get(), timeout=0.25)
            except asyncio.TimeoutError:
                continue


class _Broadcaster:
    """Polls the device server and fans out WS messages.

    Snapshots go out at most every 250 ms (and only when changed); scan
    points are polled fast and never throttled; scan status transitions
    are forwarded once each. Subscribers with a full queue (64 messages)
    are dropped as slow consumers.
    """

    def __init__(self, client: UpstreamClient):
        self.client = client
        self.subscribers: set["_Subscriber"] = set()
        self._task: asyncio.Task | None = None
        self._last_snapshot_json: str | None = None
        self._last_scan_state: str = "idle"
        self._points_seen = 0

    def subscribe(self) -> "_Subscriber":
        sub = _Subscriber()
        self.subscribers.add(sub)
        return sub

    def unsubscribe(self, sub: "_Subscriber"):
        self.subscribers.discard(sub)

    def _publish(self, msg: dict):
        for sub in list(self.subscribers):
            if not sub.offer(msg):
                self.subscribers.discard(sub)  # slow consumer: dropped

    async def start(self):
        self._task = asyncio.create_task(self._run())

    async def stop(self):
        if self._task is not None:
            self._task.cancel()
            try:
                await self._task
            except asyncio.CancelledError:
                pass
            self._task = None

    async def _run(self):
        last_snap = 0.0
        while True:
            try:
                now = time.monotonic()
                if now - last_snap >= SNAPSHOT_INTERVAL_S:
                    await self._poll_snapshot()
                    last_snap = now
                await self._poll_scan()
            except (BeamlineError, OSError):
                await asyncio.sleep(0.5)  # upstream down; retry
            await asyncio.sleep(SCAN_POLL_S)

    async def _poll_snapshot(self):
        resp = await asyncio.to_thread(self.client.call, "snapshot", None)
        if not resp.get("ok"):
            return
        snap = resp["result"]
        blob = json.dumps(snap, sort_keys=True)
        if blob != self._last_snapshot_json:
            self._last_snapshot_json = blob
            self._publish({"type": "snapshot", **snap})

    async def _poll_scan(self):
        resp = await asyncio.to_thread(self.client.call, "scan_points",
                                       {"since": self._points_seen})
        if not resp.get("ok"):
            return
        result = resp["result"]
        status = result["status"]
        state = status["state"]
        if state == "running" and self._last_scan_state != "running":
            self._points_seen = 0  # a new scan began
            resp = await asyncio.to_thread(self.client.call, "scan_points",
                                           {"since": 0})
            result = resp["result"]
            status = result["status"]
        for point in result["points"]:
            self._publish({"type": "scan_point", **point})
            self._points_seen = point["index"] + 1
        if state != self._last_scan_state:
            self._publish({"type": "scan_status", **status})
            self._last_scan_state = state


def _find_console_dir(console_dir: str | None):
    if console_dir:
        return console_dir
    pkg_static = resources.files("beamctl") / "static"
    return str(pkg_static)


def make_app(upstream_host: str, upstream_port: int,
             console_dir: str | None = None) -> FastAPI:
    client = UpstreamClient(upstream_host, upstream_port)
    broadcaster = _Broadcaster(client)

    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(app):
        await broadcaster.start()
        try:
            yield
        finally:
            await broadcaster.stop()
            client.close()

    app = FastAPI(title="beamline gateway", version="0.1.0",
                  lifespan=lifespan)
    app.state.upstream = client
    static_dir = _find_console_dir(console_dir)

    def relay(op: str, args: dict | None = None):
        try:
            resp = client.call(op, args)
        except BeamlineError as e:
            return _http_error(e.code, e.message)
        if resp.get("ok"):
            return JSONResponse(resp["result"])
        err = resp["error"]
        return _http_error(err["code"], err["message"])

    async def body_of(request: Request) -> dict:
        try:
            raw = await request.body()
            data = json.loads(raw) if raw else {}
        except json.JSONDecodeError:
            return None
        return data if isinstance(data, dict) else None

    # ------------------------------------------------------------- REST

    @app.get("/api/ping")
    def ping():
        return relay("ping")

    @app.get("/api/snapshot")
    def snapshot():
        return relay("snapshot")

    @app.get("/api/units")
    def list_units():
        resp = relay("list_units")
        if isinstance(resp, JSONResponse) and resp.status_code == 200:
            payload = json.loads(resp.body)
            return JSONResponse(payload["units"])
        return resp

    @app.get("/api/units/{name}")
    def unit_state(name: str):
        return relay("unit_state", {"unit": name})

    @app.post("/api/units/{name}/move")
    async def move(name: str, request: Request):
        body = await body_of(request)
        if body is None or "steps" not in body:
            return _http_error("E_PARSE", "body must be JSON with steps")
        op = "move_rel" if body.get("rel") else "move_abs"
        return relay(op, {"unit": name, "steps": body["steps"],
                          "wait": bool(body.get("wait", False))})

    @app.post("/api/units/{name}/stop")
    def stop(name: str):
        return relay("stop", {"unit": name})

    @app.post("/api/units/{name}/fault")
    async def inject_fault(name: str, request: Request):
        body = await body_of(request) or {}
        return relay("inject_fault",
                     {"unit": name, "code": body.get("code", "fault")})

    @app.delete("/api/units/{name}/fault")
    def clear_fault(name: str):
        return relay("clear_fault", {"unit": name})

    @app.post("/api/units/{name}/read")
    async def read_detector(name: str, request: Request):
        body = await body_of(request)
        if body is None or "dwell_s" not in body:
            return _http_error("E_PARSE", "body must be JSON with dwell_s")
        args = {"unit": name, "dwell_s": body["dwell_s"]}
        if "e_ev" in body:
            args["e_ev"] = body["e_ev"]
        return relay("read_detector", args)

    @app.post("/api/energy")
    async def set_energy(request: Request):
        body = await body_of(request)
        if body is None or "e_ev" not in body:
            return _http_error("E_PARSE", "body must be JSON with e_ev")
        return relay("set_energy", {
            "e_ev": body["e_ev"],
            "mode": body.get("mode", "realtime"),
            "wait": bool(body.get("wait", False)),
        })

    @app.get("/api/energy")
    def get_energy():
        return relay("get_energy")

    @app.post("/api/calc")
    async def calc_positions(request: Request):
        body = await body_of(request)
        if body is None or "e_ev" not in body:
            return _http_error("E_PARSE", "body must be JSON with e_ev")
        return relay("calc_positions",
                     {"e_ev": body["e_ev"],
                      "mode": body.get("mode", "realtime")})

    @app.post("/api/mono/params")
    async def set_mono_param(request: Request):
        body = await body_of(request)
        if body is None or "name" not in body or "value" not in body:
            return _http_error("E_PARSE", "body needs name and value")
        return relay("set_mono_param",
                     {"name": body["name"], "value": body["value"]})

    @app.post("/api/fit")
    async def build_fit(request: Request):
        body = await body_of(request)
        if body is None:
            return _http_error("E_PARSE", "body must be JSON")
        try:
            args = {"e_lo": body["e_lo"], "e_hi": body["e_hi"],
                    "n": body["n"]}
        except KeyError as e:
            return _http_error("E_PARSE", f"missing {e}")
        return relay("build_fit", args)

    @app.get("/api/fit")
    def fit_report(n_probe: int = 1000):
        return relay("fit_report", {"n_probe": n_probe})

    @app.post("/api/scan")
    async def start_scan(request: Request):
        body = await body_of(request)
        if body is None:
            return _http_error("E_PARSE", "body must be JSON")
        return relay("start_scan", body)

    @app.get("/api/scan")
    def scan_status():
        return relay("scan_status")

    @app.delete("/api/scan")
    def abort_scan():
        return relay("abort_scan")

    @app.get("/api/scan/points")
    def scan_points(since: int = 0):
        return relay("scan_points", {"since": since})

    # --------------------------------------------------------------- WS

    @app.websocket("/ws")
    async def ws(websocket: WebSocket):
        await websocket.accept()
        # handshake: one full state snapshot first
        try:
            resp = await asyncio.to_thread(client.call, "snapshot", None)
            if resp.get("ok"):
                await websocket.send_json({"type": "snapshot",
                                           **resp["result"]})
        except (BeamlineError, OSError):
            await websocket.close(code=1011)
            return
        sub = broadcaster.subscribe()
        try:
            while True:
                msg = await sub.next()
                if msg is None:
                    await websocket.close(code=1013)  # slow consumer
                    return
                await websocket.send_json(msg)
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            broadcaster.unsubscribe(sub)

    # ----------------------------------------------------------- console

    @app.get("/")
    def console_index():
        return FileResponse(f"{static_dir}/index.html")

    @app.get("/{asset}")
    def console_asset(asset: str):
        import os
        path = os.path.join(static_dir, os.path.basename(asset))
        if not os.path.isfile(path):
            return JSONResponse(status_code=404,
                                content={"code": "E_NO_UNIT",
                                         "message": "no such asset"})
        return FileResponse(path)

    return app
