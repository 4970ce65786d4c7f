import json
import time

import pytest
from fastapi.testclient import TestClient

from beamctl import protocol as proto
from beamctl import scan as scanmod
from beamctl.gateway import ROUTE_TABLE, STATUS_MAP, make_app
from beamctl.server import BeamlineInstance

from conftest import make_config


@pytest.fixture
def stack():
    """Device server + gateway app wired over a real TCP socket."""
    inst = BeamlineInstance(make_config())
    inst.start_ticker()
    srv = proto.serve(inst, "127.0.0.1", 0, background=True)
    app = make_app("127.0.0.1", srv.port)
    with TestClient(app) as client:
        yield inst, srv, client
    srv.shutdown()
    inst.stop_ticker()


def test_units_listing(stack):
    inst, srv, client = stack
    r = client.get("/api/units")
    assert r.status_code == 200
    names = {u["name"] for u in r.json()}
    assert "mirror_pitch" in names and "det" in names
    r = client.get("/api/units/grating_pitch")
    assert r.status_code == 200 and r.json()["kind"] == "motor"
    assert client.get("/api/units/nope").status_code == 404


def test_energy_roundtrip(stack):
    inst, srv, client = stack
    r = client.post("/api/energy", json={"e_ev": 400.0, "mode": "realtime",
                                         "wait": True})
    assert r.status_code == 200
    body = r.json()
    assert {"mirror_steps", "grating_steps"} <= set(body)
    r = client.get("/api/energy")
    assert r.status_code == 200
    assert r.json()["e_ev"] == pytest.approx(400.0, abs=0.1)


def test_error_code_mapping(stack):
    inst, srv, client = stack
    # stale fit -> 409
    r = client.post("/api/energy", json={"e_ev": 400.0, "mode": "fit"})
    assert r.status_code == 409 and r.json()["code"] == "E_STALE_FIT"
    # singular cff -> 400
    r = client.post("/api/mono/params", json={"name": "c", "value": 1.0})
    assert r.status_code == 400 and r.json()["code"] == "E_RANGE"
    # unsolvable energy -> 400 range (outside config range)
    r = client.post("/api/calc", json={"e_ev": -5.0})
    assert r.status_code == 400
    # no scan to abort -> 409
    r = client.request("DELETE", "/api/scan")
    assert r.status_code == 409 and r.json()["code"] == "E_NO_SCAN"
    # bad body -> 400
    assert client.post("/api/energy", content=b"junk").status_code == 400


def test_busy_during_scan_maps_409(stack):
    inst, srv, client = stack
    r = client.post("/api/scan", json={"e_start": 100.0, "e_end": 104.0,
                                       "step": 0.5, "dwell_s": 0.5,
                                       "settle_s": 0.1})
    assert r.status_code == 200
    try:
        r = client.post("/api/energy", json={"e_ev": 400.0})
        assert r.status_code == 409 and r.json()["code"] == "E_BUSY"
    finally:
        client.request("DELETE", "/api/scan")
        inst.wait_scan_done()


def test_every_route_round_trips(stack):
    """Table-driven: every wire op is reachable through its documented
    route and answers with its documented status family."""
    inst, srv, client = stack
    client.post("/api/fit", json={"e_lo": 250.0, "e_hi": 450.0, "n": 9})
    bodies = {
        "move_abs": {"steps": 100},
        "move_rel": {"steps": 1, "rel": True},
        "inject_fault": {"code": "t"},
        "read_detector": {"dwell_s": 0.5, "e_ev": 60.0},
        "set_energy": {"e_ev": 300.0, "wait": True},
        "calc_positions": {"e_ev": 300.0},
        "set_mono_param": {"name": "hc", "value": 1239.8420},
        "build_fit": {"e_lo": 250.0, "e_hi": 450.0, "n": 9},
        "start_scan": {"e_start": 100.0, "e_end": 100.5, "step": 0.5,
                       "dwell_s": 0.2, "settle_s": 0.0},
    }
    unit_for = {"move_abs": "mirror_pitch", "move_rel": "mirror_pitch",
                "stop": "mirror_pitch", "inject_fault": "grating_pitch",
                "clear_fault": "grating_pitch", "read_detector": "det",
                "unit_state": "det"}
    # order matters: faults injected then cleared, scan started then aborted
    op_order = ["ping", "snapshot", "list_units", "unit_state", "move_abs",
                "stop", "move_rel", "inject_fault", "clear_fault",
                "read_detector", "calc_positions", "set_mono_param",
                "build_fit", "fit_report", "set_energy", "get_energy",
                "start_scan", "scan_status", "scan_points", "abort_scan"]
    assert sorted(op_order) == sorted(ROUTE_TABLE)
    for op in op_order:
        method, path = ROUTE_TABLE[op]
        path = path.replace("{name}", unit_for.get(op, "mirror_pitch"))
        kwargs = {}
        if op in bodies:
            kwargs["json"] = bodies[op]
        r = client.request(method, path, **kwargs)
        if op == "abort_scan" and r.status_code == 409:
            continue  # scan may already be done
        assert r.status_code == 200, (op, r.status_code, r.text)
    inst.wait_scan_done()


def test_ws_first_message_is_snapshot(stack):
    inst, srv, client = stack
    with client.websocket_connect("/ws") as ws:
        msg = ws.receive_json()
        assert msg["type"] == "snapshot"
        assert "units" in msg and "scan" in msg


def _collect_scan_messages(ws, total, timeout_s=30.0):
    points, statuses = [], []
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        msg = ws.receive_json()
        if msg["type"] == "scan_point":
            points.append(msg)
        elif msg["type"] == "scan_status":
            statuses.append(msg)
            if msg["state"] in ("done", "aborted", "failed"):
                break
    return points, statuses


def test_ws_streams_every_scan_point_once(stack):
    inst, srv, client = stack
    with client.websocket_connect("/ws") as ws:
        ws.receive_json()  # snapshot handshake
        r = client.post("/api/scan", json={"e_start": 100.0, "e_end": 102.0,
                                           "step": 0.5, "dwell_s": 0.3,
                                           "settle_s": 0.0})
        assert r.status_code == 200
        points, statuses = _collect_scan_messages(ws, total=5)
    assert [p["index"] for p in points] == [0, 1, 2, 3, 4]
    assert statuses[-1]["state"] == "done"
    # field-for-field equal to the authoritative buffer
    upstream = client.get("/api/scan/points").json()["points"]
    for ws_p, up_p in zip(points, upstream):
        for key in scanmod.CSV_HEADER.split(","):
            assert ws_p[key] == up_p[key]


def test_two_subscribers_see_same_stream(stack):
    inst, srv, client = stack
    with client.websocket_connect("/ws") as a, \
            client.websocket_connect("/ws") as b:
        a.receive_json()
        b.receive_json()
        client.post("/api/scan", json={"e_start": 100.0, "e_end": 101.0,
                                       "step": 0.5, "dwell_s": 0.3,
                                       "settle_s": 0.0})
        pa, _ = _collect_scan_messages(a, total=3)
        pb, _ = _collect_scan_messages(b, total=3)
    assert [p["index"] for p in pa] == [p["index"] for p in pb] == [0, 1, 2]


def test_gateway_restart_loses_no_scan_data(stack):
    inst, srv, client = stack
    r = client.post("/api/scan", json={"e_start": 100.0, "e_end": 101.0,
                                       "step": 0.5, "dwell_s": 0.3,
                                       "settle_s": 0.0})
    assert r.status_code == 200
    inst.wait_scan_done()
    # a brand-new gateway (fresh process stand-in) still serves the points
    app2 = make_app("127.0.0.1", srv.port)
    with TestClient(app2) as client2:
        pts = client2.get("/api/scan/points").json()["points"]
    assert len(pts) == 3


def test_console_asset_served(stack):
    inst, srv, client = stack
    r = client.get("/")
    assert r.status_code == 200
    assert b"html" in r.content.lower()


def test_status_map_is_total_over_server_codes():
    for code in ("E_NO_UNIT", "E_BUSY", "E_FAULT", "E_STALE_FIT",
                 "E_RANGE", "E_PARSE", "E_UNSOLVABLE", "E_NO_SCAN"):
        assert code in STATUS_MAP
