import random

import pytest

from beamctl import kinematics as kin
from beamctl import server as srv
from beamctl.config import MotorConfig
from beamctl.errors import ConfigInvalid
from beamctl.server import BeamlineInstance, init_once, _reset_instance_for_tests

from conftest import make_config
from oracles import oracle_solve, oracle_mirror_grazing


def ok(resp):
    assert resp["ok"], resp
    return resp["result"]


def err(resp):
    assert not resp["ok"], resp
    return resp["error"]["code"]


# ------------------------------------------------------------- singleton

def test_init_once_idempotent():
    _reset_instance_for_tests()
    try:
        cfg = make_config()
        a = init_once(cfg)
        ok(a.dispatch("move_abs", {"unit": "mirror_pitch", "steps": 777,
                                   "wait": False}))
        a.tick(60.0)
        b = init_once(cfg)
        assert b is a
        assert b.motors["mirror_pitch"].position_steps == 777
    finally:
        _reset_instance_for_tests()


def test_duplicate_unit_names_rejected():
    with pytest.raises(ConfigInvalid):
        cfg = make_config()
        from dataclasses import replace
        bad = replace(cfg, motors=cfg.motors + (
            MotorConfig(name="mirror_pitch"),))
        BeamlineInstance(bad)


# -------------------------------------------------------------- dispatch

def test_dispatch_unknown_unit(instance):
    assert err(instance.dispatch("move_abs",
                                 {"unit": "nope", "steps": 1})) == "E_NO_UNIT"


def test_dispatch_unknown_op(instance):
    assert err(instance.dispatch("frobnicate", {})) == "E_PARSE"


def test_dispatch_bad_args(instance):
    assert err(instance.dispatch("move_abs", {"unit": "mirror_pitch"})) \
        == "E_PARSE"
    assert err(instance.dispatch("move_abs",
                                 {"unit": "mirror_pitch",
                                  "steps": "many"})) == "E_PARSE"


def test_fault_containment(instance):
    ok(instance.dispatch("inject_fault", {"unit": "mirror_pitch",
                                          "code": "estop"}))
    assert err(instance.dispatch("move_abs", {"unit": "mirror_pitch",
                                              "steps": 100})) == "E_FAULT"
    assert ok(instance.dispatch("ping", {}))["server"] == "beamline"
    ok(instance.dispatch("clear_fault", {"unit": "mirror_pitch"}))
    ok(instance.dispatch("move_abs", {"unit": "mirror_pitch", "steps": 100}))


def test_dispatch_fuzz_total(instance):
    """Random well-formed commands against whatever state results: every
    one yields a response, nothing raises past dispatch."""
    rng = random.Random(99)
    ops = list(srv._OPS)
    arg_pool = {
        "unit": ["mirror_pitch", "grating_pitch", "det", "mirror_enc", "x"],
        "steps": [-10**9, -5, 0, 5000, 10**9],
        "e_ev": [-1.0, 0.0, 77.7, 400.0, 5000.0],
        "mode": ["fit", "realtime", "bogus"],
        "wait": [False],
        "name": ["c", "k", "N", "hc", "zz"],
        "value": [-2.0, 0.0, 1.0, 2.0, 1200.0],
        "e_lo": [60.0, 400.0], "e_hi": [50.0, 450.0], "n": [1, 21],
        "dwell_s": [-1.0, 0.5], "e_start": [100.0], "e_end": [100.5],
        "step": [0.25], "settle_s": [0.0], "since": [0, 5],
        "code": ["f"], "n_probe": [10],
    }
    for _ in range(2000):
        op = rng.choice(ops)
        if op == "start_scan":
            continue  # exercised separately; threads would pile up here
        args = {k: rng.choice(v) for k, v in arg_pool.items()
                if rng.random() < 0.5}
        resp = instance.dispatch(op, args)
        assert isinstance(resp, dict) and "ok" in resp
    assert ok(instance.dispatch("ping", {}))


# ------------------------------------------------------------- set_energy

def test_set_energy_realtime_targets(instance):
    alpha, beta = oracle_solve(1200.0, 1, 2.25, 1239.8420, 400.0)
    mirror_deg = oracle_mirror_grazing(alpha, beta)
    expect = round(mirror_deg * 3600.0)
    res = ok(instance.dispatch("set_energy",
                               {"e_ev": 400.0, "mode": "realtime",
                                "wait": True}))
    assert abs(res["mirror_steps"] - expect) <= 36  # +-0.01 deg
    snap = ok(instance.dispatch("snapshot", {}))
    for u in snap["units"]:
        if u["kind"] == "motor":
            assert u["state"] == "Idle"


def test_set_energy_fit_without_fit_is_stale(instance):
    assert err(instance.dispatch("set_energy",
                                 {"e_ev": 400.0, "mode": "fit"})) \
        == "E_STALE_FIT"


def test_fit_staleness_cycle(instance):
    ok(instance.dispatch("build_fit", {"e_lo": 250.0, "e_hi": 450.0, "n": 21}))
    ok(instance.dispatch("set_energy", {"e_ev": 400.0, "mode": "fit",
                                        "wait": True}))
    ok(instance.dispatch("set_mono_param", {"name": "c", "value": 2.0}))
    assert err(instance.dispatch("set_energy",
                                 {"e_ev": 400.0, "mode": "fit"})) \
        == "E_STALE_FIT"
    ok(instance.dispatch("build_fit", {"e_lo": 250.0, "e_hi": 450.0, "n": 21}))
    ok(instance.dispatch("set_energy", {"e_ev": 400.0, "mode": "fit",
                                        "wait": True}))


def test_set_mono_param_changes_realtime_solve(instance):
    before = ok(instance.dispatch("calc_positions", {"e_ev": 400.0}))
    ok(instance.dispatch("set_mono_param", {"name": "c", "value": 2.0}))
    after = ok(instance.dispatch("calc_positions", {"e_ev": 400.0}))
    alpha, beta = oracle_solve(1200.0, 1, 2.0, 1239.8420, 400.0)
    assert after["grating_deg"] == pytest.approx(90.0 + beta, abs=1e-9)
    assert after["grating_deg"] != pytest.approx(before["grating_deg"],
                                                 abs=1e-6)


def test_set_mono_param_singular_rejected(instance):
    assert err(instance.dispatch("set_mono_param",
                                 {"name": "c", "value": 1.0})) == "E_RANGE"
    assert err(instance.dispatch("set_mono_param",
                                 {"name": "zz", "value": 1.0})) == "E_RANGE"


def test_energy_estimate_after_move(instance):
    ok(instance.dispatch("set_energy", {"e_ev": 400.0, "mode": "realtime",
                                        "wait": True}))
    snap = ok(instance.dispatch("snapshot", {}))
    # one motor step = 1/3600 deg in beta; propagate through the inverse
    sol = kin.solve_diffraction(instance.mono, 400.0)
    step_deg = 1.0 / 3600.0
    e_hi = kin.energy_from_beta(instance.mono, sol.beta_deg - step_deg)
    bound = abs(e_hi - 400.0) * 1.5 + 1e-9
    assert snap["energy_ev"] == pytest.approx(400.0, abs=bound)


def test_energy_estimate_absent_at_home(instance):
    snap = ok(instance.dispatch("snapshot", {}))
    assert snap["energy_ev"] is None  # home angle maps to no valid beta


def test_snapshot_fresh_instance(instance):
    snap = ok(instance.dispatch("snapshot", {}))
    assert snap["scan"] == {"state": "idle"}
    assert snap["fits_built"] is False
    kinds = {u["kind"] for u in snap["units"]}
    assert kinds == {"motor", "encoder", "detector"}
    names = [u["name"] for u in snap["units"]]
    assert names == sorted(names)


def test_set_energy_during_scan_is_busy(instance):
    ok(instance.dispatch("start_scan",
                         {"e_start": 100.0, "e_end": 104.0, "step": 0.5,
                          "dwell_s": 0.5, "settle_s": 0.1}))
    try:
        assert err(instance.dispatch("set_energy", {"e_ev": 200.0})) == "E_BUSY"
        assert err(instance.dispatch("set_mono_param",
                                     {"name": "c", "value": 2.0})) == "E_BUSY"
        assert err(instance.dispatch("start_scan",
                                     {"e_start": 100.0, "e_end": 101.0,
                                      "step": 0.5, "dwell_s": 0.5})) == "E_BUSY"
    finally:
        instance.dispatch("abort_scan", {})
        instance.wait_scan_done()


def test_unit_state_and_list(instance):
    res = ok(instance.dispatch("unit_state", {"unit": "grating_enc"}))
    assert res["kind"] == "encoder" and "counts" in res
    units = ok(instance.dispatch("list_units", {}))["units"]
    assert len(units) == 5
    assert err(instance.dispatch("unit_state", {"unit": "zz"})) == "E_NO_UNIT"


def test_read_detector(instance):
    res = ok(instance.dispatch("read_detector",
                               {"unit": "det", "dwell_s": 2.0, "e_ev": 50.0}))
    assert res["counts"] == pytest.approx(200.0)  # flat background 100 cps
    assert err(instance.dispatch("read_detector",
                                 {"unit": "det", "dwell_s": -1.0,
                                  "e_ev": 50.0})) == "E_RANGE"
    assert err(instance.dispatch("read_detector",
                                 {"unit": "det", "dwell_s": 1.0})) == "E_RANGE"
