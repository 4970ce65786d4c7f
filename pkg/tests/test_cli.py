import json

import pytest

from beamctl import cli
from beamctl import protocol as proto
from beamctl.server import BeamlineInstance

from conftest import make_config


@pytest.fixture
def live():
    inst = BeamlineInstance(make_config())
    inst.start_ticker()
    srv = proto.serve(inst, "127.0.0.1", 0, background=True)
    yield inst, srv
    srv.shutdown()
    inst.stop_ticker()


def run_cli(srv, *argv, capsys=None):
    rc = cli.main(["--host", "127.0.0.1", "--port", str(srv.port), *argv])
    return rc


def test_status_json(live, capsys):
    inst, srv = live
    assert run_cli(srv, "status", "--json") == 0
    snap = json.loads(capsys.readouterr().out)
    assert {"units", "energy_ev", "scan"} <= set(snap)


def test_status_table_deterministic(live, capsys):
    inst, srv = live
    run_cli(srv, "status")
    first = capsys.readouterr().out
    run_cli(srv, "status")
    second = capsys.readouterr().out
    assert first == second
    assert first.splitlines()[0].split() == ["NAME", "KIND", "STATE",
                                             "POSITION/READING"]


def test_render_table_empty_and_fault():
    assert cli.render_table({"units": []}) == "NAME  KIND  STATE  POSITION/READING"
    table = cli.render_table({"units": [
        {"name": "m", "kind": "motor", "state": "Fault",
         "fault_code": "estop", "position_steps": 5}]})
    assert "FAULT(estop)" in table


def test_move_and_energy(live, capsys):
    inst, srv = live
    assert run_cli(srv, "move", "mirror_pitch", "1000", "--wait") == 0
    assert run_cli(srv, "energy", "400", "--wait") == 0
    out = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert "mirror_steps" in out


def test_energy_fit_before_build_exits_1(live, capsys):
    inst, srv = live
    assert run_cli(srv, "energy", "400", "--mode", "fit") == 1
    assert "E_STALE_FIT" in capsys.readouterr().out


def test_fit_build_and_report(live, capsys):
    inst, srv = live
    assert run_cli(srv, "fit", "build", "250", "450", "21") == 0
    assert run_cli(srv, "fit", "report") == 0


def test_param_set(live, capsys):
    inst, srv = live
    assert run_cli(srv, "param", "set", "c", "2.0") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["fixed_focus_ratio"] == 2.0
    assert run_cli(srv, "param", "set", "c", "1.0") == 1


def test_fault_cycle(live, capsys):
    inst, srv = live
    assert run_cli(srv, "fault", "grating_pitch", "estop") == 0
    assert run_cli(srv, "move", "grating_pitch", "10") == 1
    assert "E_FAULT" in capsys.readouterr().out
    assert run_cli(srv, "fault", "clear", "grating_pitch") == 0
    assert run_cli(srv, "move", "grating_pitch", "10", "--wait") == 0


def test_scan_out_matches_server_csv(live, capsys, tmp_path):
    inst, srv = live
    local = tmp_path / "local.csv"
    remote = tmp_path / "remote.csv"
    rc = run_cli(srv, "scan", "100", "101", "--step", "0.5",
                 "--dwell", "0.3", "--settle", "0", "--out", str(local),
                 "--server-out", str(remote))
    assert rc == 0
    assert local.read_bytes() == remote.read_bytes()


def test_bench_static_faster(live, capsys):
    inst, srv = live
    assert run_cli(srv, "bench", "--calls", "60", "--mode", "both") == 0
    out = capsys.readouterr().out
    assert "ratio dynamic/static:" in out
    ratio = float(out.split("ratio dynamic/static:")[1].split()[0])
    assert ratio > 1.0


def test_session_connection_counts(live):
    inst, srv = live
    meter = proto.Session("127.0.0.1", srv.port)
    base = meter.call("ping")["result"]["accept_count"]
    # static: whole invocation shares one connection
    assert cli.main(["--host", "127.0.0.1", "--port", str(srv.port),
                     "--session", "static", "status", "--json"]) == 0
    after_static = meter.call("ping")["result"]["accept_count"]
    assert after_static - base == 1
    # dynamic: one connection per request
    assert cli.main(["--host", "127.0.0.1", "--port", str(srv.port),
                     "--session", "dynamic", "status", "--json"]) == 0
    after_dynamic = meter.call("ping")["result"]["accept_count"]
    assert after_dynamic - after_static == 1  # status issues exactly one call
    meter.close()


def test_connection_error_exit_2(capsys):
    assert cli.main(["--host", "127.0.0.1", "--port", "1", "status"]) == 2


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as e:
        cli.main(["move"])  # missing args
    assert e.value.code == 2
