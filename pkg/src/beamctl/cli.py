"""Operator/engineer command-line client for the beamline server.

Talks the line-JSON protocol directly. The default session discipline is
static (one persistent connection for the whole invocation, the faster and
more stable of the two); --session dynamic opens one connection per call.
Exit codes: 0 success, 1 server-side error (code printed), 2 usage or
connection error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import protocol as proto
from . import scan as scanmod
from .errors import BeamlineError, ConnectionLost


class Caller:
    """One call surface over either session discipline."""

    def __init__(self, host: str, port: int, session_mode: str):
        self.host = host
        self.port = port
        self.session_mode = session_mode
        self._session: proto.Session | None = None
        self._next_id = 1
        if session_mode == "static":
            self._session = proto.Session(host, port)

    def call(self, op: str, args: dict | None = None) -> dict:
        if self._session is not None:
            return self._session.call(op, args)
        resp = proto.call_dynamic(self.host, self.port, op, args,
                                  req_id=self._next_id)
        self._next_id += 1
        return resp

    def close(self):
        if self._session is not None:
            self._session.close()


def render_table(snapshot: dict) -> str:
    """Fixed-column unit table, stable name order, deterministic output."""
    rows = [("NAME", "KIND", "STATE", "POSITION/READING")]
    for u in sorted(snapshot.get("units", []), key=lambda x: x["name"]):
        state = u["state"]
        if state == "Fault":
            state = f"FAULT({u.get('fault_code')})"
        if u["kind"] == "motor":
            reading = str(u["position_steps"])
        elif u["kind"] == "encoder":
            reading = str(u.get("counts", "-"))
        else:
            reading = "-"
        rows.append((u["name"], u["kind"], state, reading))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    return "\n".join(
        "  ".join(col.ljust(w) for col, w in zip(row, widths)).rstrip()
        for row in rows)


def _result(resp: dict):
    """Unwrap a response; raises BeamlineError on server-side failure."""
    if resp.get("ok"):
        return resp["result"]
    err = resp.get("error", {})
    raise BeamlineError(err.get("message", ""), code=err.get("code", "E_INTERNAL"))


def cmd_status(caller, args) -> int:
    snap = _result(caller.call("snapshot"))
    if args.json:
        print(json.dumps(snap, indent=2))
    else:
        print(render_table(snap))
        e = snap.get("energy_ev")
        print(f"energy: {e:.4f} eV" if e is not None else "energy: n/a")
        print(f"mode: {snap['mode']}  fits: "
              f"{'stale' if snap['fits_stale'] else 'ok' if snap['fits_built'] else 'none'}"
              f"  scan: {snap['scan']['state']}")
    return 0


def cmd_move(caller, args) -> int:
    op = "move_rel" if args.rel else "move_abs"
    res = _result(caller.call(op, {"unit": args.unit, "steps": args.steps,
                                   "wait": args.wait}))
    print(json.dumps(res))
    return 0


def cmd_energy(caller, args) -> int:
    res = _result(caller.call("set_energy", {"e_ev": args.ev,
                                             "mode": args.mode,
                                             "wait": args.wait}))
    print(json.dumps(res))
    return 0


def cmd_fit(caller, args) -> int:
    if args.fit_cmd == "build":
        res = _result(caller.call("build_fit", {"e_lo": args.lo,
                                                "e_hi": args.hi,
                                                "n": args.n}))
        for axis in ("mirror", "grating"):
            f = res[axis]
            print(f"{axis}: max_residual {f['max_residual_deg']:.3e} deg, "
                  f"rms {f['rms_residual_deg']:.3e} deg over "
                  f"[{f['domain'][0]}, {f['domain'][1]}] eV")
    else:
        res = _result(caller.call("fit_report", {"n_probe": args.n_probe}))
        print(json.dumps(res, indent=2))
    return 0


def cmd_scan(caller, args) -> int:
    plan = {"e_start": args.start, "e_end": args.end,
            "dwell_s": args.dwell, "settle_s": args.settle,
            "mode": args.mode}
    if args.step is not None:
        plan["step"] = args.step
    if args.server_out:
        plan["output"] = args.server_out
    res = _result(caller.call("start_scan", plan))
    total = res["n_points"]
    print(f"scan started: {total} points")
    points = []
    seen = 0
    while True:
        res = _result(caller.call("scan_points", {"since": seen}))
        for p in res["points"]:
            points.append(p)
            seen = p["index"] + 1
            print(f"  {p['index']:4d}  E_set={p['e_set_ev']:.4f}  "
                  f"E_rb={p['e_readback_ev']:.4f}  counts={p['counts']:.2f}")
        state = res["status"]["state"]
        if state != "running":
            print(f"scan {state}")
            break
        time.sleep(0.05)
    if args.out:
        scanmod.persist(points, args.out)
        print(f"wrote {args.out}")
    return 0 if state == "done" else 1


def cmd_fault(caller, args) -> int:
    if args.unit_or_clear == "clear":
        if args.code_or_unit is None:
            print("usage: fault clear <unit>", file=sys.stderr)
            return 2
        res = _result(caller.call("clear_fault", {"unit": args.code_or_unit}))
    else:
        if args.code_or_unit is None:
            print("usage: fault <unit> <code>", file=sys.stderr)
            return 2
        res = _result(caller.call("inject_fault",
                                  {"unit": args.unit_or_clear,
                                   "code": args.code_or_unit}))
    print(json.dumps(res))
    return 0


def cmd_bench(caller, args) -> int:
    modes = ("dynamic", "static") if args.mode == "both" else (args.mode,)
    before = _result(caller.call("ping")).get("accept_count")
    res = proto.bench_sessions(caller.host, caller.port, args.calls,
                               modes=modes)
    after = _result(caller.call("ping")).get("accept_count")
    for mode in modes:
        print(f"{mode}: {res[f'{mode}_ms']:.1f} ms total for "
              f"{args.calls} calls")
    if "ratio" in res:
        print(f"ratio dynamic/static: {res['ratio']:.2f}")
    if before is not None and after is not None:
        print(f"server accepts during benchmark: {after - before - 1}")
    return 0


def cmd_param(caller, args) -> int:
    res = _result(caller.call("set_mono_param", {"name": args.name,
                                                 "value": args.value}))
    print(json.dumps(res))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamline", description="Beamline control client")
    parser.add_argument("--host",
                        default=os.environ.get("BEAMLINE_HOST", "127.0.0.1"))
    parser.add_argument("--port", type=int,
                        default=int(os.environ.get("BEAMLINE_PORT", "5025")))
    parser.add_argument("--session", choices=("dynamic", "static"),
                        default="static")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("status", help="show unit states")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("move", help="move a motor")
    p.add_argument("unit")
    p.add_argument("steps", type=int)
    p.add_argument("--rel", action="store_true")
    p.add_argument("--wait", action="store_true")
    p.set_defaults(func=cmd_move)

    p = sub.add_parser("energy", help="drive the monochromator to an energy")
    p.add_argument("ev", type=float)
    p.add_argument("--mode", choices=("fit", "realtime"), default="realtime")
    p.add_argument("--wait", action="store_true")
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("fit", help="build or inspect the cubic fit")
    fit_sub = p.add_subparsers(dest="fit_cmd", required=True)
    b = fit_sub.add_parser("build")
    b.add_argument("lo", type=float)
    b.add_argument("hi", type=float)
    b.add_argument("n", type=int)
    r = fit_sub.add_parser("report")
    r.add_argument("--n-probe", type=int, default=1000)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("scan", help="run an energy scan")
    p.add_argument("start", type=float)
    p.add_argument("end", type=float)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--dwell", type=float, default=0.1)
    p.add_argument("--settle", type=float, default=0.1)
    p.add_argument("--mode", choices=("fit", "realtime"), default="realtime")
    p.add_argument("--out", default=None, help="write points to a local CSV")
    p.add_argument("--server-out", default=None,
                   help="server-side CSV path passed to the scan engine")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("fault", help="fault <unit> <code> | fault clear <unit>")
    p.add_argument("unit_or_clear")
    p.add_argument("code_or_unit", nargs="?", default=None)
    p.set_defaults(func=cmd_fault)

    p = sub.add_parser("bench",
                       help="time dynamic vs static connection disciplines")
    p.add_argument("--calls", type=int, default=500)
    p.add_argument("--mode", choices=("dynamic", "static", "both"),
                   default="both")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("param", help="set a monochromator parameter")
    param_sub = p.add_subparsers(dest="param_cmd", required=True)
    s = param_sub.add_parser("set")
    s.add_argument("name", choices=("c", "k", "N", "hc"))
    s.add_argument("value", type=float)
    p.set_defaults(func=cmd_param)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        caller = Caller(args.host, args.port, args.session)
    except ConnectionLost as e:
        print(f"connection error: {e}", file=sys.stderr)
        return 2
    try:
        return args.func(caller, args)
    except ConnectionLost as e:
        print(f"connection error: {e}", file=sys.stderr)
        return 2
    except BeamlineError as e:
        print(f"error {e.code}: {e.message}")
        return 1
    finally:
        caller.close()


if __name__ == "__main__":
    sys.exit(main())
