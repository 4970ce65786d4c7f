"""The singleton beamline device server.

One BeamlineInstance per process owns all simulated units, the
monochromator config and fits, and the active scan. Every mutation flows
through the instance lock, so concurrent client sessions see one
consistent state timeline, and dispatch() converts every failure into a
structured error response: the server never dies on a bad command.
"""

from __future__ import annotations

import threading
import time

from . import kinematics as kin
from . import scan as scanmod
from .config import BeamlineConfig
from .errors import (
    BeamlineError, BusyError, FaultError, NoScanError, NoUnitError,
    ParseError, RangeError, StaleFitError,
)
from .hardware import (
    FAULT, IDLE, MOVING, DetectorUnit, EncoderUnit, MotorUnit, SimClock,
    _round_half_away,
)

MONO_PARAM_NAMES = {"c", "k", "N", "hc"}

WAIT_POLL_S = 0.001


class _ScanRecord:
    def __init__(self, plan: scanmod.ScanPlan):
        self.plan = plan
        self.points: list[scanmod.ScanPoint] = []
        self.status = {"state": "running", "current": 0, "total": plan.n_points}
        self.abort_requested = False
        self.thread: threading.Thread | None = None

    @property
    def active(self) -> bool:
        return self.status["state"] == "running"


class BeamlineInstance:
    """The one server-owned beamline state object."""

    def __init__(self, config: BeamlineConfig):
        self.config = config
        self.lock = threading.RLock()
        self.clock = SimClock(config.clock_mode, config.clock_factor)
        self.mono = config.mono
        self.mode = "realtime"
        self.fits: dict[str, kin.CubicFit] | None = None
        self.fits_stale = False
        self.scan: _ScanRecord | None = None
        self.started_wall = time.monotonic()

        self.motors: dict[str, MotorUnit] = {}
        self.encoders: dict[str, EncoderUnit] = {}
        self.detectors: dict[str, DetectorUnit] = {}
        for m in config.motors:
            self.motors[m.name] = MotorUnit(
                m.name, m.home_steps, m.velocity_sps, m.soft_min, m.soft_max)
        for e in config.encoders:
            self.encoders[e.name] = EncoderUnit(
                e.name, e.motor, e.counts_per_step, e.offset_counts)
        for d in config.detectors:
            self.detectors[d.name] = DetectorUnit(
                d.name, d.background_cps, list(d.peaks), d.noise, d.seed)

        self._ticker: threading.Thread | None = None
        self._ticker_stop = threading.Event()

    # ------------------------------------------------------------------ time

    def tick(self, sim_dt: float | None = None) -> None:
        """Advance simulated time and all moving motors. sim_dt=None folds
        in elapsed wall time (scaled by the clock factor)."""
        with self.lock:
            if sim_dt is None:
                dt = self.clock.advance_wall()
            else:
                dt = self.clock.advance_by(sim_dt)
            for motor in self.motors.values():
                motor.tick(dt)

    def start_ticker(self) -> None:
        if self._ticker is not None:
            return
        self._ticker_stop.clear()
        self.clock.advance_wall()  # reset the wall baseline

        def loop():
            while not self._ticker_stop.wait(self.config.tick_period_s):
                self.tick()

        self._ticker = threading.Thread(target=loop, name="beamline-ticker",
                                        daemon=True)
        self._ticker.start()

    def stop_ticker(self) -> None:
        if self._ticker is None:
            return
        self._ticker_stop.set()
        self._ticker.join(timeout=2.0)
        self._ticker = None

    # ----------------------------------------------------------------- units

    def _motor(self, name: str) -> MotorUnit:
        try:
            return self.motors[name]
        except KeyError:
            raise NoUnitError(f"no motor {name!r}") from None

    def _unit_snapshot(self, name: str) -> dict:
        for registry in (self.motors, self.encoders, self.detectors):
            if name in registry:
                snap = registry[name].snapshot()
                if name in self.encoders:
                    snap["counts"] = self.encoder_read(name)
                return snap
        raise NoUnitError(f"no unit {name!r}")

    def encoder_read(self, name: str) -> int:
        enc = self.encoders.get(name)
        if enc is None:
            raise NoUnitError(f"no encoder {name!r}")
        motor = self.motors.get(enc.bound_motor)
        if motor is None:
            raise NoUnitError(f"encoder {name} bound to missing motor "
                              f"{enc.bound_motor!r}")
        return enc.read(motor)

    def _axis_encoder(self, axis: str) -> EncoderUnit | None:
        motor_name = self.config.axes[axis].motor
        for enc in self.encoders.values():
            if enc.bound_motor == motor_name:
                return enc
        return None

    def _axis_angle_deg(self, axis: str) -> float:
        """Axis angle reconstructed from its encoder (falls back to the
        motor position when no encoder is bound)."""
        ax = self.config.axes[axis]
        enc = self._axis_encoder(axis)
        if enc is not None:
            steps = enc.steps_from_counts(self.encoder_read(enc.name))
        else:
            steps = self._motor(ax.motor).position_steps
        return steps / ax.steps_per_degree + ax.offset_deg

    def _axis_readback_steps(self, axis: str) -> int:
        ax = self.config.axes[axis]
        enc = self._axis_encoder(axis)
        if enc is not None:
            return _round_half_away(enc.steps_from_counts(self.encoder_read(enc.name)))
        return self._motor(ax.motor).position_steps

    # ------------------------------------------------------------ kinematics

    def _angles_for_energy(self, e_ev: float, mode: str) -> dict:
        if mode == "fit":
            if self.fits is None or self.fits_stale:
                raise StaleFitError(
                    "no current fit; build_fit after any mono parameter change")
            mirror = kin.eval_fit(self.fits["mirror"], e_ev)
            grating = kin.eval_fit(self.fits["grating"], e_ev)
        elif mode == "realtime":
            sol = kin.solve_diffraction(self.mono, e_ev)
            mirror = sol.mirror_grazing_deg
            grating = sol.grating_exit_grazing_deg
        else:
            raise RangeError(f"mode must be fit|realtime, got {mode!r}")
        return {"mirror_deg": mirror, "grating_deg": grating}

    def _angle_to_steps(self, axis: str, angle_deg: float) -> int:
        ax = self.config.axes[axis]
        return _round_half_away((angle_deg - ax.offset_deg) * ax.steps_per_degree)

    def calc_positions(self, e_ev: float, mode: str = "realtime") -> dict:
        t0 = time.perf_counter()
        with self.lock:
            angles = self._angles_for_energy(e_ev, mode)
        calc_ms = (time.perf_counter() - t0) * 1e3
        return {
            "e_ev": e_ev,
            "mode": mode,
            "mirror_deg": angles["mirror_deg"],
            "grating_deg": angles["grating_deg"],
            "mirror_steps": self._angle_to_steps("mirror", angles["mirror_deg"]),
            "grating_steps": self._angle_to_steps("grating", angles["grating_deg"]),
            "calc_ms": calc_ms,
        }

    # ---------------------------------------------------------------- motion

    def _command_energy_targets(self, e_ev: float, mode: str) -> dict:
        """Validate and start both axis moves atomically; neither motor
        moves if either target fails validation."""
        with self.lock:
            if self.scan is not None and self.scan.active:
                raise BusyError("scan active; axes are owned by the scan")
            return self._command_energy_targets_unlocked(e_ev, mode)

    def _command_energy_targets_unlocked(self, e_ev: float, mode: str) -> dict:
        angles = self._angles_for_energy(e_ev, mode)
        targets = {
            "mirror": self._angle_to_steps("mirror", angles["mirror_deg"]),
            "grating": self._angle_to_steps("grating", angles["grating_deg"]),
        }
        motors = {axis: self._motor(self.config.axes[axis].motor)
                  for axis in ("mirror", "grating")}
        for axis, motor in motors.items():
            if motor.state == FAULT:
                raise FaultError(f"{motor.name} faulted: {motor.fault_code}")
            if motor.state == MOVING:
                raise BusyError(f"{motor.name} already moving")
            t = targets[axis]
            if not (motor.soft_min <= t <= motor.soft_max):
                raise BeamlineError(
                    f"{motor.name}: target {t} outside soft limits", code="E_LIMIT")
        max_dur = 0.0
        for axis, motor in motors.items():
            info = motor.move_abs(targets[axis])
            max_dur = max(max_dur, info["duration_s"])
        self.mode = mode
        return {
            "mirror_steps": targets["mirror"],
            "grating_steps": targets["grating"],
            "mirror_deg": angles["mirror_deg"],
            "grating_deg": angles["grating_deg"],
            "max_duration_s": max_dur,
        }

    def _wait_axes_idle(self, timeout_sim_s: float) -> None:
        with self.lock:
            deadline = self.clock.now + timeout_sim_s
            names = [self.config.axes[a].motor for a in ("mirror", "grating")]
        while True:
            with self.lock:
                motors = [self.motors[n] for n in names]
                if any(m.state == FAULT for m in motors):
                    bad = next(m for m in motors if m.state == FAULT)
                    raise FaultError(f"{bad.name} faulted: {bad.fault_code}")
                if all(m.state == IDLE for m in motors):
                    return
                if self.clock.now > deadline:
                    raise FaultError("move_timeout")
            time.sleep(WAIT_POLL_S)

    def _wait_motor_idle(self, motor: MotorUnit, timeout_sim_s: float) -> None:
        with self.lock:
            deadline = self.clock.now + timeout_sim_s
        while True:
            with self.lock:
                if motor.state != MOVING:
                    return
                if self.clock.now > deadline:
                    raise FaultError("move_timeout")
            time.sleep(WAIT_POLL_S)

    def _wait_sim_seconds(self, sim_s: float) -> None:
        if sim_s <= 0:
            return
        with self.lock:
            deadline = self.clock.now + sim_s
        while True:
            with self.lock:
                if self.clock.now >= deadline:
                    return
            time.sleep(WAIT_POLL_S)

    def set_energy(self, e_ev: float, mode: str = "realtime",
                   wait: bool = False) -> dict:
        res = self._command_energy_targets(e_ev, mode)
        if wait:
            timeout = res["max_duration_s"] * 2.0 + 5.0
            self._wait_axes_idle(timeout)
        return {k: res[k] for k in
                ("mirror_steps", "grating_steps", "mirror_deg", "grating_deg")}

    # ------------------------------------------------------------------ mono

    def set_mono_param(self, name: str, value: float) -> dict:
        with self.lock:
            if self.scan is not None and self.scan.active:
                raise BusyError("scan active")
            if name not in MONO_PARAM_NAMES:
                raise RangeError(
                    f"unknown mono parameter {name!r}; one of {sorted(MONO_PARAM_NAMES)}")
            field = {"c": "fixed_focus_ratio", "k": "order",
                     "N": "line_density", "hc": "hc"}[name]
            value = int(value) if name == "k" else float(value)
            try:
                self.mono = self.mono.replace(**{field: value})
            except BeamlineError as e:
                raise RangeError(str(e)) from e
            if self.fits is not None:
                self.fits_stale = True
            return self.mono_dict()

    def mono_dict(self) -> dict:
        return {
            "line_density": self.mono.line_density,
            "order": self.mono.order,
            "fixed_focus_ratio": self.mono.fixed_focus_ratio,
            "energy_min": self.mono.energy_min,
            "energy_max": self.mono.energy_max,
            "hc": self.mono.hc,
        }

    def build_fit(self, e_lo: float, e_hi: float, n: int) -> dict:
        with self.lock:
            mono = self.mono
        mirror, grating = kin.build_fit_table(mono, e_lo, e_hi, n)
        with self.lock:
            if mono != self.mono:  # params changed while fitting
                raise StaleFitError("mono parameters changed during fit build")
            self.fits = {"mirror": mirror, "grating": grating}
            self.fits_stale = False
        return {"mirror": mirror.to_dict(), "grating": grating.to_dict()}

    def fit_report(self, n_probe: int = 1000) -> dict:
        with self.lock:
            if self.fits is None:
                raise StaleFitError("no fit built")
            fits = (self.fits["mirror"], self.fits["grating"])
            mono = self.mono
            stale = self.fits_stale
        report = kin.fit_error_report(mono, fits, n_probe)
        report["stale"] = stale
        return report

    # ---------------------------------------------------------------- energy

    def energy_estimate(self) -> float | None:
        """Photon energy implied by the grating encoder, or None when the
        axis angle does not map to a valid diffraction geometry."""
        with self.lock:
            try:
                grating_deg = self._axis_angle_deg("grating")
            except BeamlineError:
                return None
            beta_deg = grating_deg - 90.0
            try:
                return kin.energy_from_beta(self.mono, beta_deg)
            except BeamlineError:
                return None

    # ------------------------------------------------------------- detectors

    def read_detector(self, name: str, dwell_s: float,
                      e_ev: float | None = None) -> dict:
        with self.lock:
            det = self.detectors.get(name)
            if det is None:
                raise NoUnitError(f"no detector {name!r}")
            if e_ev is None:
                e_ev = self.energy_estimate()
                if e_ev is None:
                    raise RangeError(
                        "no current energy estimate; pass e_ev explicitly")
            counts = det.read(e_ev, dwell_s)
        return {"unit": name, "e_ev": e_ev, "dwell_s": dwell_s, "counts": counts}

    # ------------------------------------------------------------------ scan

    def start_scan(self, plan: scanmod.ScanPlan) -> dict:
        with self.lock:
            if self.scan is not None and self.scan.active:
                raise BusyError("scan already running")
            plan = scanmod.plan_validate(plan, self.mono,
                                         self.config.resolving_power)
            for axis in ("mirror", "grating"):
                motor = self._motor(self.config.axes[axis].motor)
                if motor.state == MOVING:
                    raise BusyError(f"{motor.name} moving; axes must be idle")
            record = _ScanRecord(plan)
            self.scan = record
        thread = threading.Thread(target=self._run_scan, args=(record,),
                                  name="beamline-scan", daemon=True)
        record.thread = thread
        thread.start()
        return {"n_points": plan.n_points, "plan": plan.to_dict()}

    def _run_scan(self, record: _ScanRecord) -> None:
        plan = record.plan
        detector = next(iter(self.detectors.values()), None)
        for i in range(plan.n_points):
            with self.lock:
                if record.abort_requested:
                    record.status = {"state": "aborted", "at_index": i,
                                     "total": plan.n_points}
                    return
                record.status = {"state": "running", "current": i,
                                 "total": plan.n_points}
            e_set = plan.energy_at(i)
            try:
                t0 = time.perf_counter()
                with self.lock:
                    res = self._command_energy_targets_unlocked(e_set, plan.mode)
                calc_ms = (time.perf_counter() - t0) * 1e3
                self._wait_axes_idle(res["max_duration_s"] * 2.0 + 5.0)
                self._wait_sim_seconds(plan.settle_s)
                with self.lock:
                    mirror_steps = self._axis_readback_steps("mirror")
                    grating_steps = self._axis_readback_steps("grating")
                    e_readback = self.energy_estimate()
                    if e_readback is None:
                        raise RangeError("grating readback yields no energy")
                    counts = (detector.read(e_readback, plan.dwell_s)
                              if detector is not None else 0.0)
                    point = scanmod.ScanPoint(
                        index=i, e_set_ev=e_set, e_readback_ev=e_readback,
                        mirror_steps=mirror_steps, grating_steps=grating_steps,
                        counts=counts, calc_ms=calc_ms, t_s=self.clock.now)
                    record.points.append(point)
            except BeamlineError as e:
                with self.lock:
                    record.status = {"state": "failed", "code": e.code,
                                     "at_index": i, "total": plan.n_points,
                                     "message": e.message}
                return
            except Exception as e:  # a scan bug must not kill the server
                with self.lock:
                    record.status = {"state": "failed", "code": "E_INTERNAL",
                                     "at_index": i, "total": plan.n_points,
                                     "message": str(e)}
                return
        status = {"state": "done", "total": plan.n_points}
        if plan.output:
            try:
                scanmod.persist(record.points, plan.output)
            except BeamlineError as e:
                status = {"state": "failed", "code": e.code,
                          "at_index": plan.n_points, "total": plan.n_points,
                          "message": e.message}
        with self.lock:
            record.status = status

    def abort_scan(self) -> dict:
        with self.lock:
            if self.scan is None or not self.scan.active:
                raise NoScanError("no scan running")
            self.scan.abort_requested = True
            thread = self.scan.thread
        if thread is not None:
            thread.join(timeout=30.0)
        with self.lock:
            return dict(self.scan.status)

    def scan_status(self) -> dict:
        with self.lock:
            if self.scan is None:
                return {"state": "idle"}
            return dict(self.scan.status)

    def scan_points(self, since: int = 0) -> dict:
        with self.lock:
            if self.scan is None:
                return {"points": [], "status": {"state": "idle"}}
            pts = [p.to_dict() for p in self.scan.points[since:]]
            return {"points": pts, "status": dict(self.scan.status)}

    def wait_scan_done(self, timeout_s: float = 60.0) -> dict:
        """Test/client helper: block until the current scan reaches a
        terminal state."""
        deadline = time.monotonic() + timeout_s
        while time.monotonic() < deadline:
            status = self.scan_status()
            if status["state"] not in ("running",):
                return status
            time.sleep(WAIT_POLL_S)
        return self.scan_status()

    # -------------------------------------------------------------- snapshot

    def snapshot(self) -> dict:
        with self.lock:
            units = sorted(
                (u.snapshot() for u in
                 list(self.motors.values()) + list(self.encoders.values())
                 + list(self.detectors.values())),
                key=lambda s: s["name"])
            for snap in units:
                if snap["kind"] == "encoder":
                    snap["counts"] = self.encoder_read(snap["name"])
            return {
                "units": units,
                "energy_ev": self.energy_estimate(),
                "mode": self.mode,
                "mono": self.mono_dict(),
                "fits_built": self.fits is not None,
                "fits_stale": bool(self.fits is not None and self.fits_stale),
                "scan": self.scan_status(),
                "uptime_s": time.monotonic() - self.started_wall,
                "sim_time_s": self.clock.now,
            }

    # -------------------------------------------------------------- dispatch

    def dispatch(self, op: str, args: dict | None) -> dict:
        """Total command dispatcher: any op against any state yields
        {"ok": True, "result": ...} or {"ok": False, "error": ...};
        no command terminates the process."""
        args = args or {}
        try:
            if not isinstance(args, dict):
                raise ParseError("args must be an object")
            handler = _OPS.get(op)
            if handler is None:
                raise ParseError(f"unknown op {op!r}")
            result = handler(self, args)
            return {"ok": True, "result": result}
        except BeamlineError as e:
            return {"ok": False,
                    "error": {"code": e.code, "message": e.message}}
        except (TypeError, ValueError, KeyError) as e:
            return {"ok": False,
                    "error": {"code": "E_PARSE",
                              "message": f"bad arguments for {op}: {e}"}}
        except Exception as e:
            return {"ok": False,
                    "error": {"code": "E_INTERNAL", "message": str(e)}}


def _need(args: dict, key: str):
    if key not in args:
        raise ParseError(f"missing argument {key!r}")
    return args[key]


def _op_ping(inst, args):
    return {"server": inst.config.server_name,
            "uptime_s": time.monotonic() - inst.started_wall}


def _op_list_units(inst, args):
    return {"units": inst.snapshot()["units"]}


def _op_unit_state(inst, args):
    with inst.lock:
        return inst._unit_snapshot(str(_need(args, "unit")))


def _op_move_abs(inst, args):
    with inst.lock:
        motor = inst._motor(str(_need(args, "unit")))
        res = motor.move_abs(int(_need(args, "steps")))
    if args.get("wait"):
        inst._wait_motor_idle(motor, res["duration_s"] * 2.0 + 5.0)
        res = motor.snapshot()
    return res


def _op_move_rel(inst, args):
    with inst.lock:
        motor = inst._motor(str(_need(args, "unit")))
        res = motor.move_rel(int(_need(args, "steps")))
    if args.get("wait"):
        inst._wait_motor_idle(motor, res["duration_s"] * 2.0 + 5.0)
        res = motor.snapshot()
    return res


def _op_stop(inst, args):
    with inst.lock:
        return inst._motor(str(_need(args, "unit"))).stop()


def _op_set_energy(inst, args):
    return inst.set_energy(float(_need(args, "e_ev")),
                           str(args.get("mode", "realtime")),
                           bool(args.get("wait", False)))


def _op_get_energy(inst, args):
    return {"e_ev": inst.energy_estimate(), "source": "grating_encoder"}


def _op_calc_positions(inst, args):
    return inst.calc_positions(float(_need(args, "e_ev")),
                               str(args.get("mode", "realtime")))


def _op_build_fit(inst, args):
    return inst.build_fit(float(_need(args, "e_lo")),
                          float(_need(args, "e_hi")),
                          int(_need(args, "n")))


def _op_fit_report(inst, args):
    return inst.fit_report(int(args.get("n_probe", 1000)))


def _op_set_mono_param(inst, args):
    return inst.set_mono_param(str(_need(args, "name")),
                               float(_need(args, "value")))


def _op_read_detector(inst, args):
    e_ev = args.get("e_ev")
    return inst.read_detector(str(_need(args, "unit")),
                              float(_need(args, "dwell_s")),
                              None if e_ev is None else float(e_ev))


def _op_inject_fault(inst, args):
    with inst.lock:
        motor = inst._motor(str(_need(args, "unit")))
        motor.inject_fault(str(args.get("code", "fault")))
        return motor.snapshot()


def _op_clear_fault(inst, args):
    with inst.lock:
        motor = inst._motor(str(_need(args, "unit")))
        motor.clear_fault()
        return motor.snapshot()


def _op_start_scan(inst, args):
    step = args.get("step")
    plan = scanmod.ScanPlan(
        e_start=float(_need(args, "e_start")),
        e_end=float(_need(args, "e_end")),
        step=None if step is None else float(step),
        dwell_s=float(args.get("dwell_s", 0.1)),
        settle_s=float(args.get("settle_s", scanmod.DEFAULT_SETTLE_S)),
        mode=str(args.get("mode", "realtime")),
        output=args.get("output"),
    )
    return inst.start_scan(plan)


def _op_abort_scan(inst, args):
    return inst.abort_scan()


def _op_scan_status(inst, args):
    return inst.scan_status()


def _op_scan_points(inst, args):
    return inst.scan_points(int(args.get("since", 0)))


def _op_snapshot(inst, args):
    return inst.snapshot()


_OPS = {
    "ping": _op_ping,
    "list_units": _op_list_units,
    "unit_state": _op_unit_state,
    "move_abs": _op_move_abs,
    "move_rel": _op_move_rel,
    "stop": _op_stop,
    "set_energy": _op_set_energy,
    "get_energy": _op_get_energy,
    "calc_positions": _op_calc_positions,
    "build_fit": _op_build_fit,
    "fit_report": _op_fit_report,
    "set_mono_param": _op_set_mono_param,
    "read_detector": _op_read_detector,
    "inject_fault": _op_inject_fault,
    "clear_fault": _op_clear_fault,
    "start_scan": _op_start_scan,
    "abort_scan": _op_abort_scan,
    "scan_status": _op_scan_status,
    "scan_points": _op_scan_points,
    "snapshot": _op_snapshot,
}


_instance: BeamlineInstance | None = None
_instance_lock = threading.Lock()


def init_once(config: BeamlineConfig) -> BeamlineInstance:
    """Create the process-wide singleton on first call; later calls return
    the same instance unchanged (its accumulated state is preserved)."""
    global _instance
    with _instance_lock:
        if _instance is None:
            _instance = BeamlineInstance(config)
        return _instance


def _reset_instance_for_tests() -> None:
    global _instance
    with _instance_lock:
        if _instance is not None:
            _instance.stop_ticker()
        _instance = None
