"""Simulated beamline hardware: stepper motors, encoders, a detector.

Units are plain state machines advanced by tick(dt). Motors move at
constant velocity (no ramp), so motion under tick is piecewise linear and
additive: tick(a) then tick(b) lands where tick(a+b) would. Every
operation on every reachable state returns a value or raises a structured
BeamlineError; nothing here terminates the process.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import BusyError, FaultError, LimitError, NoUnitError, RangeError

IDLE = "Idle"
MOVING = "Moving"
FAULT = "Fault"


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


class MotorUnit:
    """Stepper axis with software travel limits.

    Position is tracked as a float internally so sub-step motion over a
    tick accumulates exactly; position_steps reports the nearest step.
    """

    def __init__(self, name: str, home_steps: int, velocity_sps: float,
                 soft_min: int, soft_max: int):
        if velocity_sps <= 0:
            raise RangeError(f"{name}: velocity must be > 0")
        if not (soft_min <= home_steps <= soft_max):
            raise RangeError(f"{name}: home outside soft limits")
        self.name = name
        self.velocity_sps = float(velocity_sps)
        self.soft_min = int(soft_min)
        self.soft_max = int(soft_max)
        self.state = IDLE
        self.fault_code: str | None = None
        self._pos = float(home_steps)
        self._target = float(home_steps)

    @property
    def position_steps(self) -> int:
        return _round_half_away(self._pos)

    @property
    def target_steps(self) -> int:
        return _round_half_away(self._target)

    def move_abs(self, steps: int) -> dict:
        if self.state == FAULT:
            raise FaultError(f"{self.name} faulted: {self.fault_code}")
        if self.state == MOVING:
            raise BusyError(f"{self.name} already moving")
        if not (self.soft_min <= steps <= self.soft_max):
            raise LimitError(
                f"{self.name}: {steps} outside [{self.soft_min}, {self.soft_max}]")
        self._target = float(steps)
        duration = abs(self._target - self._pos) / self.velocity_sps
        if duration > 0:
            self.state = MOVING
        else:
            self._pos = self._target
        return {"unit": self.name, "target_steps": int(steps),
                "duration_s": duration}

    def move_rel(self, delta_steps: int) -> dict:
        return self.move_abs(self.position_steps + int(delta_steps))

    def stop(self) -> dict:
        if self.state == MOVING:
            self._target = self._pos
            self.state = IDLE
        return self.snapshot()

    def tick(self, dt: float) -> None:
        if dt < 0:
            raise RangeError("dt must be >= 0")
        if self.state != MOVING:
            return
        remaining = self._target - self._pos
        step = self.velocity_sps * dt
        if step >= abs(remaining):
            self._pos = self._target
            self.state = IDLE
        else:
            self._pos += math.copysign(step, remaining)

    def inject_fault(self, code: str) -> None:
        self.state = FAULT
        self.fault_code = code or "fault"
        self._target = self._pos

    def clear_fault(self) -> None:
        if self.state == FAULT:
            self.state = IDLE
            self.fault_code = None

    def snapshot(self) -> dict:
        return {
            "name": self.name,
            "kind": "motor",
            "state": self.state,
            "position_steps": self.position_steps,
            "target_steps": self.target_steps,
            "fault_code": self.fault_code,
            "soft_min": self.soft_min,
            "soft_max": self.soft_max,
            "velocity_sps": self.velocity_sps,
        }


class EncoderUnit:
    """Readback device bound to a motor: counts = round(steps*scale)
    + offset + injected slip."""

    def __init__(self, name: str, bound_motor: str, counts_per_step: float,
                 offset_counts: int = 0):
        if counts_per_step == 0:
            raise RangeError(f"{name}: counts_per_step must be nonzero")
        self.name = name
        self.bound_motor = bound_motor
        self.counts_per_step = float(counts_per_step)
        self.offset_counts = int(offset_counts)
        self.slip_counts = 0

    def read(self, motor: MotorUnit) -> int:
        return (_round_half_away(motor.position_steps * self.counts_per_step)
                + self.offset_counts + self.slip_counts)

    def steps_from_counts(self, counts: int) -> float:
        return (counts - self.offset_counts) / self.counts_per_step

    def snapshot(self) -> dict:
        return {
            "name": self.name,
            "kind": "encoder",
            "state": IDLE,
            "bound_motor": self.bound_motor,
            "counts_per_step": self.counts_per_step,
            "offset_counts": self.offset_counts,
            "slip_counts": self.slip_counts,
        }


@dataclass(frozen=True)
class GaussianPeak:
    center_ev: float
    amplitude_cps: float
    sigma_ev: float

    def __post_init__(self):
        if self.amplitude_cps < 0:
            raise RangeError("peak amplitude must be >= 0")
        if self.sigma_ev <= 0:
            raise RangeError("peak sigma must be > 0")


class DetectorUnit:
    """Photon counter with Gaussian peaks over a flat background.

    noise="none" returns the exact expected counts; noise="poisson" draws
    from a seeded generator, so identical seed + call sequence reproduces
    identical counts.
    """

    def __init__(self, name: str, background_cps: float = 0.0,
                 peaks: list[GaussianPeak] | None = None,
                 noise: str = "none", seed: int = 0):
        if background_cps < 0:
            raise RangeError(f"{name}: background must be >= 0")
        if noise not in ("none", "poisson"):
            raise RangeError(f"{name}: unknown noise mode {noise!r}")
        self.name = name
        self.background_cps = float(background_cps)
        self.peaks = list(peaks or [])
        self.noise = noise
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)

    def flux(self, energy_ev: float) -> float:
        f = self.background_cps
        for p in self.peaks:
            f += p.amplitude_cps * math.exp(
                -((energy_ev - p.center_ev) ** 2) / (2.0 * p.sigma_ev ** 2))
        return f

    def read(self, energy_ev: float, dwell_s: float) -> float:
        if dwell_s <= 0:
            raise RangeError(f"dwell must be > 0, got {dwell_s}")
        mean = self.flux(energy_ev) * dwell_s
        if self.noise == "poisson":
            return float(self._rng.poisson(mean))
        return mean

    def snapshot(self) -> dict:
        return {
            "name": self.name,
            "kind": "detector",
            "state": IDLE,
            "background_cps": self.background_cps,
            "noise": self.noise,
            "peaks": [
                {"center_ev": p.center_ev, "amplitude_cps": p.amplitude_cps,
                 "sigma_ev": p.sigma_ev} for p in self.peaks],
        }


class SimClock:
    """Monotonic simulated clock.

    realtime mode advances by wall-clock elapsed time; scaled mode
    multiplies wall time by a factor so long moves and dwells run fast in
    tests. advance() is driven by the owner's tick loop.
    """

    def __init__(self, mode: str = "realtime", factor: float = 1.0):
        if mode not in ("realtime", "scaled"):
            raise RangeError(f"unknown clock mode {mode!r}")
        if factor <= 0:
            raise RangeError("clock factor must be > 0")
        self.mode = mode
        self.factor = float(factor) if mode == "scaled" else 1.0
        self.now = 0.0
        self._last_wall = time.monotonic()

    def advance_wall(self) -> float:
        """Fold wall time elapsed since the last call into simulated time;
        returns the simulated dt."""
        wall = time.monotonic()
        dt = (wall - self._last_wall) * self.factor
        self._last_wall = wall
        self.now += dt
        return dt

    def advance_by(self, sim_dt: float) -> float:
        if sim_dt < 0:
            raise RangeError("dt must be >= 0")
        self.now += sim_dt
        return sim_dt
