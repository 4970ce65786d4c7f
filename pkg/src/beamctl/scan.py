"""Energy-scan engine: plan validation, point acquisition, CSV persistence.

A scan steps the photon energy from e_start to e_end, repositioning the
optics at each point, settling, reading back the actual energy from the
grating encoder, and integrating the detector. One scan runs at a time;
abort is a flag checked between points. Per-point failures end the scan
with a failed status; points acquired before the failure are kept.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import IoError, RangeError

CSV_HEADER = "index,e_set_ev,e_readback_ev,mirror_steps,grating_steps,counts,calc_ms,t_s"

DEFAULT_SETTLE_S = 0.1


@dataclass(frozen=True)
class ScanPlan:
    e_start: float
    e_end: float
    step: float | None = None      # default e_start / resolving_power
    dwell_s: float = 0.1
    settle_s: float = DEFAULT_SETTLE_S
    mode: str = "realtime"         # "realtime" | "fit"
    output: str | None = None

    @property
    def n_points(self) -> int:
        return int(math.floor((self.e_end - self.e_start) / self.step + 1e-9)) + 1

    def energy_at(self, index: int) -> float:
        return self.e_start + index * self.step

    def to_dict(self) -> dict:
        return {
            "e_start": self.e_start, "e_end": self.e_end, "step": self.step,
            "dwell_s": self.dwell_s, "settle_s": self.settle_s,
            "mode": self.mode, "output": self.output,
            "n_points": self.n_points,
        }


@dataclass(frozen=True)
class ScanPoint:
    index: int
    e_set_ev: float
    e_readback_ev: float
    mirror_steps: int
    grating_steps: int
    counts: float
    calc_ms: float
    t_s: float

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "e_set_ev": self.e_set_ev,
            "e_readback_ev": self.e_readback_ev,
            "mirror_steps": self.mirror_steps,
            "grating_steps": self.grating_steps,
            "counts": self.counts,
            "calc_ms": self.calc_ms,
            "t_s": self.t_s,
        }


def plan_validate(plan: ScanPlan, mono, resolving_power: float) -> ScanPlan:
    """Fill defaults and check every plan invariant; raises RangeError
    naming the violated field."""
    if not plan.e_start < plan.e_end:
        raise RangeError("e_start must be < e_end")
    if plan.mode not in ("realtime", "fit"):
        raise RangeError(f"mode must be realtime|fit, got {plan.mode!r}")
    step = plan.step if plan.step is not None else plan.e_start / resolving_power
    if step <= 0:
        raise RangeError("step must be > 0")
    settle = plan.settle_s if plan.settle_s is not None else DEFAULT_SETTLE_S
    if settle < 0:
        raise RangeError("settle_s must be >= 0")
    if plan.dwell_s <= 0:
        raise RangeError("dwell_s must be > 0")
    if not (mono.energy_min <= plan.e_start and plan.e_end <= mono.energy_max):
        raise RangeError("scan endpoints outside mono energy range")
    normalized = replace(plan, step=step, settle_s=settle)
    if normalized.n_points < 2:
        raise RangeError("plan yields fewer than 2 points")
    return normalized


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def persist(points, path: str) -> str:
    """Write points as CSV, full float precision (round-trip safe), LF
    line endings."""
    lines = [CSV_HEADER]
    for p in points:
        d = p.to_dict() if isinstance(p, ScanPoint) else p
        lines.append(",".join(_fmt(d[k]) for k in CSV_HEADER.split(",")))
    try:
        with open(path, "w", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
    return path


def points_to_csv(points) -> str:
    lines = [CSV_HEADER]
    for p in points:
        d = p.to_dict() if isinstance(p, ScanPoint) else p
        lines.append(",".join(_fmt(d[k]) for k in CSV_HEADER.split(",")))
    return "\n".join(lines) + "\n"
