"""Beamline configuration: TOML file -> validated BeamlineConfig.

One file describes the whole installation: monochromator parameters, the
angle-to-steps axis map, the unit roster with limits and velocities, the
detector flux model, ports, tick period and clock mode. See
beamline.toml at the repo root for a complete commented example.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigInvalid
from .hardware import GaussianPeak
from .kinematics import MonoConfig


@dataclass(frozen=True)
class AxisConfig:
    motor: str
    steps_per_degree: float
    offset_deg: float = 0.0


@dataclass(frozen=True)
class MotorConfig:
    name: str
    home_steps: int = 0
    velocity_sps: float = 20000.0
    soft_min: int = -1000000
    soft_max: int = 1000000


@dataclass(frozen=True)
class EncoderConfig:
    name: str
    motor: str
    counts_per_step: float = 1.0
    offset_counts: int = 0


@dataclass(frozen=True)
class DetectorConfig:
    name: str
    background_cps: float = 0.0
    peaks: tuple = ()
    noise: str = "none"
    seed: int = 0


@dataclass(frozen=True)
class BeamlineConfig:
    mono: MonoConfig
    axes: dict                      # {"mirror": AxisConfig, "grating": AxisConfig}
    motors: tuple
    encoders: tuple
    detectors: tuple
    resolving_power: float = 10000.0
    host: str = "127.0.0.1"
    tcp_port: int = 5025
    http_port: int = 8080
    tick_period_s: float = 0.01
    clock_mode: str = "realtime"
    clock_factor: float = 1.0
    server_name: str = "beamline"

    def __post_init__(self):
        if set(self.axes) != {"mirror", "grating"}:
            raise ConfigInvalid("axes must define exactly mirror and grating")
        names = [m.name for m in self.motors] + [e.name for e in self.encoders] \
            + [d.name for d in self.detectors]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise ConfigInvalid(f"duplicate unit names: {sorted(dupes)}")
        motor_names = {m.name for m in self.motors}
        for axis, ax in self.axes.items():
            if ax.motor not in motor_names:
                raise ConfigInvalid(f"axis {axis} binds unknown motor {ax.motor!r}")
            if ax.steps_per_degree == 0:
                raise ConfigInvalid(f"axis {axis}: steps_per_degree must be nonzero")
        for enc in self.encoders:
            if enc.motor not in motor_names:
                raise ConfigInvalid(
                    f"encoder {enc.name} binds unknown motor {enc.motor!r}")
        if self.tick_period_s <= 0:
            raise ConfigInvalid("tick_period_s must be > 0")
        if self.resolving_power <= 0:
            raise ConfigInvalid("resolving_power must be > 0")


def _mono_from_dict(d: dict) -> MonoConfig:
    try:
        return MonoConfig(
            line_density=float(d["line_density"]),
            order=int(d["order"]),
            fixed_focus_ratio=float(d["fixed_focus_ratio"]),
            energy_min=float(d["energy_min"]),
            energy_max=float(d["energy_max"]),
            hc=float(d.get("hc", 1239.8420)),
        )
    except KeyError as e:
        raise ConfigInvalid(f"mono: missing field {e}") from e
    except Exception as e:
        raise ConfigInvalid(f"mono: {e}") from e


def config_from_dict(raw: dict) -> BeamlineConfig:
    try:
        mono = _mono_from_dict(raw["mono"])
        axes = {
            name: AxisConfig(
                motor=str(ax["motor"]),
                steps_per_degree=float(ax["steps_per_degree"]),
                offset_deg=float(ax.get("offset_deg", 0.0)),
            )
            for name, ax in raw.get("axes", {}).items()
        }
        motors = tuple(
            MotorConfig(
                name=str(m["name"]),
                home_steps=int(m.get("home_steps", 0)),
                velocity_sps=float(m.get("velocity_sps", 20000.0)),
                soft_min=int(m.get("soft_min", -1000000)),
                soft_max=int(m.get("soft_max", 1000000)),
            )
            for m in raw.get("motors", [])
        )
        encoders = tuple(
            EncoderConfig(
                name=str(e["name"]),
                motor=str(e["motor"]),
                counts_per_step=float(e.get("counts_per_step", 1.0)),
                offset_counts=int(e.get("offset_counts", 0)),
            )
            for e in raw.get("encoders", [])
        )
        detectors = tuple(
            DetectorConfig(
                name=str(d["name"]),
                background_cps=float(d.get("background_cps", 0.0)),
                peaks=tuple(
                    GaussianPeak(
                        center_ev=float(p["center_ev"]),
                        amplitude_cps=float(p["amplitude_cps"]),
                        sigma_ev=float(p["sigma_ev"]),
                    )
                    for p in d.get("peaks", [])
                ),
                noise=str(d.get("noise", "none")),
                seed=int(d.get("seed", 0)),
            )
            for d in raw.get("detectors", [])
        )
        server = raw.get("server", {})
        clock = raw.get("clock", {})
        return BeamlineConfig(
            mono=mono,
            axes=axes,
            motors=motors,
            encoders=encoders,
            detectors=detectors,
            resolving_power=float(raw["mono"].get("resolving_power", 10000.0)),
            host=str(server.get("host", "127.0.0.1")),
            tcp_port=int(server.get("tcp_port", 5025)),
            http_port=int(server.get("http_port", 8080)),
            tick_period_s=float(server.get("tick_period_s", 0.01)),
            clock_mode=str(clock.get("mode", "realtime")),
            clock_factor=float(clock.get("factor", 1.0)),
            server_name=str(server.get("name", "beamline")),
        )
    except ConfigInvalid:
        raise
    except KeyError as e:
        raise ConfigInvalid(f"missing config field {e}") from e
    except (TypeError, ValueError) as e:
        raise ConfigInvalid(str(e)) from e


def load_config(path: str) -> BeamlineConfig:
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except OSError as e:
        raise ConfigInvalid(f"cannot read {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigInvalid(f"{path}: {e}") from e
    return config_from_dict(raw)
