"""Monochromator kinematics for a variable-included-angle spherical grating.

Two constraints close the solve for a photon energy E:

  grating equation   N*k*lambda = sin(alpha) + sin(beta)
  fixed focus        cos(beta) / cos(alpha) = c   (constant)

with alpha > 0 (incidence, from grating normal), beta < 0 (inside-order
diffraction). Eliminating alpha gives a quadratic in sin(beta) with the
closed-form root

  sin(beta) = (c^2*s - sqrt(c^2*s^2 + (c^2 - 1)^2)) / (c^2 - 1),  s = N*k*lambda

so a position solve is a handful of flops. The plane pre-mirror keeps the
exit beam horizontal, so its grazing angle is 90 - (alpha - beta)/2 and the
grating exit grazing angle is 90 + beta. All public interfaces use degrees;
internal math is in radians. Energies in eV, line density in lines/mm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RangeError, UnsolvableError

SINGULAR_CFF_EPS = 1e-6


class NonPositiveEnergy(RangeError):
    pass


class OutOfRange(RangeError):
    pass


class SingularConfig(RangeError):
    pass


class Unsolvable(UnsolvableError):
    pass


class NonPositive(UnsolvableError):
    pass


class TooFewSamples(RangeError):
    pass


class DegenerateAbscissae(RangeError):
    pass


class OutOfDomain(RangeError):
    pass


@dataclass(frozen=True)
class MonoConfig:
    """Parameters of the monochromator solve."""

    line_density: float        # lines per mm
    order: int                 # diffraction order, signed, nonzero
    fixed_focus_ratio: float   # cff = cos(beta)/cos(alpha)
    energy_min: float          # eV
    energy_max: float          # eV
    hc: float = 1239.8420      # eV*nm

    def __post_init__(self):
        if self.line_density <= 0:
            raise RangeError("line_density must be > 0")
        if self.order == 0:
            raise RangeError("order must be nonzero")
        if not (0 < self.energy_min < self.energy_max):
            raise RangeError("require 0 < energy_min < energy_max")
        if self.fixed_focus_ratio <= 0:
            raise RangeError("fixed_focus_ratio must be > 0")
        if abs(self.fixed_focus_ratio - 1.0) < SINGULAR_CFF_EPS:
            raise SingularConfig("fixed_focus_ratio too close to 1")
        if self.hc <= 0:
            raise RangeError("hc must be > 0")

    def replace(self, **kw) -> "MonoConfig":
        d = dict(
            line_density=self.line_density,
            order=self.order,
            fixed_focus_ratio=self.fixed_focus_ratio,
            energy_min=self.energy_min,
            energy_max=self.energy_max,
            hc=self.hc,
        )
        d.update(kw)
        return MonoConfig(**d)


@dataclass(frozen=True)
class OpticsSolution:
    """Angles positioning the optics for one photon energy (degrees)."""

    energy: float
    alpha_deg: float
    beta_deg: float
    mirror_grazing_deg: float
    grating_exit_grazing_deg: float


@dataclass(frozen=True)
class CubicFit:
    """Cubic least-squares fit of an axis angle against photon energy.

    Coefficients apply to the normalized abscissa u = (2E - E_lo - E_hi)
    / (E_hi - E_lo), u in [-1, 1], to keep the normal equations well
    conditioned.
    """

    axis: str                       # "mirror" | "grating"
    coefficients: tuple             # a0..a3, degrees
    domain: tuple                   # (E_lo, E_hi) eV
    rms_residual_deg: float
    max_residual_deg: float
    sample_count: int

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "coefficients": list(self.coefficients),
            "domain": list(self.domain),
            "rms_residual_deg": self.rms_residual_deg,
            "max_residual_deg": self.max_residual_deg,
            "sample_count": self.sample_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CubicFit":
        return cls(
            axis=d["axis"],
            coefficients=tuple(d["coefficients"]),
            domain=tuple(d["domain"]),
            rms_residual_deg=d["rms_residual_deg"],
            max_residual_deg=d["max_residual_deg"],
            sample_count=d["sample_count"],
        )


def wavelength_nm(energy_ev: float, cfg: MonoConfig) -> float:
    """Photon wavelength in nm via cfg.hc."""
    if energy_ev <= 0:
        raise NonPositiveEnergy(f"energy must be > 0, got {energy_ev}")
    return cfg.hc / energy_ev


def solve_diffraction(cfg: MonoConfig, energy_ev: float) -> OpticsSolution:
    """Closed-form optics positions for one photon energy.

    Raises OutOfRange for E outside the config range, SingularConfig when
    cff is too close to 1, Unsolvable when no physical angle pair exists.
    """
    if not (cfg.energy_min <= energy_ev <= cfg.energy_max):
        raise OutOfRange(
            f"E={energy_ev} outside [{cfg.energy_min}, {cfg.energy_max}] eV")
    c = cfg.fixed_focus_ratio
    if abs(c - 1.0) < SINGULAR_CFF_EPS:
        raise SingularConfig("fixed_focus_ratio too close to 1")

    lam_mm = wavelength_nm(energy_ev, cfg) * 1e-6
    s = cfg.line_density * cfg.order * lam_mm
    c2 = c * c
    disc = c2 * s * s + (c2 - 1.0) ** 2
    sin_beta = (c2 * s - math.sqrt(disc)) / (c2 - 1.0)
    sin_alpha = s - sin_beta
    if abs(sin_beta) >= 1.0 or abs(sin_alpha) >= 1.0:
        raise Unsolvable(f"no solution at E={energy_ev} eV for cff={c}")

    alpha = math.asin(sin_alpha)
    beta = math.asin(sin_beta)
    alpha_deg = math.degrees(alpha)
    beta_deg = math.degrees(beta)
    mirror_grazing = 90.0 - (alpha_deg - beta_deg) / 2.0
    grating_exit = 90.0 + beta_deg
    if not (0.0 < mirror_grazing < 90.0) or not (0.0 < grating_exit < 90.0):
        raise Unsolvable(f"grazing angles unphysical at E={energy_ev} eV")
    return OpticsSolution(
        energy=energy_ev,
        alpha_deg=alpha_deg,
        beta_deg=beta_deg,
        mirror_grazing_deg=mirror_grazing,
        grating_exit_grazing_deg=grating_exit,
    )


def energy_from_beta(cfg: MonoConfig, beta_deg: float) -> float:
    """Exact inverse of solve_diffraction: photon energy from the
    diffraction angle. Used to turn encoder readbacks into energy.
    """
    if not (-90.0 < beta_deg < 0.0):
        raise RangeError(f"beta must be in (-90, 0) deg, got {beta_deg}")
    beta = math.radians(beta_deg)
    cos_alpha = math.cos(beta) / cfg.fixed_focus_ratio
    if cos_alpha > 1.0 or cos_alpha <= 0.0:
        raise Unsolvable(f"cos(beta)/cff = {cos_alpha} has no incidence angle")
    sin_alpha = math.sqrt(1.0 - cos_alpha * cos_alpha)
    lam_mm = (sin_alpha + math.sin(beta)) / (cfg.line_density * cfg.order)
    if lam_mm <= 0.0:
        raise NonPositive(f"nonpositive wavelength at beta={beta_deg} deg")
    return cfg.hc / (lam_mm * 1e6)


def normalize_energy(energy_ev: float, e_lo: float, e_hi: float) -> float:
    return (2.0 * energy_ev - e_lo - e_hi) / (e_hi - e_lo)


def fit_cubic(samples, axis: str = "axis", domain: tuple | None = None) -> CubicFit:
    """Least-squares cubic through (E, angle) samples.

    The abscissa is normalized to u in [-1, 1] over the domain (defaults
    to the sample span). Needs >= 4 samples with >= 4 distinct energies.
    """
    samples = list(samples)
    if len(samples) < 4:
        raise TooFewSamples(f"need >= 4 samples, got {len(samples)}")
    e = np.asarray([p[0] for p in samples], dtype=float)
    y = np.asarray([p[1] for p in samples], dtype=float)
    if len(np.unique(e)) < 4:
        raise DegenerateAbscissae("need >= 4 distinct energies")
    if domain is None:
        domain = (float(e.min()), float(e.max()))
    e_lo, e_hi = domain
    if not e_lo < e_hi:
        raise DegenerateAbscissae("degenerate fit domain")

    u = (2.0 * e - e_lo - e_hi) / (e_hi - e_lo)
    vand = np.vander(u, 4, increasing=True)
    coeffs, *_ = np.linalg.lstsq(vand, y, rcond=None)
    resid = vand @ coeffs - y
    return CubicFit(
        axis=axis,
        coefficients=tuple(float(a) for a in coeffs),
        domain=(float(e_lo), float(e_hi)),
        rms_residual_deg=float(np.sqrt(np.mean(resid ** 2))),
        max_residual_deg=float(np.max(np.abs(resid))),
        sample_count=len(samples),
    )


def eval_fit(fit: CubicFit, energy_ev: float) -> float:
    """Evaluate a fit at an in-domain energy; extrapolation is an error."""
    e_lo, e_hi = fit.domain
    if not (e_lo <= energy_ev <= e_hi):
        raise OutOfDomain(
            f"E={energy_ev} outside fit domain [{e_lo}, {e_hi}] eV")
    u = normalize_energy(energy_ev, e_lo, e_hi)
    a0, a1, a2, a3 = fit.coefficients
    return a0 + u * (a1 + u * (a2 + u * a3))


def build_fit_table(cfg: MonoConfig, e_lo: float, e_hi: float,
                    n: int) -> tuple[CubicFit, CubicFit]:
    """Sample the closed-form solve at n equally spaced energies and fit
    each axis angle with a cubic. Returns (mirror fit, grating fit)."""
    if n < 4:
        raise TooFewSamples(f"need n >= 4 sample energies, got {n}")
    if not (cfg.energy_min <= e_lo < e_hi <= cfg.energy_max):
        raise OutOfRange(
            f"[{e_lo}, {e_hi}] not inside [{cfg.energy_min}, {cfg.energy_max}]")
    energies = np.linspace(e_lo, e_hi, n)
    mirror = []
    grating = []
    for e_ev in energies:
        sol = solve_diffraction(cfg, float(e_ev))
        mirror.append((float(e_ev), sol.mirror_grazing_deg))
        grating.append((float(e_ev), sol.grating_exit_grazing_deg))
    return (
        fit_cubic(mirror, axis="mirror", domain=(e_lo, e_hi)),
        fit_cubic(grating, axis="grating", domain=(e_lo, e_hi)),
    )


def fit_error_report(cfg: MonoConfig, fits: tuple[CubicFit, CubicFit],
                     n_probe: int) -> dict:
    """Deviation of the fit vs. the closed-form solve on a uniform probe
    grid; quantifies how far the stored fit has drifted from the current
    config."""
    if n_probe < 1:
        raise RangeError("n_probe must be >= 1")
    report = {}
    for fit in fits:
        e_lo, e_hi = fit.domain
        if n_probe == 1:
            probes = np.array([(e_lo + e_hi) / 2.0])
        else:
            probes = np.linspace(e_lo, e_hi, n_probe)
        devs = []
        for e_ev in probes:
            sol = solve_diffraction(cfg, float(e_ev))
            truth = (sol.mirror_grazing_deg if fit.axis == "mirror"
                     else sol.grating_exit_grazing_deg)
            devs.append(eval_fit(fit, float(e_ev)) - truth)
        devs = np.asarray(devs)
        report[fit.axis] = {
            "max_dev_deg": float(np.max(np.abs(devs))),
            "rms_dev_deg": float(np.sqrt(np.mean(devs ** 2))),
        }
    return report
