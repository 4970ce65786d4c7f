"""Independent oracles the tests check the production code against.

The diffraction oracle never uses the closed form: given a trial beta it
derives alpha from the fixed-focus constraint and bisects on the grating
equation residual. Kept deliberately slow and simple.
"""

from __future__ import annotations

import math


def oracle_solve(line_density: float, order: int, cff: float, hc: float,
                 energy_ev: float, tol: float = 1e-15) -> tuple[float, float]:
    """Bisection solve for (alpha_deg, beta_deg).

    f(beta) = N*k*lambda - (sin(alpha(beta)) + sin(beta)) with
    alpha(beta) = arccos(cos(beta)/cff). f is monotonic in beta on the
    bracket where alpha exists.
    """
    lam_mm = (hc / energy_ev) * 1e-6
    s = line_density * order * lam_mm

    def f(beta: float) -> float:
        cos_alpha = math.cos(beta) / cff
        if cos_alpha >= 1.0:
            return math.nan
        alpha = math.acos(cos_alpha)
        return s - (math.sin(alpha) + math.sin(beta))

    # bracket inside (-pi/2, 0); shrink ends until f is defined and signs differ
    lo, hi = -math.pi / 2 + 1e-12, -1e-12
    flo, fhi = f(lo), f(hi)
    if math.isnan(flo) or math.isnan(fhi) or flo * fhi > 0:
        raise ValueError(f"oracle cannot bracket a root at E={energy_ev}")
    for _ in range(200):
        mid = (lo + hi) / 2
        fm = f(mid)
        if fm == 0 or (hi - lo) < tol:
            lo = hi = mid
            break
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    beta = (lo + hi) / 2
    alpha = math.acos(math.cos(beta) / cff)
    return math.degrees(alpha), math.degrees(beta)


def oracle_mirror_grazing(alpha_deg: float, beta_deg: float) -> float:
    return 90.0 - (alpha_deg - beta_deg) / 2.0
