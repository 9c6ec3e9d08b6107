"""Zeta functions, regularized determinants and torsion limits of families.

For Re s > 1 the zeta function is the plain eigenvalue sum.  The continuation
to s = 0 goes through the Mellin split at a point T: with
theta(t) = a_{-1}/t + a_0 + rho(t) and rho(t) = O(t),

    zeta'(0) = int_T^inf theta/t dt + int_0^T rho/t dt
               - a_{-1}/T + (euler_gamma + log T) a_0,

obtained from 1/Gamma(s) = s + euler_gamma s^2 + O(s^3).  The upper integral
is a sum of exponential integrals, hence exact; the lower one is adaptive
quadrature down to a floor t_f below which the truncated spectrum no longer
resolves theta, closed there by the linear model rho ~ c1 t.  The constant
a_0 also equals zeta(0); the report recomputes zeta near 0 from the
continuation itself as a consistency check.

The continuation divides the remainder by t all the way down to the floor,
so an error eps in the fitted a_{-1} enters zeta'(0) as -2 eps / t_f, orders
of magnitude above the fit residual itself.  Before integrating, the 1/t
coefficient is therefore re-calibrated against the series with two probes of
rho at t_f and 2 t_f; a third probe screens the constant term.  Probes sit at
or above the floor: below it a truncated spectrum no longer follows the
expansion and the probes would read the missing tail instead.

Torsion of a metric family is the limit of zeta'_p(0).  torsion_limit checks
the Cauchy property of the sequence, extrapolates with one Aitken step and
compares against the value computed directly from the limit metric.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .heat import FIT_WINDOW_FACTOR, ThetaSeries, fit_expansion

EULER_GAMMA = float(np.euler_gamma)

# quadrature targets for the [t_f, T] remainder integral
QUAD_ABS_TOL = 1e-10
QUAD_LIMIT = 400


def _series_of(source) -> ThetaSeries:
    if isinstance(source, ThetaSeries):
        return source
    return ThetaSeries.from_spectrum(source)


def zeta_at(source, s: float) -> float:
    """Direct sum over the resolved positive eigenvalues, Re s > 1 only.

    source is a Spectrum or a ThetaSeries.  The sum converges like the
    eigenvalue counting function, so a margin above the abscissa is enforced;
    combine with zeta_tail for the unresolved remainder.
    """
    if s <= 1.05:
        raise ValueError("direct zeta sum needs s > 1.05")
    series = _series_of(source)
    return float(np.sum(series.lambdas ** (-s)))


def zeta_tail(source, s: float) -> float:
    """Counting estimate of the eigenvalues above the completion level,
    2 * slope * Lambda^{1-s} / (s - 1); zero for synthetic complete spectra."""
    if s <= 1.05:
        raise ValueError("direct zeta sum needs s > 1.05")
    series = _series_of(source)
    lam_c = series.lam_complete
    if not math.isfinite(lam_c) or len(series.lambdas) == 0:
        return 0.0
    slope = len(series.lambdas) / lam_c
    return 2.0 * slope * lam_c ** (1.0 - s) / (s - 1.0)


def mellin_zeta(source, s: float, epsabs: float = QUAD_ABS_TOL) -> float:
    """zeta(s) as the numerical Mellin transform of theta, an independent
    route used to cross-check zeta_at on the same spectrum."""
    if s <= 1.05:
        raise ValueError("Mellin route needs s > 1.05")
    series = _series_of(source)
    lo, _ = integrate.quad(lambda t: t ** (s - 1.0) * series.eval(t),
                           0.0, 1.0, epsabs=epsabs, epsrel=1e-12,
                           limit=QUAD_LIMIT)
    hi, _ = integrate.quad(lambda t: t ** (s - 1.0) * series.eval(t),
                           1.0, np.inf, epsabs=epsabs, epsrel=1e-12,
                           limit=QUAD_LIMIT)
    return (lo + hi) / float(special.gamma(s))


def _coefficients(series: ThetaSeries, fit):
    """Normalize the expansion input: a fit dict from fit_expansion, a bare
    (a_minus1, a_0) pair, or None to fit here."""
    if fit is None:
        fit = fit_expansion(series)
    if isinstance(fit, dict):
        return (float(fit["b_minus1"]), float(fit["b0"]),
                float(fit["t_lo"]), float(fit.get("residual", 0.0)))
    a1, a0 = fit
    t_f = FIT_WINDOW_FACTOR / float(series.lambdas[-1])
    return float(a1), float(a0), t_f, 0.0


def _refined_remainder(series: ThetaSeries, a1: float, a0: float,
                       t_f: float, T: float):
    """Calibrate a_{-1} against the series and screen the remainder.

    Probing rho(t) = theta - a1/t - a0 at t_f and 2 t_f against the local
    model rho = -eps/t + c1 t recovers the a_{-1} fit error eps to
    O(c2 t_f^3); errors of that size are removed, larger ones mean the
    coefficients do not belong to this series and raise.  A wrong constant
    a_0 is the remaining non-integrable signal (rho -> const makes rho/t
    log-divergent): the second difference over (t_f, 2t_f, 4t_f) cancels the
    genuine linear part exactly and returns any constant offset, up to the
    expansion's own curvature background.  Thresholds sit 3x above the worst
    background measured on clean fits of coarse (n=1024) discretizations.

    Returns (refined a1, rho callable, eps).
    """
    if not 0.0 < t_f < 0.25 * T:
        raise ValueError("expansion floor does not reach below the split point")

    def rho0(t):
        return series.eval(t) - a1 / t - a0

    eps = -(2.0 * t_f / 3.0) * (2.0 * rho0(t_f) - rho0(2.0 * t_f))
    scale = 1.0 + abs(a1) + abs(a0)
    if abs(eps) > 0.01 * scale:
        raise ValueError("1/t coefficient inconsistent with the series: "
                         "rho(t)/t carries a non-integrable 1/t^2 signal, "
                         "refit the expansion")
    a1r = a1 - eps

    def rho(t):
        return series.eval(t) - a1r / t - a0

    offset = 2.0 * abs(rho(4.0 * t_f) - 3.0 * rho(2.0 * t_f) + 2.0 * rho(t_f))
    if offset > 0.02 * scale:
        raise ValueError("rho(t)/t does not level off near the floor: "
                         "non-integrable remainder, refit the expansion")
    return a1r, rho, eps


def zeta_prime0(theta, fit=None, T: float = 1.0) -> float:
    """zeta'(0) from the split-Mellin identity.

    theta is a ThetaSeries (or Spectrum); fit supplies (a_minus1, a_0) and
    the resolution floor t_f, defaulting to fit_expansion on the series.
    The 1/t coefficient is re-calibrated on the series before integrating
    (see _refined_remainder); expansions whose remainder keeps a
    non-integrable signal after that are rejected.
    """
    series = _series_of(theta)
    a1, a0, t_f, _ = _coefficients(series, fit)
    a1, rho, _ = _refined_remainder(series, a1, a0, t_f, T)

    upper = float(np.sum(special.exp1(series.lambdas * T)))
    mid, _ = integrate.quad(lambda t: rho(t) / t, t_f, T,
                            epsabs=QUAD_ABS_TOL, epsrel=1e-12,
                            limit=QUAD_LIMIT)
    # remaining piece of the lower integral, with rho ~ c1 t below the floor
    closure = rho(t_f)
    return upper + mid + closure - a1 / T + (EULER_GAMMA + math.log(T)) * a0


def _upper_incomplete(s: float, x: np.ndarray) -> np.ndarray:
    """Gamma(s, x) for s in (-1, 1), s != 0, via one downward recursion."""
    if s > 0.0:
        return special.gammaincc(s, x) * special.gamma(s)
    up1 = special.gammaincc(s + 1.0, x) * special.gamma(s + 1.0)
    return (up1 - x ** s * np.exp(-x)) / s


def zeta_continuation(theta, s: float, fit=None, T: float = 1.0) -> float:
    """The continued zeta function at real s in (-1, 0.95), s != 0.

    Same split as zeta_prime0 but with the s-dependence kept explicit, so
    values near 0 probe zeta(0) = a_0 and the derivative numerically,
    independently of the series-expansion algebra.
    """
    if not -1.0 < s < 0.95 or s == 0.0:
        raise ValueError("continuation evaluated on (-1, 0.95) minus 0")
    series = _series_of(theta)
    a1, a0, t_f, _ = _coefficients(series, fit)
    a1, rho, _ = _refined_remainder(series, a1, a0, t_f, T)
    c1 = rho(t_f) / t_f
    lam = series.lambdas
    upper = float(np.sum(lam ** (-s) * _upper_incomplete(s, lam * T)))
    mid, _ = integrate.quad(lambda t: t ** (s - 1.0) * rho(t), t_f, T,
                            epsabs=QUAD_ABS_TOL, epsrel=1e-12,
                            limit=QUAD_LIMIT)
    bracket = (upper + mid
               + a1 * T ** (s - 1.0) / (s - 1.0)
               + a0 * T ** s / s
               + c1 * t_f ** (s + 1.0) / (s + 1.0))
    return bracket / float(special.gamma(s))


@dataclass
class ZetaReport:
    """Zeta data of one spectrum: expansion coefficients, sample values on
    Re s > 1 with tail estimates, the continuation consistency value at 0
    and zeta'(0).  quadrature_spec records how the numbers were produced."""

    a_minus1: float
    a_0: float
    zeta_samples: list
    zeta0: float
    zeta_prime0: float
    quadrature_spec: dict = field(default_factory=dict)
    family_table: list | None = None

    def to_json(self) -> str:
        doc = {
            "a_minus1": self.a_minus1,
            "a_0": self.a_0,
            "zeta_samples": [list(row) for row in self.zeta_samples],
            "zeta0": self.zeta0,
            "zeta_prime0": self.zeta_prime0,
            "quadrature_spec": self.quadrature_spec,
        }
        if self.family_table is not None:
            doc["family_table"] = self.family_table
        return json.dumps(doc)


def zeta_report(source, fit=None, s_values=(1.5, 2.0, 3.0), T: float = 1.0,
                fd_step: float = 0.01) -> ZetaReport:
    """Assemble the full report: direct samples with tails, split-formula
    zeta'(0), and the continuation evaluated at +-fd_step whose average and
    slope cross-check zeta(0) = a_0 and zeta'(0)."""
    series = _series_of(source)
    if fit is None:
        fit = fit_expansion(series)
    a1, a0, t_f, residual = _coefficients(series, fit)
    a1r, _, eps = _refined_remainder(series, a1, a0, t_f, T)
    samples = [(float(s), zeta_at(series, s), zeta_tail(series, s))
               for s in s_values]
    zp = zeta_prime0(series, fit, T)
    hi = zeta_continuation(series, +fd_step, fit, T)
    lo = zeta_continuation(series, -fd_step, fit, T)
    return ZetaReport(
        a_minus1=a1r,
        a_0=a0,
        zeta_samples=samples,
        zeta0=0.5 * (hi + lo),
        zeta_prime0=zp,
        quadrature_spec={
            "split_point": T,
            "t_floor": t_f,
            "abs_tol": QUAD_ABS_TOL,
            "fit_residual": residual,
            "a_minus1_refinement": eps,
            "fd_step": fd_step,
            "zeta_prime0_fd": (hi - lo) / (2.0 * fd_step),
        })


def torsion_limit(reports, p_values=None, direct=None) -> dict:
    """Cauchy analysis and extrapolation of zeta'_p(0) along a family.

    reports: ZetaReports (or plain zeta'(0) floats) of the members in order.
    direct: optional report or value computed from the limit metric itself.
    A sequence whose successive gaps fail to decrease is flagged and not
    extrapolated.
    """
    if len(reports) < 4:
        raise ValueError("need at least 4 family members")
    vals = [r.zeta_prime0 if isinstance(r, ZetaReport) else float(r)
            for r in reports]
    if p_values is None:
        p_values = list(range(1, len(vals) + 1))
    p_values = [int(p) for p in p_values]
    scale = max(1.0, max(abs(v) for v in vals))
    tiny = 1e-12 * scale
    gaps = [abs(b - a) for a, b in zip(vals[:-1], vals[1:])]

    cauchy = all(g2 < g1 or g2 <= tiny for g1, g2 in zip(gaps[:-1], gaps[1:]))
    direct_val = (direct.zeta_prime0 if isinstance(direct, ZetaReport)
                  else (None if direct is None else float(direct)))

    out = {"p": p_values, "zeta_prime0": vals, "gaps": gaps,
           "cauchy_ok": bool(cauchy), "limit": None, "limit_error": None,
           "direct": direct_val, "discrepancy": None, "table": None}
    if not cauchy:
        return out

    if gaps[-1] <= tiny:
        limit, err = vals[-1], 0.0
    else:
        x0, x1, x2 = vals[-3], vals[-2], vals[-1]
        denom = (x2 - x1) - (x1 - x0)
        if abs(denom) <= tiny:
            limit, err = x2, gaps[-1]
        else:
            limit = x2 - (x2 - x1) ** 2 / denom
            r = gaps[-1] / gaps[-2]
            err = gaps[-1] * r / (1.0 - r) if r < 1.0 else gaps[-1]
    out["limit"] = float(limit)
    out["limit_error"] = float(err)
    if direct_val is not None:
        out["discrepancy"] = abs(float(limit) - direct_val)

    # gaps against the independently computed limit-metric value when there
    # is one; the extrapolated limit carries its own error and would blur
    # the column
    reference = direct_val if direct_val is not None else float(limit)
    table = []
    for p, rep, v in zip(p_values, reports, vals):
        z0 = rep.zeta0 if isinstance(rep, ZetaReport) else None
        table.append({"p": p, "zeta0": z0, "zeta_prime0": v,
                      "gap_to_limit": abs(v - reference)})
    out["table"] = table
    return out


def family_rows(result: dict):
    """CSV rows p,zeta0,zeta_prime0,gap_to_limit from a torsion_limit result."""
    if result.get("table") is None:
        raise ValueError("no extrapolation table: sequence was not Cauchy")
    for row in result["table"]:
        z0 = "" if row["zeta0"] is None else row["zeta0"]
        yield (row["p"], z0, row["zeta_prime0"], row["gap_to_limit"])
