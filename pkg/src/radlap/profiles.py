"""Radial metric profiles on line bundles over the Riemann sphere.

Conventions used across the package
-----------------------------------
Points of the sphere away from the poles are written z = e^{-u+i*theta}, so
u = -log|z| runs from -inf (the z = infinity pole) to +inf (z = 0).  A
circle-invariant hermitian metric h on the degree-m bundle O(m) is stored
through its log-profile

    psi(u) = log h(s, s)(e^{-u}),

where s is the frame that trivializes the bundle over the chart containing
z = 0.  Normalization: psi(u)/u -> 0 as u -> +inf and psi(u) ~ 2*m*u as
u -> -inf, so that h stays comparable to the max-norm metric.  For a positive
metric, psi is concave.

A base (tangent bundle) metric enters only through the weight

    w(u) = h_X(d/dz, d/dz)(e^{-u}) * e^{-2u},

normalized so that integrals of radial functions against the area form become
2 * int g(u) w(u) du.  The round (Fubini-Study) base has w = 1/(4 cosh^2 u)
and total normalized volume 1.

One-parameter families interpolate a list of profiles h_1 .. h_N with a C^2
bump, agree with the members at integer parameter values, and expose the
parameter-derivative of log H used by the variation bounds elsewhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import expit

U_DEFAULT = 12.0
N_DEFAULT = 4096

# Orbits are iterated exactly in complex doubles below this magnitude; past it
# log|P(z)| = d*log|z| holds to better than 1e-99 absolute.
_ESCAPE_CAP = 1e100


def default_ugrid(n: int = N_DEFAULT, span: float = U_DEFAULT) -> np.ndarray:
    return np.linspace(-span, span, n)


def _softplus(x):
    # log(1 + e^x), stable for any magnitude
    return np.logaddexp(0.0, x)


def _smoothstep(x):
    """Quintic smoothstep: 0 for x <= 0, 1 for x >= 1, C^2 across the joins."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (10.0 + x * (-15.0 + 6.0 * x))


def _smoothstep_prime(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xc = np.clip(x, 0.0, 1.0)
    d = 30.0 * xc * xc * (1.0 - xc) ** 2
    return np.where(inside, d, 0.0)


SMOOTHSTEP_PRIME_MAX = 1.875  # max of the quintic bump derivative, at x = 1/2


@dataclass(frozen=True)
class MetricProfile:
    """Radial hermitian metric on O(m), represented by psi(u) = log h(s,s)."""

    degree: int
    kind: str
    psi: Callable[[np.ndarray], np.ndarray]
    psi_prime: Callable[[np.ndarray], np.ndarray] | None = None
    params: dict = field(default_factory=dict)

    def d_psi(self, u):
        """psi'(u), analytic when available, else a central difference."""
        if self.psi_prime is not None:
            return self.psi_prime(u)
        u = np.asarray(u, dtype=float)
        h = 1e-5
        return (self.psi(u + h) - self.psi(u - h)) / (2.0 * h)

    def sample(self, ugrid: np.ndarray) -> np.ndarray:
        return np.asarray(self.psi(ugrid), dtype=float)

    @staticmethod
    def from_samples(ugrid, values, kind="custom-sampled", degree=0, params=None):
        spline = CubicSpline(np.asarray(ugrid, float), np.asarray(values, float))
        dspline = spline.derivative()
        return MetricProfile(
            degree=degree,
            kind=kind,
            psi=lambda u: spline(u),
            psi_prime=lambda u: dspline(u),
            params=dict(params or {}, u_min=float(ugrid[0]),
                        u_max=float(ugrid[-1]), n=len(ugrid)),
        )

    def to_json(self, ugrid: np.ndarray | None = None) -> str:
        if ugrid is None:
            ugrid = default_ugrid()
        doc = {
            "kind": self.kind,
            "degree": self.degree,
            "grid": {"u_min": float(ugrid[0]), "u_max": float(ugrid[-1]),
                     "n": int(len(ugrid))},
            "psi": [float(v) for v in self.sample(ugrid)],
        }
        return json.dumps(doc)

    @staticmethod
    def from_json(doc: str) -> "MetricProfile":
        data = json.loads(doc)
        g = data["grid"]
        ugrid = np.linspace(g["u_min"], g["u_max"], g["n"])
        return MetricProfile.from_samples(
            ugrid, np.array(data["psi"], dtype=float),
            kind=data["kind"], degree=int(data["degree"]))


@dataclass(frozen=True)
class BaseProfile:
    """Base metric weight w(u) = h_X(d,d)(e^{-u}) e^{-2u}; w > 0, integrable."""

    kind: str
    w: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)

    def volume(self, ugrid: np.ndarray | None = None) -> float:
        """Total normalized volume 2 * int w du on the window."""
        if ugrid is None:
            ugrid = default_ugrid()
        return float(2.0 * np.trapezoid(self.w(ugrid), ugrid))


def make_fs_base() -> BaseProfile:
    return BaseProfile(kind="fubini_study", w=lambda u: 0.25 / np.cosh(u) ** 2)


def make_tx_pnorm_base(p: int) -> BaseProfile:
    """Base weight of the metric (1 + |z|^p)^{-4/p} on the tangent bundle.

    p = 2 reproduces the round base exactly.
    """
    if p < 1:
        raise ValueError("p must be >= 1")

    def w(u, p=float(p)):
        return np.exp(-(4.0 / p) * _softplus(-p * u) - 2.0 * u)

    return BaseProfile(kind="tx_pnorm", w=w, params={"p": p})


def make_base_from_weight(w: Callable, kind: str = "custom",
                          params: dict | None = None) -> BaseProfile:
    return BaseProfile(kind=kind, w=w, params=params or {})


def scale_base(base: BaseProfile, c: float) -> BaseProfile:
    """Dilated base metric h_X -> c*h_X (so w -> c*w)."""
    if c <= 0:
        raise ValueError("scale must be positive")
    return BaseProfile(kind=base.kind + "_scaled",
                       w=lambda u: c * base.w(u),
                       params=dict(base.params, scale=c))


# ----------------------------------------------------------------------------
# constructors


def make_fubini_study(m: int) -> MetricProfile:
    """Fubini-Study metric on O(m): psi(u) = -m log(1 + e^{-2u})."""
    if m < 0:
        raise ValueError("bundle degree must be >= 0")

    def psi(u, m=float(m)):
        return -m * _softplus(-2.0 * np.asarray(u, dtype=float))

    def psi_prime(u, m=float(m)):
        return 2.0 * m * expit(-2.0 * np.asarray(u, dtype=float))

    return MetricProfile(degree=m, kind="fubini_study",
                         psi=psi, psi_prime=psi_prime)


def make_canonical(m: int) -> MetricProfile:
    """Max-norm metric on O(m): psi(u) = 2m min(u, 0), kinked at u = 0."""
    if m < 0:
        raise ValueError("bundle degree must be >= 0")

    def psi(u, m=float(m)):
        return 2.0 * m * np.minimum(np.asarray(u, dtype=float), 0.0)

    def psi_prime(u, m=float(m)):
        return np.where(np.asarray(u, dtype=float) < 0.0, 2.0 * m, 0.0)

    return MetricProfile(degree=m, kind="canonical", psi=psi,
                         psi_prime=psi_prime)


def make_pnorm(m: int, chi: Callable[[int], int], p: int) -> MetricProfile:
    """Power-mean metric family member: psi_p(u) = -(2m/chi(p)) log(1+e^{-chi(p)u}).

    chi must be integer valued, >= 1 and strictly increasing; the uniform
    p -> infinity limit is the max-norm metric of the same degree, with
    sup-gap (2m/chi(p)) log 2 attained at u = 0.
    """
    if m < 0:
        raise ValueError("bundle degree must be >= 0")
    cp = chi(p)
    if cp < 1:
        raise ValueError("chi(p) must be >= 1")
    try:
        prev = chi(p - 1)
    except Exception:
        prev = None
    if prev is not None and prev >= cp:
        raise ValueError("chi must be strictly increasing")

    def psi(u, a=float(cp), m=float(m)):
        return -(2.0 * m / a) * _softplus(-a * np.asarray(u, dtype=float))

    def psi_prime(u, a=float(cp), m=float(m)):
        return 2.0 * m * expit(-a * np.asarray(u, dtype=float))

    return MetricProfile(degree=m, kind="pnorm", psi=psi, psi_prime=psi_prime,
                         params={"p": p, "chi_p": int(cp)})


def chi_linear(p: int) -> int:
    return p


def chi_dyadic(p: int) -> int:
    return 2 ** p


def cusp_profile(exponent: float, m: int = 0, amplitude: float = 1.0,
                 plateau: float = 0.5, support: float = 1.0) -> MetricProfile:
    """Profile with a circle cusp: psi = bump(u) * |1 - e^{-u}|^exponent.

    Smooth away from u = 0 (the unit circle), Hoelder of the given exponent
    across it.  Exponents < 1 make psi' blow up at the circle; exponents
    <= 1/2 are exactly the borderline where the bundle Laplacian applied to
    z-bar leaves L^2.
    """

    def bump(u):
        a = np.abs(np.asarray(u, dtype=float))
        return 1.0 - _smoothstep((a - plateau) / (support - plateau))

    def psi(u, b=float(exponent), amp=float(amplitude)):
        u = np.asarray(u, dtype=float)
        cusp = np.abs(1.0 - np.exp(-u)) ** b
        return amp * bump(u) * cusp

    return MetricProfile(degree=m, kind="cusp", psi=psi,
                         params={"exponent": exponent, "amplitude": amplitude})


# ----------------------------------------------------------------------------
# dynamical (polynomial iteration) metrics


def _validate_poly(coeffs) -> tuple[np.ndarray, int]:
    c = np.asarray(coeffs, dtype=complex)
    d = len(c) - 1
    if d < 2:
        raise ValueError("polynomial degree must be >= 2")
    if abs(c[0] - 1.0) > 1e-12:
        raise ValueError("polynomial must be monic")
    return c, d


def _orbit_potential(coeffs, n_iter, z, base: MetricProfile):
    """(1/d^n) * psi_base(-log|P^n(z)|) with exact log-linear continuation.

    Orbits are iterated in complex doubles until they pass _ESCAPE_CAP; beyond
    it every step multiplies log|z| by d exactly (the correction is below
    1e-99) and the base profile is replaced by its u -> -inf asymptote
    2 * degree * u, which any normalized profile attains to double precision
    at that magnitude.
    """
    c, d = _validate_poly(coeffs)
    z = np.asarray(z, dtype=complex).ravel().copy()
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        mag = np.abs(z)
    esc = mag > _ESCAPE_CAP
    logmag = np.where(esc, np.log(np.where(esc, mag, 1.0)), 0.0)
    for _ in range(n_iter):
        logmag[esc] *= d
        act = ~esc
        if act.any():
            z[act] = np.polyval(c, z[act])
            with np.errstate(over="ignore", invalid="ignore"):
                mag_a = np.abs(z[act])
            new_esc = mag_a > _ESCAPE_CAP
            if new_esc.any():
                idx = np.flatnonzero(act)[new_esc]
                logmag[idx] = np.log(np.abs(z[idx]))
                esc[idx] = True
    out = np.empty(z.shape, dtype=float)
    bounded = ~esc
    if bounded.any():
        with np.errstate(divide="ignore"):
            u_end = -np.log(np.abs(z[bounded]))  # z = 0 gives u = +inf, psi = 0
        out[bounded] = base.psi(u_end)
    if esc.any():
        out[esc] = -2.0 * base.degree * logmag[esc]
    return out / float(d) ** n_iter


def make_dynamical(coeffs, n: int, base: MetricProfile,
                   ugrid: np.ndarray | None = None,
                   n_theta: int = 512) -> MetricProfile:
    """Pullback-iterated metric: potential g_n(z) = (1/d) g_{n-1}(P(z)).

    coeffs are highest-degree-first (numpy polyval order) and must describe a
    monic polynomial of degree >= 2.  The n-fold potential is evaluated on a
    polar grid and averaged over the angle (trapezoid rule, spectrally
    accurate for smooth integrands) to produce a radial profile.  n = 0
    returns the base untouched.
    """
    _validate_poly(coeffs)
    if n < 0:
        raise ValueError("iteration count must be >= 0")
    if n == 0:
        return base
    if ugrid is None:
        ugrid = default_ugrid()
    thetas = np.arange(n_theta) * (2.0 * np.pi / n_theta)
    zgrid = np.exp(-ugrid[:, None] + 1j * thetas[None, :])
    vals = _orbit_potential(coeffs, n, zgrid, base).reshape(zgrid.shape)
    radial = vals.mean(axis=1)
    prof = MetricProfile.from_samples(ugrid, radial, kind="dynamical",
                                      degree=base.degree,
                                      params={"n": n,
                                              "poly": [complex(x) for x in coeffs]})
    return prof


def dynamical_log_gradient(coeffs, n: int, z: complex,
                           degree: int = 1) -> complex:
    """d/dz of log h_n at a point, for the iteration seeded with FS on O(degree).

    Computed from the orbit product, not from grid differences:
        d g_n(z) = -(m/d^n) * (P^n)'(z) * conj(P^n(z)) / (1 + |P^n(z)|^2),
    with (P^n)' accumulated as prod_k P'(z_k) along the orbit.
    """
    c, d = _validate_poly(coeffs)
    dc = np.polyder(c)
    zk = complex(z)
    deriv = 1.0 + 0.0j
    for _ in range(n):
        deriv *= np.polyval(dc, zk)
        zk = complex(np.polyval(c, zk))
    num = -degree * deriv * np.conj(zk)
    return num / ((1.0 + abs(zk) ** 2) * float(d) ** n)


def fixed_point_step_gradient(coeffs, n: int, z0: complex,
                              degree: int = 1) -> float:
    """Normalized gradient of one iteration step, log(h_n/h_{n-1}), at a fixed point.

    The normalizer is the dynamically invariant cotangent norm at the fixed
    point: solving N(z) = (N(P(z)) |P'(z)|^2)^{1/d} at z0 = P(z0) gives
    N = |P'(z0)|^{2/(d-1)}, so the gradient is scaled by |P'(z0)|^{1/(d-1)}.
    For z^2 - 2 at z0 = 2 this returns (4/5) * 2^n.
    """
    c, d = _validate_poly(coeffs)
    z0 = complex(z0)
    if abs(complex(np.polyval(c, z0)) - z0) > 1e-9 * (1.0 + abs(z0)):
        raise ValueError("z0 is not a fixed point of the polynomial")
    mult = abs(complex(np.polyval(np.polyder(c), z0)))
    step = (dynamical_log_gradient(coeffs, n, z0, degree)
            - dynamical_log_gradient(coeffs, n - 1, z0, degree))
    return float(mult ** (1.0 / (d - 1)) * abs(step))


# ----------------------------------------------------------------------------
# blending and interpolation


def _resolve_cutoff(cutoff, ugrid):
    """Accept (r, R) pairs, dicts, or a plain callable rho(u).

    With an annulus declared, rho must vanish on it (that is where the
    singular profile lives); violations are rejected.
    """
    if callable(cutoff):
        return cutoff, None
    if isinstance(cutoff, tuple):
        cutoff = {"r": cutoff[0], "R": cutoff[1]}
    rho = cutoff.get("rho")
    r, big_r = cutoff.get("r"), cutoff.get("R")
    width = float(cutoff.get("width", 1.0))
    annulus = None
    if r is not None and big_r is not None:
        if not (0.0 < r < big_r):
            raise ValueError("need 0 < r < R")
        u_lo, u_hi = -math.log(big_r), -math.log(r)
        annulus = (u_lo, u_hi)
        if rho is None:
            def rho(u, lo=u_lo, hi=u_hi, w=width):
                u = np.asarray(u, dtype=float)
                left = _smoothstep((lo - u) / w)
                right = _smoothstep((u - hi) / w)
                return left + right
    if rho is None:
        raise ValueError("cutoff needs either rho or an (r, R) annulus")
    if annulus is not None:
        us = np.linspace(annulus[0], annulus[1], 257)
        if np.max(np.abs(rho(us))) > 1e-12:
            raise ValueError("cutoff does not vanish on the annulus")
    return rho, annulus


def blend_metrics(singular: MetricProfile, smooth_seq: Sequence[MetricProfile],
                  cutoff) -> list[MetricProfile]:
    """Blend a singular profile into each smooth one away from its bad annulus.

    Output log-profiles are rho*psi_singular + (1-rho)*psi_n.  Because the
    singular part is common to all members, consecutive log-ratios contract
    pointwise: log(h_n_blend / h_m_blend) = (1-rho)(psi_n - psi_m), so every
    sup-ratio norm can only shrink.
    """
    rho, _ = _resolve_cutoff(cutoff, None)
    out = []
    for prof in smooth_seq:
        def psi(u, a=singular.psi, b=prof.psi, rho=rho):
            r = np.asarray(rho(u), dtype=float)
            return r * a(u) + (1.0 - r) * b(u)

        out.append(MetricProfile(degree=prof.degree, kind="blended", psi=psi,
                                 params={"smooth_kind": prof.kind,
                                         "singular_kind": singular.kind}))
    return out


@dataclass
class ContinuousFamily:
    """Interpolation H(v) of profiles h_1..h_N with H(n) = h_n exactly.

    Between integers, H is the pointwise convex combination
    (1 - rho(v-n)) h_n + rho(v-n) h_{n+1} of the two neighboring metrics
    (not of their logs), with a quintic C^2 bump rho.
    """

    members: list
    limit: MetricProfile | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("need at least two family members")

    @property
    def size(self) -> int:
        return len(self.members)

    def _locate(self, v: float):
        if not (1.0 <= v <= self.size):
            raise ValueError(f"family parameter {v} outside [1, {self.size}]")
        n = min(int(math.floor(v)), self.size - 1)
        return n, v - n  # member index (1-based) and fractional part

    def eval(self, v: float) -> MetricProfile:
        n, frac = self._locate(v)
        if frac == 0.0:
            return self.members[n - 1]
        if frac == 1.0:  # right endpoint lands on member n+1 exactly
            return self.members[n]
        lo, hi = self.members[n - 1], self.members[n]
        t = float(_smoothstep(frac))

        def psi(u, a=lo.psi, b=hi.psi, t=t):
            # log of the metric convex combination, stable via logaddexp
            pa, pb = a(u), b(u)
            return np.logaddexp(np.log1p(-t) + pa, math.log(t) + pb)

        return MetricProfile(degree=lo.degree, kind="interpolated", psi=psi,
                             params={"v": v})

    def d_dv_log(self, v: float, u: np.ndarray) -> np.ndarray:
        """Parameter derivative of log H(v) on the radial grid."""
        n, frac = self._locate(min(v, self.size - 1e-12))
        lo, hi = self.members[n - 1], self.members[n]
        t = float(_smoothstep(frac))
        tp = float(_smoothstep_prime(frac))
        pa, pb = lo.psi(u), hi.psi(u)
        log_h = np.logaddexp(np.log1p(-t) + pa, math.log(t) + pb) \
            if 0.0 < t < 1.0 else (pa if t == 0.0 else pb)
        # d_v log H = rho' * (h_{n+1} - h_n)/H, written with bounded exponents
        return tp * (np.exp(pb - log_h) - np.exp(pa - log_h))

    def step_ratio_sup(self, n: int, ugrid: np.ndarray) -> float:
        """sup |h_{n+1}/h_n - 1| over the grid, for n in 1..N-1."""
        lo, hi = self.members[n - 1], self.members[n]
        return float(np.max(np.abs(np.expm1(hi.psi(ugrid) - lo.psi(ugrid)))))


def interpolate(family: Sequence[MetricProfile],
                limit: MetricProfile | None = None) -> ContinuousFamily:
    if len(family) == 0:
        raise ValueError("empty family")
    degrees = {p.degree for p in family}
    if len(degrees) != 1:
        raise ValueError("family members must share the bundle degree")
    return ContinuousFamily(members=list(family), limit=limit)


# ----------------------------------------------------------------------------
# diagnostics


def radial_gradient_norm(g_samples: np.ndarray, w_samples: np.ndarray,
                         ugrid: np.ndarray) -> np.ndarray:
    """|h_X|^{-1/2} |d_z g| for radial g, which reduces to |g'(u)| / (2 sqrt w)."""
    gp = np.gradient(g_samples, ugrid)
    return np.abs(gp) / (2.0 * np.sqrt(w_samples))


@dataclass
class FamilyDiagnostics:
    """Summability and gradient diagnostics of a metric sequence.

    ratio_norms[i] = sup |h_{i+2}/h_{i+1} - 1| (consecutive pairs, so entry i
    compares members i+1 and i+2 in 1-based labels); grad_norms are the
    base-normalized sup gradients of the same log-ratios; delta_E and pi_E are
    the parameter-derivative sups sampled at midpoints of the family range.
    """

    ratio_norms: np.ndarray
    grad_norms: np.ndarray
    delta_E: np.ndarray
    pi_E: np.ndarray
    sum_sqrt_ratio: float
    v_samples: np.ndarray
    grid_spec: dict

    def rows(self):
        """CSV rows n,ratio_norm,grad_norm,sum_sqrt_ratio (n is the later member)."""
        partial = np.cumsum(np.sqrt(self.ratio_norms))
        for i, (r, g, s) in enumerate(zip(self.ratio_norms, self.grad_norms,
                                          partial)):
            yield (i + 2, r, g, s)


def diagnostics(family: ContinuousFamily, base: BaseProfile,
                ugrid: np.ndarray | None = None,
                v_samples: np.ndarray | None = None) -> FamilyDiagnostics:
    if ugrid is None:
        ugrid = default_ugrid()
    w = base.w(ugrid)
    n_members = family.size
    ratio, grad = [], []
    for n in range(1, n_members):
        lo, hi = family.members[n - 1], family.members[n]
        diff = hi.psi(ugrid) - lo.psi(ugrid)
        ratio.append(float(np.max(np.abs(np.expm1(diff)))))
        grad.append(float(np.max(radial_gradient_norm(diff, w, ugrid))))
    if v_samples is None:
        v_samples = np.arange(1, n_members, dtype=float) + 0.5
    delta, pi = [], []
    for v in v_samples:
        dv = family.d_dv_log(v, ugrid)
        delta.append(float(np.max(np.abs(dv))))
        pi.append(float(np.max(radial_gradient_norm(dv, w, ugrid))))
    ratio = np.array(ratio)
    return FamilyDiagnostics(
        ratio_norms=ratio,
        grad_norms=np.array(grad),
        delta_E=np.array(delta),
        pi_E=np.array(pi),
        sum_sqrt_ratio=float(np.sum(np.sqrt(ratio))),
        v_samples=np.asarray(v_samples, dtype=float),
        grid_spec={"u_min": float(ugrid[0]), "u_max": float(ugrid[-1]),
                   "n": int(len(ugrid))},
    )


def log_bound_check(phi: np.ndarray, eps: float) -> dict:
    """Check (1+2eps)^{-1} |log phi| <= |phi - 1| <= (1-2eps)^{-1} |log phi|.

    Requires sup|phi - 1| < eps < 1/2.  Returns the measured slacks; both
    inequalities are sharp as eps -> 0 and valid on the whole allowed range.
    """
    if not eps < 0.5:
        raise ValueError("eps must be < 1/2")
    phi = np.asarray(phi, dtype=float)
    dev = np.abs(phi - 1.0)
    if float(np.max(dev)) >= eps:
        raise ValueError("sup |phi - 1| must be < eps")
    logs = np.abs(np.log(phi))
    lower = logs / (1.0 + 2.0 * eps)
    upper = logs / (1.0 - 2.0 * eps)
    return {
        "pass": bool(np.all(lower <= dev + 1e-15) and np.all(dev <= upper + 1e-15)),
        "max_lower_gap": float(np.max(lower - dev)),
        "max_upper_gap": float(np.max(dev - upper)),
    }


def concavity_report(profile: MetricProfile,
                     ugrid: np.ndarray | None = None) -> dict:
    """Grid concavity of psi and decay of the chart derivative at the z=0 pole.

    Second divided differences must stay below 1e-10; the pole test checks
    that e^u psi'(u) shrinks along the right tail (the chart-frame derivative
    of the metric vanishes at z = 0 for smooth positive profiles).
    """
    if ugrid is None:
        # coarser than the assembly grid on purpose: divided second
        # differences on 4096 nodes sit at the roundoff floor
        ugrid = default_ugrid(1025)
    vals = profile.sample(ugrid)
    h = ugrid[1] - ugrid[0]
    d2 = (vals[2:] - 2.0 * vals[1:-1] + vals[:-2]) / h ** 2
    max_d2 = float(np.max(d2)) if len(d2) else 0.0
    span = float(ugrid[-1])
    probes = np.array([0.5 * span, span - 2.0])
    tail = np.abs(np.exp(probes) * np.asarray(profile.d_psi(probes), float))
    pole_ok = bool(tail[1] <= tail[0] + 1e-12 and tail[1] < 1e-3)
    return {
        "is_concave_on_grid": bool(max_d2 <= 1e-10),
        "max_second_difference": max_d2,
        "zero_derivative_at_pole": pole_ok,
        "pole_tail_values": [float(t) for t in tail],
    }
