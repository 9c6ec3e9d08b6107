"""Finite element reduction of bundle Laplacians to radial mode operators.

Separating the circle action turns the Laplacian of (psi, w) on O(m) into a
family of one-dimensional pencils indexed by the integer mode k:

    Q_k(phi, phi) = (1/2) int e^psi (phi' + k phi)^2 du
    M_k(phi, phi) =  2   int e^psi w  phi^2        du

assembled here with linear elements on a uniform window and 3-point Gauss
quadrature per cell.  Two equivalent variables are used depending on k:

* kernel range 0 <= k <= m: the gauged variable eta = e^{k u} phi, in which
  Q becomes (1/2) int e^{psi - 2ku} eta'^2 du with natural (free) ends.  The
  holomorphic kernel sections become constant vectors, so the assembled
  stiffness annihilates them to machine precision and the spectral gap of the
  pencil is clean.

* out-of-range k: the raw variable with weight e^psi.  Eigenfunctions decay
  at the end where the frame blows up, so the matching one-sided Dirichlet
  condition is imposed (left end for k > m, right end for k < 0).  The gauged
  weight would overflow there, the raw one stays bounded.

Both routes are O(h^2) accurate and agree on shared modes; tests compare them
directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .profiles import BaseProfile, MetricProfile

# 3-point Gauss rule on [0, 1]
_XG = np.array([0.5 - math.sqrt(15.0) / 10.0, 0.5, 0.5 + math.sqrt(15.0) / 10.0])
_WG = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])
_HAT = np.vstack([1.0 - _XG, _XG])  # hat function values at the Gauss points


@dataclass(frozen=True)
class Discretization:
    """Uniform radial window; n is the node count including both ends."""

    u_min: float = -12.0
    u_max: float = 12.0
    n: int = 4096

    def __post_init__(self):
        if not (self.u_min < self.u_max):
            raise ValueError("empty window")
        if self.n < 8:
            raise ValueError("need at least 8 nodes")

    @property
    def h(self) -> float:
        return (self.u_max - self.u_min) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.u_min, self.u_max, self.n)

    def refine(self, factor: int = 2) -> "Discretization":
        return Discretization(self.u_min, self.u_max, factor * (self.n - 1) + 1)


@dataclass
class ModeOperator:
    """Assembled tridiagonal pencil (Q, M) of one circle mode.

    Diagonals are stored directly: qd/md main, qe/me super (symmetric).
    active = (start, stop) slices the retained nodes out of disc.nodes after
    the one-sided Dirichlet trim; gauge records the assembly variable.
    """

    k: int
    degree: int
    gauge: str
    disc: Discretization
    qd: np.ndarray
    qe: np.ndarray
    md: np.ndarray
    me: np.ndarray
    active: tuple = (0, 0)
    params: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.qd)

    def nodes(self) -> np.ndarray:
        return self.disc.nodes[self.active[0]:self.active[1]]

    def apply_Q(self, x: np.ndarray) -> np.ndarray:
        y = self.qd * x
        y[:-1] += self.qe * x[1:]
        y[1:] += self.qe * x[:-1]
        return y

    def apply_M(self, x: np.ndarray) -> np.ndarray:
        y = self.md * x
        y[:-1] += self.me * x[1:]
        y[1:] += self.me * x[:-1]
        return y

    def solve_M(self, rhs: np.ndarray) -> np.ndarray:
        ab = np.zeros((3, self.size))
        ab[0, 1:] = self.me
        ab[1] = self.md
        ab[2, :-1] = self.me
        return solve_banded((1, 1), ab, rhs)

    def dense_Q(self) -> np.ndarray:
        a = np.diag(self.qd)
        a += np.diag(self.qe, 1) + np.diag(self.qe, -1)
        return a

    def dense_M(self) -> np.ndarray:
        a = np.diag(self.md)
        a += np.diag(self.me, 1) + np.diag(self.me, -1)
        return a

    def rayleigh(self, x: np.ndarray) -> float:
        mass = float(x @ self.apply_M(x))
        if mass <= 0.0:
            raise ValueError("Rayleigh quotient of a null vector")
        return float(x @ self.apply_Q(x)) / mass

    def from_section_samples(self, phi: np.ndarray) -> np.ndarray:
        """Coefficients of the operator variable from bundle-frame samples."""
        phi = np.asarray(phi, dtype=float)
        if len(phi) != self.disc.n:
            raise ValueError("sample the section on the full grid")
        x = phi[self.active[0]:self.active[1]].copy()
        if self.gauge == "gauged":
            x = x * np.exp(self.k * self.nodes())
        return x

    def to_section(self, x: np.ndarray) -> np.ndarray:
        """Bundle-frame samples on the full grid (Dirichlet zeros reinstated)."""
        full = np.zeros(self.disc.n)
        val = np.asarray(x, dtype=float)
        if self.gauge == "gauged":
            val = val * np.exp(-self.k * self.nodes())
        full[self.active[0]:self.active[1]] = val
        return full

    def image_M_norm(self, x: np.ndarray) -> float:
        """|| pencil^{-1}Q x ||_M, the mass norm of the operator image."""
        qx = self.apply_Q(x)
        return float(math.sqrt(max(qx @ self.solve_M(qx), 0.0)))


def quadrature_points(disc: Discretization) -> np.ndarray:
    """Gauss nodes of every cell, shape (n-1, 3).  Pointwise bounds on
    assembled forms are exact at these points, not at the mesh nodes."""
    u = disc.nodes
    return u[:-1, None] + disc.h * _XG[None, :]


def _quadrature_fields(profile, base, disc):
    umid = quadrature_points(disc)
    return umid, np.asarray(profile.psi(umid), float), np.asarray(base.w(umid), float)


def reduce_mode(profile: MetricProfile, base: BaseProfile, k: int,
                disc: Discretization | None = None,
                gauge: str = "auto", multiplier=None) -> ModeOperator:
    """Assemble the mode-k pencil for the metric (profile, base).

    gauge "auto" picks the gauged variable on the kernel range
    0 <= k <= degree and the raw one outside; "raw" and "gauged" force the
    branch (gauged assembly outside the kernel range overflows for wide
    windows and is rejected).

    multiplier, when given, scales the integrand weight of both forms by a
    function of u.  Passing the parameter-derivative of the log-profile turns
    the output into the derivative pencil (dQ, dM) of a metric family, since
    d/dv e^{psi_v} = e^{psi_v} * d(psi_v)/dv.
    """
    if disc is None:
        disc = Discretization()
    m = profile.degree
    if gauge == "auto":
        gauge = "gauged" if 0 <= k <= m else "raw"
    if gauge not in ("gauged", "raw"):
        raise ValueError("gauge must be auto, gauged or raw")
    if gauge == "gauged" and not 0 <= k <= m:
        span = 2.0 * abs(k) * max(abs(disc.u_min), abs(disc.u_max))
        if span > 600.0:
            raise ValueError("gauged weight overflows outside the kernel range")

    h = disc.h
    umid, psi_g, w_g = _quadrature_fields(profile, base, disc)
    n = disc.n
    if multiplier is not None:
        mult_g = np.asarray(multiplier(umid), float)
    else:
        mult_g = 1.0

    qd = np.zeros(n)
    qe = np.zeros(n - 1)
    md = np.zeros(n)
    me = np.zeros(n - 1)

    if gauge == "gauged":
        big_w = mult_g * np.exp(psi_g - 2.0 * k * umid)
        s = (big_w @ _WG) / (2.0 * h)  # per-cell stiffness scalar
        qd[:-1] += s
        qd[1:] += s
        qe -= s
        wm = big_w * w_g
        c11 = _WG * _HAT[0] * _HAT[0]
        c22 = _WG * _HAT[1] * _HAT[1]
        c12 = _WG * _HAT[0] * _HAT[1]
        md[:-1] += 2.0 * h * (wm @ c11)
        md[1:] += 2.0 * h * (wm @ c22)
        me += 2.0 * h * (wm @ c12)
        active = (0, n)
    else:
        e_psi = mult_g * np.exp(psi_g)
        b1 = -1.0 / h + k * _HAT[0]
        b2 = 1.0 / h + k * _HAT[1]
        qd[:-1] += 0.5 * h * (e_psi @ (_WG * b1 * b1))
        qd[1:] += 0.5 * h * (e_psi @ (_WG * b2 * b2))
        qe += 0.5 * h * (e_psi @ (_WG * b1 * b2))
        wm = e_psi * w_g
        md[:-1] += 2.0 * h * (wm @ (_WG * _HAT[0] * _HAT[0]))
        md[1:] += 2.0 * h * (wm @ (_WG * _HAT[1] * _HAT[1]))
        me += 2.0 * h * (wm @ (_WG * _HAT[0] * _HAT[1]))
        # decay end of the true eigenfunctions: pin it
        if k > m:
            active = (1, n)
        elif k < 0:
            active = (0, n - 1)
        else:
            active = (0, n)

    sl = slice(active[0], active[1])
    sle = slice(active[0], active[1] - 1)
    return ModeOperator(k=k, degree=m, gauge=gauge, disc=disc,
                        qd=qd[sl], qe=qe[sle], md=md[sl], me=me[sle],
                        active=active,
                        params={"profile_kind": profile.kind,
                                "base_kind": base.kind})


def assemble_operator_family(profile: MetricProfile, base: BaseProfile,
                             k_min: int, k_max: int,
                             disc: Discretization | None = None) -> dict:
    """Mode operators for every k in [k_min, k_max], keyed by k."""
    if k_min > k_max:
        raise ValueError("empty mode range")
    return {k: reduce_mode(profile, base, k, disc)
            for k in range(k_min, k_max + 1)}


def apply_strong_form(profile: MetricProfile, base: BaseProfile, k: int,
                      u: np.ndarray, phi: np.ndarray,
                      dphi: np.ndarray | None = None,
                      d2phi: np.ndarray | None = None) -> np.ndarray:
    """Pointwise mode Laplacian -(1/4w)[phi'' + psi'(phi' + k phi) - k^2 phi].

    Derivatives of phi fall back to grid differences when not supplied;
    psi' uses the profile's analytic derivative when it has one.
    """
    u = np.asarray(u, dtype=float)
    if dphi is None:
        dphi = np.gradient(phi, u)
    if d2phi is None:
        d2phi = np.gradient(dphi, u)
    psip = np.asarray(profile.d_psi(u), float)
    w = np.asarray(base.w(u), float)
    return -(d2phi + psip * (dphi + k * phi) - k * k * phi) / (4.0 * w)


def green_identity_check(profile: MetricProfile, base: BaseProfile, k: int,
                         phi_fn, dphi_fn, d2phi_fn,
                         u_span: float = 10.0, n: int = 20001) -> float:
    """Relative defect of int e^psi (phi'+k phi)^2 = 4 int e^psi w phi (L phi).

    The identity is integration by parts for the mode pencil; the test
    function must decay fast enough that boundary terms are negligible on the
    window.  Returns |lhs - rhs| / lhs from high-resolution trapezoid sums.
    """
    u = np.linspace(-u_span, u_span, n)
    phi = phi_fn(u)
    dphi = dphi_fn(u)
    e_psi = np.exp(np.asarray(profile.psi(u), float))
    w = np.asarray(base.w(u), float)
    lhs = 0.5 * np.trapezoid(e_psi * (dphi + k * phi) ** 2, u)
    lap = apply_strong_form(profile, base, k, u, phi, dphi, d2phi_fn(u))
    rhs = 2.0 * np.trapezoid(e_psi * w * phi * lap, u)
    return float(abs(lhs - rhs) / abs(lhs))


def divergence_diagnostic(profile: MetricProfile, base: BaseProfile,
                          node_counts=(512, 2048, 8192, 32768),
                          span: float = 3.0) -> dict:
    """Discrete squared mass norm of the Laplacian of z-bar near the circle.

    z-bar lives in the k = -1 mode with radial part e^{-u}.  The section is
    truncated by a fixed bump before the window edge (z-bar is unbounded at
    the far pole) and the norm of the discrete image M^{-1}Q x is collected
    over the fixed neighborhood |log|z|| <= 1/2 of the unit circle, which
    keeps both the window edge and the bump commutator out of the
    measurement.  For profiles whose gradient blows up at |z| = 1 the
    continuum norm there is already infinite and the reported values must
    grow under refinement; smooth profiles give a convergent sequence.  Node
    counts are kept even so no node sits exactly on the circle u = 0.
    """
    from .profiles import _smoothstep

    plateau, edge, mask_halfwidth = 1.0, 0.8 * span, 0.5
    values = []
    for n in node_counts:
        disc = Discretization(-span, span, int(n))
        op = reduce_mode(profile, base, -1, disc)
        au = np.abs(disc.nodes)
        bump = 1.0 - _smoothstep((au - plateau) / (edge - plateau))
        x = op.from_section_samples(bump * np.exp(-disc.nodes))
        y = op.solve_M(op.apply_Q(x))
        y[np.abs(op.nodes()) > mask_halfwidth] = 0.0
        values.append(float(y @ op.apply_M(y)))
    values = np.array(values)
    return {
        "node_counts": [int(n) for n in node_counts],
        "values": values,
        "growth_ratio": float(values[-1] / values[0]),
        "increments": np.diff(values),
    }
