"""Banded generalized eigensolver and spectrum post-processing.

The pencils coming out of assembly are symmetric tridiagonal (Q, M) with M
positive definite and diagonally dominant.  Eigenvalues are located by
bisection on the Sturm sequence of Q - lam*M (LDL^T pivot signs), which is
backward stable and lets us take exactly the part of the spectrum a heat
trace or zeta sum needs.  Eigenvectors come from inverse iteration with a
slightly detuned shift.  scipy's dense eigh is used in the tests as an
independent oracle, never in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.linalg import solve_banded

from .assembly import Discretization, ModeOperator, reduce_mode
from .profiles import BaseProfile, MetricProfile

KERNEL_REL_THRESHOLD = 1e-8     # kernel = lam below this times first nonzero
NEGATIVE_TOL = 1e-10            # pencil eigenvalues may round this far below 0
MULTIPLICITY_RTOL = 1e-3        # cross-mode clustering of continuum multiplets


@numba.njit(cache=True)
def _sturm_count(qd, qe, md, me, lam):
    # negative pivots of LDL^T of (Q - lam*M) = eigenvalues below lam
    n = qd.shape[0]
    count = 0
    d = qd[0] - lam * md[0]
    if d == 0.0:
        d = -1e-300
    if d < 0.0:
        count += 1
    for i in range(1, n):
        e = qe[i - 1] - lam * me[i - 1]
        d = (qd[i] - lam * md[i]) - e * e / d
        if d == 0.0:
            d = -1e-300
        if d < 0.0:
            count += 1
    return count


@numba.njit(cache=True)
def _bisect_eigs(qd, qe, md, me, n_eigs, lo, hi, rtol):
    out = np.empty(n_eigs)
    a_floor = lo
    for j in range(n_eigs):
        a = a_floor
        b = hi
        for _ in range(200):
            mid = 0.5 * (a + b)
            if _sturm_count(qd, qe, md, me, mid) >= j + 1:
                b = mid
            else:
                a = mid
            if b - a <= rtol * max(1.0, abs(a) + abs(b)):
                break
        out[j] = 0.5 * (a + b)
        a_floor = a  # eigenvalues come out sorted; never re-scan below
    return out


def _pencil_bounds(qd, qe, md, me):
    # per-row Gershgorin ratios: outside [lo, hi] the shifted pencil is
    # definite, so all eigenvalues live inside
    offq = np.zeros_like(qd)
    offq[:-1] += np.abs(qe)
    offq[1:] += np.abs(qe)
    offm = np.zeros_like(md)
    offm[:-1] += np.abs(me)
    offm[1:] += np.abs(me)
    denom = md - offm
    if np.any(denom <= 0.0):
        raise np.linalg.LinAlgError("mass matrix not diagonally dominant")
    hi = float(np.max((qd + offq) / denom))
    lo = float(np.min((qd - offq) / denom))
    pad = 0.01 * max(1.0, abs(hi), abs(lo))
    return lo - pad, hi + pad


def solve_pencil(qd, qe, md, me, n_eigs=None, lam_cut=None, rtol=1e-12):
    """Smallest eigenvalues of a symmetric tridiagonal pencil by bisection.

    n_eigs asks for a count, lam_cut for everything at or below a level;
    giving both caps the count at the level.  Diagonals are passed directly
    (qd/md main, qe/me super).
    """
    qd = np.ascontiguousarray(qd, dtype=np.float64)
    qe = np.ascontiguousarray(qe, dtype=np.float64)
    md = np.ascontiguousarray(md, dtype=np.float64)
    me = np.ascontiguousarray(me, dtype=np.float64)
    lo, hi = _pencil_bounds(qd, qe, md, me)
    if lam_cut is not None:
        hi = min(hi, float(lam_cut) * (1.0 + 1e-9) + 1e-12)
    available = _sturm_count(qd, qe, md, me, hi)
    n = available if n_eigs is None else min(int(n_eigs), available)
    if n_eigs is not None and lam_cut is None and n_eigs > available:
        raise ValueError("requested more eigenvalues than the pencil has")
    if n <= 0:
        return np.empty(0)
    return _bisect_eigs(qd, qe, md, me, n, lo, hi, rtol)


def _inverse_iteration(op: ModeOperator, lam: float, rng, sweeps: int = 50):
    # shift detuned below lam so the factorization stays regular even for
    # exactly represented kernel eigenvalues
    sigma = lam - (1e-7 * abs(lam) + 1e-12)
    ab = np.zeros((3, op.size))
    ab[0, 1:] = op.qe - sigma * op.me
    ab[1] = op.qd - sigma * op.md
    ab[2, :-1] = op.qe - sigma * op.me
    x = rng.standard_normal(op.size)
    x /= math.sqrt(x @ op.apply_M(x))
    for _ in range(sweeps):
        x = solve_banded((1, 1), ab, op.apply_M(x))
        x /= math.sqrt(x @ op.apply_M(x))
        res = residual(op, lam, x)
        if res < 1e-9:
            return x
    raise RuntimeError(f"inverse iteration stalled at residual {res:.2e}")


def residual(op: ModeOperator, lam: float, x: np.ndarray) -> float:
    r = op.apply_Q(x) - lam * op.apply_M(x)
    return float(np.linalg.norm(r) / np.linalg.norm(op.apply_M(x)))


def solve_mode(op: ModeOperator, n_eigs=None, lam_cut=None, rtol=1e-12,
               vectors=False, seed=0):
    """Eigenvalues (and optionally vectors) of one mode pencil."""
    lam = solve_pencil(op.qd, op.qe, op.md, op.me,
                       n_eigs=n_eigs, lam_cut=lam_cut, rtol=rtol)
    if not vectors:
        return lam, None
    rng = np.random.default_rng(seed)
    vecs = np.empty((op.size, len(lam)))
    for i, lv in enumerate(lam):
        vecs[:, i] = _inverse_iteration(op, float(lv), rng)
    return lam, vecs


@dataclass
class Spectrum:
    """Merged eigenvalues across modes with kernel and multiplicity tags."""

    lam: np.ndarray
    modes: np.ndarray
    is_kernel: np.ndarray
    group: np.ndarray
    kernel_dim: int
    kernel_threshold: float
    gap_report: dict
    lam_complete: float
    meta: dict = field(default_factory=dict)

    @property
    def nonzero(self) -> np.ndarray:
        return self.lam[~self.is_kernel]

    def counting(self, level: float) -> int:
        return int(np.searchsorted(self.nonzero, level, side="right"))

    def multiplicities(self) -> list:
        gids = self.group[~self.is_kernel]
        return [int(np.sum(gids == g)) for g in
                sorted(set(int(v) for v in gids))]

    def rows(self):
        for i in range(len(self.lam)):
            yield (i, float(self.lam[i]), int(self.modes[i]),
                   int(self.group[i]), int(self.is_kernel[i]))


def merge(mode_eigs: dict, lam_complete: float = math.inf,
          multiplicity_rtol: float = MULTIPLICITY_RTOL,
          meta: dict | None = None) -> Spectrum:
    """Combine per-mode eigenvalue arrays {k: lam_k} into one Spectrum.

    Kernel detection: the reference scale is the smallest eigenvalue that is
    clearly nonzero (above max(1e-10, 1e-12 * lam_max)); anything below
    1e-8 times it is kernel.  Eigenvalues below -1e-10 mean the assembly is
    broken and raise.
    """
    lam = np.concatenate([np.asarray(v, float) for v in mode_eigs.values()])
    ks = np.concatenate([np.full(len(v), k, dtype=int)
                         for k, v in mode_eigs.items()])
    order = np.argsort(lam, kind="stable")
    lam, ks = lam[order], ks[order]
    if len(lam) and lam[0] < -NEGATIVE_TOL:
        raise ValueError(f"negative eigenvalue {lam[0]:.3e}: assembly bug")
    lam_max = float(lam[-1]) if len(lam) else 1.0
    floor = max(1e-10, 1e-12 * lam_max)
    above = lam[lam > floor]
    lam_fn = float(above[0]) if len(above) else 1.0
    is_ker = lam < KERNEL_REL_THRESHOLD * lam_fn
    group = np.zeros(len(lam), dtype=int)
    gid = 0
    prev = None
    for i in np.flatnonzero(~is_ker):
        if prev is None or lam[i] > prev * (1.0 + multiplicity_rtol):
            gid += 1
        group[i] = gid
        prev = lam[i]
    largest_ker = float(np.max(lam[is_ker])) if np.any(is_ker) else 0.0
    return Spectrum(
        lam=lam, modes=ks, is_kernel=is_ker, group=group,
        kernel_dim=int(np.sum(is_ker)),
        kernel_threshold=KERNEL_REL_THRESHOLD,
        gap_report={"largest_kernel": largest_ker,
                    "first_nonzero": lam_fn,
                    "gap_ratio": lam_fn / max(largest_ker, 1e-300)},
        lam_complete=float(lam_complete),
        meta=meta or {},
    )


def solve_spectrum(profile: MetricProfile, base: BaseProfile,
                   disc: Discretization | None = None,
                   lam_cut: float = 600.0, rtol: float = 1e-12,
                   k_limit: int = 160, stop_after: int = 2,
                   multiplicity_rtol: float = MULTIPLICITY_RTOL) -> Spectrum:
    """All eigenvalues at or below lam_cut, scanning modes outward.

    Modes are added upward from k = 0 and downward from k = -1 until
    stop_after consecutive modes contribute nothing; the completeness level
    reported on the Spectrum is the smallest first eigenvalue seen among the
    excluded boundary modes (capped by lam_cut).
    """
    if disc is None:
        disc = Discretization()
    mode_eigs = {}
    boundary_min = math.inf

    def scan(ks):
        nonlocal boundary_min
        misses = 0
        for k in ks:
            op = reduce_mode(profile, base, k, disc)
            lam, _ = solve_mode(op, lam_cut=lam_cut, rtol=rtol)
            if len(lam):
                mode_eigs[k] = lam
                misses = 0
            else:
                low, _ = solve_mode(op, n_eigs=1, rtol=rtol)
                boundary_min = min(boundary_min, float(low[0]))
                misses += 1
                if misses >= stop_after:
                    return

    scan(range(0, k_limit))
    scan(range(-1, -k_limit, -1))
    return merge(mode_eigs,
                 lam_complete=min(lam_cut, boundary_min),
                 multiplicity_rtol=multiplicity_rtol,
                 meta={"profile_kind": profile.kind, "degree": profile.degree,
                       "base_kind": base.kind, "n_nodes": disc.n,
                       "u_min": disc.u_min, "u_max": disc.u_max,
                       "lam_cut": lam_cut})


def project_out_kernel(op: ModeOperator, x: np.ndarray) -> np.ndarray:
    """M-orthogonalize against the gauged kernel vector (constants)."""
    if op.gauge != "gauged":
        return x
    z = np.ones(op.size)
    mz = op.apply_M(z)
    return x - (x @ mz) / (z @ mz) * z


# ----------------------------------------------------------------------------
# eigenvalue comparison across a family


def lambda1_family(members, base: BaseProfile,
                   disc: Discretization | None = None,
                   n_modes_pad: int = 2, rtol: float = 1e-12) -> dict:
    """First nonzero eigenvalue along a metric family, with sandwich check.

    For each ordered pair the equivalence constant alpha =
    min e^{psi_p - psi_q} / max e^{psi_p - psi_q} over the quadrature points
    must bracket lambda_1 ratios in [alpha, 1/alpha]; this is Courant-Fischer
    applied to the sandwiched quadratic forms, so it holds for the discrete
    pencils exactly (up to solver tolerance).
    """
    from .assembly import _quadrature_fields

    if disc is None:
        disc = Discretization()
    members = list(members)
    m = members[0].degree
    lam1 = []
    for prof in members:
        if prof.degree != m:
            raise ValueError("family members must share the bundle degree")
        per_mode = {}
        for k in range(-n_modes_pad, m + n_modes_pad + 1):
            op = reduce_mode(prof, base, k, disc)
            lam, _ = solve_mode(op, n_eigs=min(3, op.size), rtol=rtol)
            per_mode[k] = lam
        spec = merge(per_mode)
        if len(spec.nonzero) == 0:
            raise ValueError("no nonzero eigenvalue found")
        lam1.append(float(spec.nonzero[0]))
    psis = [_quadrature_fields(p, base, disc)[1] for p in members]
    pairs = []
    ok = True
    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            r = np.exp(psis[i] - psis[j])
            alpha = float(np.min(r) / np.max(r))
            ratio = lam1[j] / lam1[i]
            inside = alpha * (1 - 1e-9) <= ratio <= (1 + 1e-9) / alpha
            ok &= inside
            pairs.append({"p_index": i, "q_index": j, "alpha": alpha,
                          "ratio": ratio, "within": inside})
    return {"lambda1": lam1, "pairs": pairs, "all_within": ok,
            "min_lambda1": min(lam1)}


# ----------------------------------------------------------------------------
# Cheeger isoperimetric machinery (trivial bundle, base metric only)


def cheeger(base: BaseProfile, ugrid: np.ndarray | None = None,
            check_lambda1: bool | None = None,
            disc: Discretization | None = None) -> dict:
    """Parallel-circle Cheeger estimate h and the lambda_1 >= h^2/4 check.

    In (u, theta) coordinates the base metric is w(u)(du^2 + dtheta^2), so a
    circle at level c has length 2*pi*sqrt(w(c)) and the cap areas are
    2*pi*int w.  The 2*pi cancels in the quotient.  Restricting to circles
    makes h an upper bound for the true constant, so the eigenvalue
    inequality is only asserted for the round base, where the equator is the
    classical minimizer; elsewhere the estimate is reported unchecked.
    The Laplace-Beltrami lambda_1 in these units is 4x the mode-pencil one.
    """
    if ugrid is None:
        ugrid = np.linspace(-16.0, 16.0, 20001)
    w = np.asarray(base.w(ugrid), float)
    from scipy.integrate import cumulative_trapezoid

    mass = cumulative_trapezoid(w, ugrid, initial=0.0)
    total = mass[-1]
    if total <= 0.0:
        raise ValueError("degenerate base volume")
    caps = np.minimum(mass, total - mass)
    valid = caps > 1e-9 * total
    if not np.any(valid):
        raise ValueError("degenerate volume split everywhere")
    quotient = np.sqrt(w[valid]) / caps[valid]
    idx = int(np.argmin(quotient))
    h = float(quotient[idx])
    c_star = float(ugrid[valid][idx])
    out = {"h": h, "c_star": c_star, "bound": 0.25 * h * h}
    if check_lambda1 is None:
        check_lambda1 = base.kind == "fubini_study"
    if check_lambda1:
        if disc is None:
            disc = Discretization(-12.0, 12.0, 2049)
        flat = MetricProfile(degree=0, kind="custom",
                             psi=lambda u: np.zeros_like(np.asarray(u, float)))
        per_mode = {}
        for k in (-1, 0, 1):
            op = reduce_mode(flat, base, k, disc)
            lam, _ = solve_mode(op, n_eigs=2)
            per_mode[k] = lam
        spec = merge(per_mode)
        lam1 = 4.0 * float(spec.nonzero[0])  # pencil -> Laplace-Beltrami units
        out["lambda1"] = lam1
        out["bound_holds"] = bool(lam1 >= 0.25 * h * h * (1.0 - 1e-6))
    return out


def cheeger_transfer_check(base: BaseProfile, factor, c1: float, c2: float,
                           ugrid: np.ndarray | None = None) -> dict:
    """Transfer of h under metric equivalence c1*g <= g' <= c2*g.

    Lengths move by sqrt of the pinch and areas by the pinch itself, so
    always (sqrt(c1)/c2) h <= h' <= (sqrt(c2)/c1) h.  The weaker linear
    sandwich (c1/c2) h <= h' <= (c2/c1) h only follows when c1 <= 1 <= c2;
    both are evaluated.
    """
    if not (0.0 < c1 <= c2):
        raise ValueError("need 0 < c1 <= c2")
    if ugrid is None:
        ugrid = np.linspace(-16.0, 16.0, 20001)
    f = factor(ugrid)
    if np.any(f < c1 * (1 - 1e-12)) or np.any(f > c2 * (1 + 1e-12)):
        raise ValueError("conformal factor leaves [c1, c2]")
    from .profiles import make_base_from_weight

    other = make_base_from_weight(lambda u: factor(u) * base.w(u))
    h = cheeger(base, ugrid, check_lambda1=False)["h"]
    hp = cheeger(other, ugrid, check_lambda1=False)["h"]
    sqrt_lo, sqrt_hi = math.sqrt(c1) / c2 * h, math.sqrt(c2) / c1 * h
    lin_lo, lin_hi = c1 / c2 * h, c2 / c1 * h
    return {
        "h": h, "h_prime": hp,
        "sqrt_sandwich": bool(sqrt_lo * (1 - 1e-9) <= hp <= sqrt_hi * (1 + 1e-9)),
        "linear_sandwich": bool(lin_lo * (1 - 1e-9) <= hp <= lin_hi * (1 + 1e-9)),
        "linear_valid_regime": bool(c1 <= 1.0 <= c2),
    }


def cheeger_pnorm_table(p_values=range(2, 13),
                        ugrid: np.ndarray | None = None) -> dict:
    """h for the tangent-bundle power-mean bases and the pairwise ratio range.

    Each h is rescaled to unit total volume (h -> h * sqrt(area)); the
    eigenvalue bound is scale invariant but ratios across bases of different
    volume are not comparable without fixing the normalization.
    """
    from .profiles import make_tx_pnorm_base

    if ugrid is None:
        ugrid = np.linspace(-16.0, 16.0, 20001)
    hs = {}
    for p in p_values:
        b = make_tx_pnorm_base(int(p))
        area = 2.0 * math.pi * float(np.trapezoid(b.w(ugrid), ugrid))
        hs[int(p)] = cheeger(b, ugrid, check_lambda1=False)["h"] * math.sqrt(area)
    ps = sorted(hs)
    ratios = {}
    worst = 1.0
    for i, q in enumerate(ps):
        for p in ps[i:]:
            r = hs[q] / hs[p]
            ratios[(q, p)] = r
            worst = min(worst, r)
    return {"h": hs, "ratios": ratios, "min_ratio": worst,
            "max_ratio": max(ratios.values())}
