import functools
import math

import numpy as np
import pytest
from scipy.linalg import eigh

from radlap import assembly as asm
from radlap import eigen as eig
from radlap import heat as ht
from radlap import profiles as pr

BASE = pr.make_fs_base()
FS = pr.make_fubini_study(0)


def m_norm(op, x):
    return math.sqrt(max(float(x @ op.apply_M(x)), 0.0))


@functools.lru_cache(maxsize=None)
def fs_spectrum(n=4096):
    return eig.solve_spectrum(FS, BASE, asm.Discretization(n=n))


@functools.lru_cache(maxsize=None)
def fs_series(n=4096):
    return ht.ThetaSeries.from_spectrum(fs_spectrum(n))


@functools.lru_cache(maxsize=None)
def dyadic_family():
    members = [pr.make_pnorm(1, pr.chi_dyadic, p) for p in range(3, 10)]
    return pr.interpolate(members, limit=pr.make_canonical(1))


# ----------------------------------------------------------------------------
# theta traces


def test_single_eigenvalue_trace():
    ts = ht.ThetaSeries(np.array([3.7]))
    for t in (0.1, 1.0, 6.0):
        assert abs(ts.eval(t) - math.exp(-3.7 * t)) < 1e-15
    assert ts.lambda1 == 3.7


def test_nonpositive_time_rejected():
    ts = ht.ThetaSeries(np.array([1.0, 2.0]))
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            ts.eval(bad)
        with pytest.raises(ValueError):
            ts.tail_bound(bad)


def test_nonpositive_eigenvalue_rejected():
    with pytest.raises(ValueError):
        ht.ThetaSeries(np.array([-1.0, 2.0]))
    with pytest.raises(ValueError):
        ht.ThetaSeries(np.array([0.0, 2.0]))


def test_integer_spectrum_closed_form():
    # lam_j = j is a geometric series; the truncation error of the first
    # 2e5 terms at t = 1e-3 is e^-200, invisible
    lam = np.arange(1.0, 2.0e5 + 0.5)
    ts = ht.ThetaSeries(lam)
    for t in (1e-3, 1e-2, 0.5):
        exact = 1.0 / math.expm1(t)
        assert abs(ts.eval(t) - exact) <= 1e-12 * exact + 1e-13


def test_log_convexity_on_fs():
    # second differences need the uniform grid
    ts = fs_series()
    tg = np.linspace(0.05, 5.0, 40)
    second = np.diff(np.log(ts.eval(tg)), 2)
    assert np.min(second) > -1e-10


def test_decay_rate_bounded_by_lambda1():
    ts = fs_series()
    lam1 = ts.lambda1
    for s, t in ((0.3, 0.9), (1.0, 2.5), (0.1, 4.0)):
        assert ts.eval(t) <= ts.eval(s) * math.exp(-lam1 * (t - s)) * (1 + 1e-12)


def test_tail_estimate_tracks_truncation():
    # the continuum estimate is an order of magnitude, not a hard bound: the
    # multiplicity cluster right above the cut can beat the factor-2 pad
    full = fs_series()
    cut = 40.0
    short = ht.ThetaSeries(full.lambdas[full.lambdas <= cut], lam_complete=cut)
    rest = ht.ThetaSeries(full.lambdas[full.lambdas > cut])
    for t in (0.5, 1.0, 2.0):
        dropped = rest.eval(t)
        est = short.tail_bound(t)
        assert 0.0 < dropped <= 2.0 * est
        assert dropped >= 0.01 * est
    assert short.tail_bound(2.0) < short.tail_bound(0.5)


def test_theta_rows_roundtrip():
    ts = ht.ThetaSeries(np.array([1.0, 4.0]), lam_complete=10.0)
    rows = list(ht.theta_rows(ts, [0.5, 1.0]))
    assert rows[0][0] == 0.5
    assert abs(rows[1][1] - (math.exp(-1.0) + math.exp(-4.0))) < 1e-15
    assert rows[0][2] == ts.tail_bound(0.5)


# ----------------------------------------------------------------------------
# small-time expansion fits


def test_fit_synthetic_integer_spectrum():
    # theta = 1/(e^t - 1) = 1/t - 1/2 + t/12 - ..., so b_{-1} = 1, b_0 = -1/2
    lam = np.arange(1.0, 2.0e5 + 0.5)
    fit = ht.fit_expansion(ht.ThetaSeries(lam), t_lo=1e-3)
    assert abs(fit["b_minus1"] - 1.0) < 1e-3
    assert abs(fit["b0"] + 0.5) < 1e-3
    assert fit["residual"] < 1e-3


def test_fit_callable_needs_window():
    with pytest.raises(ValueError):
        ht.fit_expansion(lambda t: 1.0 / t)


def test_fit_rejects_degenerate_window():
    lam = np.arange(1.0, 2.0e5 + 0.5)
    with pytest.raises(ValueError, match="ill-conditioned"):
        ht.fit_expansion(ht.ThetaSeries(lam), t_lo=1e-9)
    with pytest.raises(ValueError):
        ht.fit_expansion(ht.ThetaSeries(lam), t_lo=1e-3, n_pts=3)


def test_fit_fs_round_metric():
    # rank times mass volume is 1 for the round base; the m = 0 round sphere
    # also has b_0 = -2/3 (constant curvature 2 in these units)
    fit = ht.fit_expansion(fs_series())
    assert abs(fit["b_minus1"] - 1.0) < 2e-3
    assert abs(fit["b0"] + 2.0 / 3.0) < 2e-3


def test_fit_tracks_base_volume():
    # doubling the base volume doubles b_{-1}; independent scaling route
    sb = pr.scale_base(BASE, 2.0)
    spec = eig.solve_spectrum(FS, sb, asm.Discretization(n=2048))
    fit = ht.fit_expansion(ht.ThetaSeries.from_spectrum(spec))
    assert abs(fit["b_minus1"] / 2.0 - 1.0) < 0.01


def test_fit_constant_across_family():
    fam = dyadic_family()
    disc = asm.Discretization(n=2048)
    b1, b0 = [], []
    for prof in fam.members:
        spec = eig.solve_spectrum(prof, BASE, disc)
        fit = ht.fit_expansion(ht.ThetaSeries.from_spectrum(spec))
        b1.append(fit["b_minus1"])
        b0.append(fit["b0"])
    assert max(abs(b - 1.0) for b in b1) < 0.02
    assert max(b1) - min(b1) < 1e-3
    assert max(b0) - min(b0) < 0.03


def test_trace_stable_under_refinement():
    vals = {n: ht.theta(fs_spectrum(n), 1.0) for n in (2048, 4096, 8192)}
    assert abs(vals[4096] - vals[2048]) < 5e-6
    r1 = (4.0 * vals[4096] - vals[2048]) / 3.0
    r2 = (4.0 * vals[8192] - vals[4096]) / 3.0
    assert abs(r2 - r1) < 1e-7


# ----------------------------------------------------------------------------
# spectral heat propagator


def test_propagator_matches_dense_exponential():
    disc = asm.Discretization(-6.0, 6.0, 257)
    op = asm.reduce_mode(FS, BASE, 0, disc)
    Q, M = op.dense_Q(), op.dense_M()
    lam, V = eigh(Q, M)
    prop = ht.HeatPropagator(op, lam, V)
    rng = np.random.default_rng(3)
    x = rng.standard_normal(op.size)
    for t in (0.0, 0.3, 2.0):
        ref = V @ (np.exp(-lam * t) * (V.T @ (M @ x)))
        err = np.linalg.norm(prop.apply(t, x) - ref)
        assert err < 1e-10 * np.linalg.norm(ref)


def test_propagator_semigroup_law():
    disc = asm.Discretization(n=1025)
    op = asm.reduce_mode(FS, BASE, 0, disc)
    lam, vecs = eig.solve_mode(op, n_eigs=12, vectors=True)
    prop = ht.HeatPropagator(op, lam, vecs)
    rng = np.random.default_rng(11)
    x = rng.standard_normal(op.size)
    y12 = prop.apply(0.7, prop.apply(0.5, x))
    y3 = prop.apply(1.2, x)
    assert m_norm(op, y12 - y3) <= 1e-10 * m_norm(op, y3)
    # basis is M-orthonormal after the Gram correction
    mv = np.column_stack([op.apply_M(prop.vecs[:, i]) for i in range(12)])
    assert np.max(np.abs(prop.vecs.T @ mv - np.eye(12))) < 1e-12


def test_propagator_projects_and_contracts():
    disc = asm.Discretization(n=1025)
    op = asm.reduce_mode(FS, BASE, 0, disc)
    lam, vecs = eig.solve_mode(op, n_eigs=8, vectors=True)
    prop = ht.HeatPropagator(op, lam, vecs)
    rng = np.random.default_rng(5)
    x = rng.standard_normal(op.size)
    p0 = prop.apply(0.0, x)
    assert m_norm(op, prop.apply(0.0, p0) - p0) <= 1e-12 * m_norm(op, p0)
    assert m_norm(op, prop.apply(1.5, x)) <= m_norm(op, p0) * (1 + 1e-12)
    with pytest.raises(ValueError):
        prop.apply(-0.1, x)
    same = ht.heat_apply(op, lam, vecs, 0.8, x)
    assert np.allclose(same, prop.apply(0.8, x), rtol=0, atol=1e-13)


# ----------------------------------------------------------------------------
# Duhamel identity


def test_duhamel_residual_small_and_second_order():
    res = ht.duhamel_check(dyadic_family(), BASE, 2.5, t=1.0)
    assert not res["degenerate"]
    assert not res["cancellation_risk"]
    assert res["residual"] < 1e-4
    # halving the step divides the residual by about four
    for r in res["ratios"]:
        assert 3.0 < r < 5.0
    assert res["n_panels"] > 10


def test_duhamel_constant_family_is_exact():
    fam = pr.interpolate([FS, FS])
    res = ht.duhamel_check(fam, BASE, 1.5, t=1.0)
    assert res["degenerate"]
    assert res["rhs_norm"] < 1e-14
    assert res["residual"] < 1e-14


def test_duhamel_commuting_scaling_family():
    # constant rescaling commutes with the operator, so the only error left
    # is the finite-difference truncation of the interpolation weight
    sc = [pr.MetricProfile(degree=0, kind="scaled",
                           psi=(lambda u, c=c: FS.psi(u) + c))
          for c in (0.0, 0.6)]
    res = ht.duhamel_check(pr.interpolate(sc), BASE, 1.5, t=1.0)
    assert res["residual"] < 1e-5
    seq = [res["residuals"][e] for e in (1e-2, 5e-3, 2.5e-3)]
    assert seq[0] > seq[1] > seq[2] > res["residual"]


def test_duhamel_validation():
    fam = dyadic_family()
    with pytest.raises(ValueError):
        ht.duhamel_check(fam, BASE, 2.5, t=0.0)
    with pytest.raises(ValueError, match="breakpoint"):
        ht.duhamel_check(fam, BASE, 3.0)
    with pytest.raises(ValueError, match="family ends"):
        ht.duhamel_check(fam, BASE, 1.003)
    res = ht.duhamel_check(fam, BASE, 2.5, eps_list=(1e-2,), eps_report=1e-7)
    assert res["cancellation_risk"]


# ----------------------------------------------------------------------------
# variation bounds


def test_energy_bound_for_derivative_pencil():
    for v in (1.5, 3.5):
        rep = ht.variation_bounds(dyadic_family(), BASE, v, t_values=())
        (entry,) = rep
        assert entry["bound_name"] == "derivative_vs_energy"
        assert entry["pass"]
        assert entry["lhs"] > 0.0
        assert entry["slack"] > 0.0


def test_smoothed_and_parameter_derivative_bounds():
    worst_c = 0.0
    for v in (1.5, 2.5, 3.5):
        for entry in ht.variation_bounds(dyadic_family(), BASE, v):
            assert entry["pass"], entry
            assert entry["slack"] >= 0.0
            if entry["bound_name"] == "smoothed_derivative_norm":
                # stays far from saturating, factor >= 2 observed
                assert entry["rhs"] >= 2.0 * entry["lhs"]
            if entry["bound_name"] == "propagator_parameter_derivative":
                worst_c = max(worst_c, ht.PROPAGATOR_DERIV_C * entry["lhs"] / entry["rhs"])
    # frozen constant is not vacuous: the family gets within 1.5x of it
    assert 0.05 < worst_c < ht.PROPAGATOR_DERIV_C


def test_variation_bounds_reject_breakpoints():
    with pytest.raises(ValueError, match="breakpoint"):
        ht.variation_bounds(dyadic_family(), BASE, 3.0)


@functools.lru_cache(maxsize=None)
def tx_family():
    members = [pr.MetricProfile(degree=0, kind=f"logw-{p}",
                                psi=(lambda u, p=p: np.log(pr.make_tx_pnorm_base(p).w(u))))
               for p in (2, 4, 8, 16)]
    return pr.interpolate(members)


def test_base_variation_bound():
    rep = ht.tx_variation_bound(tx_family(), 2.5)
    assert rep["bound_name"] == "base_variation_relative"
    assert rep["pass"]
    assert rep["delta_x"] > 0.0


def test_base_variation_pencil_is_sharp():
    # the derivative of the base Laplacian is multiplication by the log
    # weight derivative; its mass-pencil norm equals the sup at the
    # quadrature nodes up to the hat-function averaging
    fam, v = tx_family(), 2.5
    disc = asm.Discretization(-8.0, 8.0, 513)
    prof_v = fam.eval(v)
    base_v = pr.make_base_from_weight(lambda u: np.exp(prof_v.psi(u)))
    mult = lambda u: fam.d_dv_log(v, u)
    flat = pr.MetricProfile(degree=0, kind="flat",
                            psi=lambda u: np.zeros_like(np.asarray(u, float)))
    op = asm.reduce_mode(flat, base_v, 0, disc)
    dop = asm.reduce_mode(flat, base_v, 0, disc, multiplier=mult)
    M, dM = op.dense_M(), dop.dense_M()
    lam = eigh(dM, M, eigvals_only=True)
    nrm = max(abs(lam[0]), abs(lam[-1]))
    delta_x = float(np.max(np.abs(mult(asm.quadrature_points(disc)))))
    assert nrm <= delta_x * (1.0 + 1e-10)
    assert nrm >= 0.95 * delta_x


# ----------------------------------------------------------------------------
# convergence of semigroups and resolvents


def test_semigroup_convergence_to_limit():
    rep = ht.semigroup_convergence(dyadic_family(), BASE, t=1.0)
    assert rep["monotone"]
    assert rep["rate_ok"]
    assert rep["dist_to_limit"][0] > 1e-2
    assert rep["dist_to_limit"][-1] < 1e-3


def test_resolvent_convergence_to_limit():
    rep = ht.resolvent_convergence(dyadic_family(), BASE)
    assert rep["monotone"]
    assert rep["rate_ok"]
    for pair in rep["pairs"]:
        assert pair["dist"] <= pair["bound"]
    assert rep["dist_to_limit"][-1] < 1e-3


def test_theta_converges_along_family():
    fam = dyadic_family()
    disc = asm.Discretization(n=2048)
    lim = ht.ThetaSeries.from_spectrum(
        eig.solve_spectrum(fam.limit, BASE, disc))
    t_values = (0.5, 1.0, 2.0)
    diffs = []
    for prof in fam.members:
        ts = ht.ThetaSeries.from_spectrum(eig.solve_spectrum(prof, BASE, disc))
        diffs.append([abs(ts.eval(t) - lim.eval(t)) for t in t_values])
    arr = np.array(diffs)
    assert np.all(arr[1:] < arr[:-1])
    assert np.max(arr[-1]) < 2e-5
