"""End-to-end checks of the toolkit's headline claims.

Each test certifies one deliverable of the whole pipeline at its stated
tolerance: kernel dimensions, round-sphere structure, heat coefficients,
log-determinant oracles, torsion convergence with its eigenvalue
uniformity, the semigroup derivative identity, the variation bounds, the
dynamical-metric anchors, the inequality suites, and the divergence
contrast between integrable and non-integrable profiles.  Fixtures are
cached so the family spectra are solved once; the whole module is budgeted
to run in well under ten minutes on a laptop.
"""

import functools
import math
import time

import numpy as np

from radlap import assembly as asm
from radlap import eigen as eig
from radlap import heat as ht
from radlap import opcalc as oc
from radlap import profiles as pr
from radlap import zeta as zt

BASE = pr.make_fs_base()


@functools.lru_cache(maxsize=None)
def pnorm_members():
    return tuple(pr.make_pnorm(1, pr.chi_dyadic, p) for p in range(3, 10))


@functools.lru_cache(maxsize=None)
def pnorm_family():
    return pr.interpolate(list(pnorm_members()), limit=pr.make_canonical(1))


@functools.lru_cache(maxsize=None)
def torsion_reports():
    # one spectrum per member at full resolution, shared across tests
    disc = asm.Discretization(n=4096)

    def report_of(prof):
        spec = eig.solve_spectrum(prof, BASE, disc)
        return zt.zeta_report(ht.ThetaSeries.from_spectrum(spec))

    reports = [report_of(p) for p in pnorm_members()]
    direct = report_of(pr.make_canonical(1))
    return reports, direct


@functools.lru_cache(maxsize=None)
def riemann_series():
    # lambda_j = j, truncated far enough that the fit window is clean
    return ht.ThetaSeries(np.arange(1.0, 2.0e5 + 0.5))


def test_kernel_dimension_matches_bundle_degree():
    # holomorphic sections only: dim = degree + 1, for every metric kind,
    # separated from the rest of the spectrum by six orders of magnitude
    start = time.monotonic()
    disc = asm.Discretization()
    for m in range(0, 4):
        for prof in (pr.make_fubini_study(m), pr.make_canonical(m),
                     pr.make_pnorm(m, pr.chi_dyadic, 6)):
            spec = eig.solve_spectrum(prof, BASE, disc=disc, lam_cut=8.0)
            assert spec.kernel_dim == m + 1, (prof.kind, m)
            assert spec.gap_report["gap_ratio"] > 1e6, (prof.kind, m)
    assert time.monotonic() - start < 30.0


def test_round_sphere_harmonic_structure():
    # degree 0 round metric: groups of 2l+1 at l(l+1), so the first six
    # multiplicities are 1,3,5,7,9,11 and the nonzero ratios are l(l+1)/2
    spec = eig.solve_spectrum(pr.make_fubini_study(0), BASE,
                              asm.Discretization(n=4096), lam_cut=50.0)
    assert [spec.kernel_dim] + spec.multiplicities()[:5] == [1, 3, 5, 7, 9, 11]
    gids = spec.group[~spec.is_kernel]
    means = np.array([np.mean(spec.nonzero[gids == g])
                      for g in sorted(set(int(v) for v in gids))[:5]])
    l = np.arange(1, 6)
    target = l * (l + 1) / 2.0
    assert np.max(np.abs(means / means[0] - target) / target) < 1e-3


def test_heat_coefficients_calibration_and_constancy():
    # synthetic spectrum with exactly known expansion, then constancy of
    # the leading coefficient along the interpolated family, including at
    # blended non-integer parameters
    fit = ht.fit_expansion(riemann_series(), t_lo=1e-3)
    assert abs(fit["b_minus1"] - 1.0) < 1e-3
    assert abs(fit["b0"] + 0.5) < 1e-3

    fam = pnorm_family()
    disc = asm.Discretization(n=2048)
    b1 = []
    for v in (1.0, 1.5, 2.0, 2.5, 3.5, 4.5, 5.5, 6.5, 7.0):
        spec = eig.solve_spectrum(fam.eval(v), BASE, disc)
        b1.append(ht.fit_expansion(ht.ThetaSeries.from_spectrum(spec))["b_minus1"])
    b1 = np.array(b1)
    assert np.max(np.abs(b1 / np.mean(b1) - 1.0)) < 0.02


def test_log_determinant_closed_form_oracles():
    # spectrum {lam}: zeta'(0) = -log lam; lambda_j = j: -(1/2) log 2 pi
    for lam in (0.5, 2.0, 5.0):
        series = ht.ThetaSeries(np.array([lam]))
        fit = ht.fit_expansion(series, t_lo=3e-5)
        assert abs(zt.zeta_prime0(series, fit) + math.log(lam)) < 1e-4
    fit = ht.fit_expansion(riemann_series(), t_lo=1e-3)
    val = zt.zeta_prime0(riemann_series(), fit)
    assert abs(val + 0.5 * math.log(2.0 * math.pi)) < 1e-3


def test_torsion_sequence_converges_to_direct_limit():
    # Cauchy with geometric contraction once past the p=5 plateau, and the
    # extrapolated value lands on the direct limit-metric computation
    reports, direct = torsion_reports()
    res = zt.torsion_limit(reports, p_values=range(3, 10), direct=direct)
    assert res["cauchy_ok"]
    gaps = res["gaps"]
    for i in range(2, len(gaps) - 1):  # gap pairs starting at p >= 5
        assert gaps[i] >= 1.5 * gaps[i + 1], (i, gaps)
    assert res["discrepancy"] < 5e-3


def test_first_eigenvalue_uniform_over_family():
    # positive spectral gap along the whole family, with every pair ratio
    # inside the metric-equivalence envelope [alpha, 1/alpha]
    rep = eig.lambda1_family(list(pnorm_members()), BASE,
                             disc=asm.Discretization(n=2048))
    assert rep["min_lambda1"] > 0.0
    assert rep["all_within"], rep["pairs"]


def test_semigroup_derivative_matches_integral_form():
    # finite-difference derivative of exp(-tA(v)) against the integral
    # representation: small residual, second-order in the step
    res = ht.duhamel_check(pnorm_family(), BASE, 2.5, t=1.0)
    assert not res["degenerate"] and not res["cancellation_risk"]
    assert res["residual"] < 1e-4
    assert len(res["ratios"]) == 2  # three steps, two halvings
    for r in res["ratios"]:
        assert 3.0 < r < 5.0, res["ratios"]


def test_variation_bounds_hold_with_slack():
    # all four discrete variation estimates, bundle family and base family
    names = set()
    for v in (1.5, 3.5):
        for entry in ht.variation_bounds(pnorm_family(), BASE, v,
                                         t_values=(0.25, 1.0, 4.0)):
            assert entry["pass"] and entry["slack"] >= 0.0, entry
            names.add(entry["bound_name"])
    tx_members = [pr.MetricProfile(
        degree=0, kind=f"logw-{p}",
        psi=(lambda u, p=p: np.log(pr.make_tx_pnorm_base(p).w(u))))
        for p in (2, 4, 8, 16)]
    entry = ht.tx_variation_bound(pr.interpolate(tx_members), 2.5)
    assert entry["pass"] and entry["slack"] >= 0.0, entry
    names.add(entry["bound_name"])
    assert names == {"derivative_vs_energy", "smoothed_derivative_norm",
                     "propagator_parameter_derivative",
                     "base_variation_relative"}


def test_dynamical_metric_anchors():
    # squaring map: potential reaches the max-norm metric at the stored
    # nodes; z^2 - 2 fixes z = 2, where the orbit log-gradient is 2^{n+1}/5
    prof = pr.make_dynamical([1.0, 0.0, 0.0], 20, pr.make_fubini_study(1))
    can = pr.make_canonical(1)
    u = pr.default_ugrid()
    assert np.max(np.abs(prof.psi(u) - can.psi(u))) < 1e-6
    for n in range(0, 11):
        g = pr.dynamical_log_gradient([1.0, 0.0, -2.0], n, 2.0)
        expect = 2.0 ** (n + 1) / 5.0
        assert abs(abs(g) - expect) <= 1e-9 * expect


def test_inequality_suites_pass():
    # log-vs-linear deviation bounds, integration by parts, trace-norm
    # inequalities with geometry changes, and the isoperimetric sandwich
    rng = np.random.default_rng(20260815)
    for _ in range(1000):
        eps = rng.uniform(1e-3, 0.499)
        phi = 1.0 + rng.uniform(-0.999, 0.999, size=64) * eps
        assert pr.log_bound_check(phi, eps)["pass"]

    phi = lambda u: np.exp(-u ** 2 / 2)
    dphi = lambda u: -u * np.exp(-u ** 2 / 2)
    d2phi = lambda u: (u ** 2 - 1) * np.exp(-u ** 2 / 2)
    for k, prof in ((0, pr.make_fubini_study(0)), (1, pr.make_fubini_study(1))):
        assert asm.green_identity_check(prof, BASE, k, phi, dphi, d2phi) < 1e-6

    for i in range(700):
        n = int(rng.integers(2, 30))
        a = rng.standard_normal((n, n))
        t = rng.standard_normal((n, n))
        b = rng.standard_normal((n, n))
        ip = None
        ip_other = None
        if i % 3 == 0:
            x = rng.standard_normal((n, n))
            ip = x @ x.T + n * np.eye(n)
            if i % 6 == 0:
                s = rng.standard_normal((n, n))
                s = 0.05 * (s + s.T) / math.sqrt(n)
                l = np.linalg.cholesky(ip)
                ip_other = l @ (np.eye(n) + s) @ l.T
        for entry in oc.norm_inequality_suite(a, t, b, ip, ip_other):
            assert entry["pass"], entry

    rep = eig.cheeger(BASE)
    assert rep["bound_holds"]
    tab = eig.cheeger_pnorm_table(range(2, 13))
    assert tab["max_ratio"] <= 1.0 + 1e-12
    assert tab["min_ratio"] >= 2.0 ** (-2.0 * math.pi ** 2 / 3.0)


def test_divergence_separates_integrable_from_not():
    # gradient blow-up at the unit circle leaves L^2: the discrete image
    # norm must grow without bound under refinement, while the smooth
    # profile's sequence converges
    hard = asm.divergence_diagnostic(pr.cusp_profile(0.1), BASE)
    assert np.all(np.diff(hard["values"]) > 0)
    assert hard["growth_ratio"] > 10.0
    ctrl = asm.divergence_diagnostic(pr.make_fubini_study(1), BASE)
    cv = np.asarray(ctrl["values"])
    assert float(np.max(cv) / np.min(cv)) < 1.05
