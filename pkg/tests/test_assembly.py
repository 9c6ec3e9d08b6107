import numpy as np
import pytest
from scipy.linalg import eigh

from radlap import assembly as asm
from radlap import profiles as pr

BASE = pr.make_fs_base()


def test_discretization_basics():
    d = asm.Discretization(-12.0, 12.0, 4096)
    assert d.h == pytest.approx(24.0 / 4095)
    r = d.refine(4)
    assert r.n == 4 * 4095 + 1
    assert r.h == pytest.approx(d.h / 4)
    with pytest.raises(ValueError):
        asm.Discretization(1.0, -1.0, 64)


def test_round_mode0_rayleigh_of_exact_eigenfunction():
    # degree 0, round metric: tanh u is the first eigenfunction, eigenvalue 2
    disc = asm.Discretization()
    op = asm.reduce_mode(pr.make_fubini_study(0), BASE, 0, disc)
    x = op.from_section_samples(np.tanh(disc.nodes))
    assert abs(op.rayleigh(x) - 2.0) < 2e-5


def test_gauged_kernel_is_exact():
    # holomorphic sections become constants in the gauged variable, so the
    # stiffness must annihilate them to machine precision
    disc = asm.Discretization()
    prof = pr.make_fubini_study(2)
    for k in (0, 1, 2):
        op = asm.reduce_mode(prof, BASE, k, disc)
        assert op.gauge == "gauged"
        res = np.max(np.abs(op.apply_Q(np.ones(op.size))))
        assert res < 1e-12


def test_gauged_and_raw_routes_agree():
    disc = asm.Discretization(-12.0, 12.0, 1025)
    prof = pr.make_fubini_study(2)
    og = asm.reduce_mode(prof, BASE, 1, disc)
    orw = asm.reduce_mode(prof, BASE, 1, disc, gauge="raw")
    assert og.gauge == "gauged" and orw.gauge == "raw"
    eg = eigh(og.dense_Q(), og.dense_M(), eigvals_only=True)
    er = eigh(orw.dense_Q(), orw.dense_M(), eigvals_only=True)
    assert abs(eg[0]) < 1e-6           # exact kernel mode
    assert abs(er[0]) < 1e-3           # interpolated kernel mode
    for a, b in zip(eg[1:5], er[1:5]):
        assert abs(a - b) / b < 5e-4


def test_out_of_range_modes_match_round_spectrum():
    # FS on O(1) has total eigenvalues l(l+2); the lowest eigenvalue of the
    # mode-k pencil is at l = k-1 for k > 1 and l = -k for k < 0
    disc = asm.Discretization(-12.0, 12.0, 1025)
    prof = pr.make_fubini_study(1)
    for k, expect in ((2, 3.0), (-1, 3.0), (27, 728.0)):
        op = asm.reduce_mode(prof, BASE, k, disc)
        assert op.gauge == "raw"
        # full eigh driver on purpose: the subset driver loses ~3 digits on
        # these generalized pencils
        low = eigh(op.dense_Q(), op.dense_M(), eigvals_only=True)[0]
        assert abs(low - expect) / expect < 2e-4


def test_gauged_overflow_guard():
    with pytest.raises(ValueError):
        asm.reduce_mode(pr.make_fubini_study(1), BASE, 27,
                        asm.Discretization(), gauge="gauged")


def test_stiffness_monotone_in_profile():
    # pointwise larger weight implies a larger quadratic form, for any vector
    disc = asm.Discretization(-8.0, 8.0, 513)
    rng = np.random.default_rng(911)
    for m, k in ((1, 0), (1, 1), (2, 3)):
        lo = asm.reduce_mode(pr.make_pnorm(m, pr.chi_dyadic, 3), BASE, k, disc)
        hi = asm.reduce_mode(pr.make_pnorm(m, pr.chi_dyadic, 4), BASE, k, disc)
        for _ in range(25):
            x = rng.standard_normal(lo.size)
            a = x @ lo.apply_Q(x)
            b = x @ hi.apply_Q(x)
            assert a <= b + 1e-12 * abs(b)


def test_mass_and_stiffness_norm_equivalence():
    # e^{psi_p - psi_q} in [alpha, beta] at the quadrature points sandwiches
    # both forms; bounds taken at the Gauss points make this exact
    disc = asm.Discretization(-8.0, 8.0, 513)
    p_prof = pr.make_pnorm(1, pr.chi_dyadic, 3)
    q_prof = pr.make_pnorm(1, pr.chi_dyadic, 5)
    _, psi_p, _ = asm._quadrature_fields(p_prof, BASE, disc)
    _, psi_q, _ = asm._quadrature_fields(q_prof, BASE, disc)
    ratio = np.exp(psi_p - psi_q)
    alpha, beta = float(np.min(ratio)), float(np.max(ratio))
    op_p = asm.reduce_mode(p_prof, BASE, 0, disc)
    op_q = asm.reduce_mode(q_prof, BASE, 0, disc)
    rng = np.random.default_rng(912)
    for _ in range(50):
        x = rng.standard_normal(op_p.size)
        for f_p, f_q in ((op_p.apply_M, op_q.apply_M),
                         (op_p.apply_Q, op_q.apply_Q)):
            vp = x @ f_p(x)
            vq = x @ f_q(x)
            assert alpha * vq <= vp * (1 + 1e-12)
            assert vp <= beta * vq * (1 + 1e-12)


def test_section_roundtrip():
    disc = asm.Discretization(-6.0, 6.0, 257)
    prof = pr.make_fubini_study(2)
    phi = np.exp(-disc.nodes ** 2 / 3.0)
    for k in (-2, 0, 1, 2, 4):
        op = asm.reduce_mode(prof, BASE, k, disc)
        back = op.to_section(op.from_section_samples(phi))
        keep = slice(*op.active)
        assert np.allclose(back[keep], phi[keep], rtol=1e-12, atol=1e-12)


def test_green_identity():
    phi = lambda u: np.exp(-u ** 2 / 2)
    dphi = lambda u: -u * np.exp(-u ** 2 / 2)
    d2phi = lambda u: (u ** 2 - 1) * np.exp(-u ** 2 / 2)
    for k, prof in ((0, pr.make_fubini_study(0)), (1, pr.make_fubini_study(1))):
        assert asm.green_identity_check(prof, BASE, k, phi, dphi, d2phi) < 1e-6


def test_green_identity_random_bumps():
    rng = np.random.default_rng(913)
    profs = [pr.make_fubini_study(0), pr.make_fubini_study(2),
             pr.make_pnorm(1, pr.chi_dyadic, 3)]
    worst = 0.0
    for _ in range(100):
        a = rng.uniform(0.5, 2.0)
        c = rng.uniform(-1.0, 1.0)
        k = int(rng.integers(-3, 6))
        prof = profs[int(rng.integers(0, len(profs)))]
        phi = lambda u: np.exp(-a * (u - c) ** 2)
        dphi = lambda u: -2.0 * a * (u - c) * np.exp(-a * (u - c) ** 2)
        d2phi = lambda u: (4.0 * a * a * (u - c) ** 2 - 2.0 * a) \
            * np.exp(-a * (u - c) ** 2)
        worst = max(worst, asm.green_identity_check(prof, BASE, k,
                                                    phi, dphi, d2phi))
    assert worst < 1e-5


def test_strong_form_on_exact_eigenfunction():
    # grid-differenced strong form reproduces lambda*phi away from the window
    # edge; the 1/(4w) factor amplifies difference error by cosh^2, so the
    # check stays on |u| <= 3
    disc = asm.Discretization()
    u = disc.nodes
    phi = np.tanh(u)
    lap = asm.apply_strong_form(pr.make_fubini_study(0), BASE, 0, u, phi)
    sel = np.abs(u) <= 3.0
    assert np.max(np.abs(lap[sel] - 2.0 * phi[sel])) < 1e-3


def test_divergence_diagnostic_signatures():
    # sqrt-type circle cusp: squared image norm grows by the same increment
    # for each 4x refinement (log divergence); smooth control stays put
    d = asm.divergence_diagnostic(pr.cusp_profile(0.5), BASE)
    v = d["values"]
    assert np.all(np.diff(v) > 0)
    inc = d["increments"]
    assert 0.9 < inc[1] / inc[0] < 1.1
    assert 0.9 < inc[2] / inc[1] < 1.1
    ctrl = asm.divergence_diagnostic(pr.make_fubini_study(1), BASE)
    cv = ctrl["values"]
    assert float(np.max(cv) / np.min(cv)) < 1.02
    # harder cusp: unbounded power-law growth, well past 10x over 3 levels
    hard = asm.divergence_diagnostic(pr.cusp_profile(0.1), BASE)
    assert hard["growth_ratio"] > 10.0


def test_mass_matrix_positive_and_dominant():
    disc = asm.Discretization()
    for prof, k in ((pr.make_fubini_study(1), 0),
                    (pr.make_pnorm(2, pr.chi_dyadic, 4), 5),
                    (pr.make_canonical(1), -2)):
        op = asm.reduce_mode(prof, BASE, k, disc)
        off = np.zeros(op.size)
        off[:-1] += np.abs(op.me)
        off[1:] += np.abs(op.me)
        assert np.all(op.md > 0)
        assert np.all(op.md - off > 0)
