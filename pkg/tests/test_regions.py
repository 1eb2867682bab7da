import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad, quad

from wavedecay import coeffs as K
from wavedecay import evolve as E
from wavedecay import regions as G
from wavedecay.regions import Field, RegionSpec


def br(x):
    return np.sqrt(1 + np.asarray(x, float) ** 2)


def synth(fn, t0=0.0, t1=1.0, nt=101, dr=1e-2, r_max=10.0):
    tt = np.linspace(t0, t1, nt)
    r = dr * np.arange(int(round(r_max / dr)) + 1)
    T, Rg = np.meshgrid(tt, r, indexing="ij")
    return Field(tt, r, fn(T, Rg))


# --- regions -------------------------------------------------------------

def test_region_membership_examples():
    c = RegionSpec("ConeDist_CTU", T=16, U=4)
    assert c.contains(20.0, 14.0)          # |t-r| = 6
    assert not c.contains(20.0, 16.0)      # |t-r| = 4 is excluded
    assert not c.contains(40.0, 34.0)      # t > 2T
    ext = RegionSpec("Exterior_CRT", T=8, R=16)
    assert ext.contains(10.0, 30.0)
    assert not ext.contains(10.0, 20.0)    # r - t = 10 < R
    with pytest.raises(G.RegionError):
        RegionSpec("Exterior_CRT", T=8, R=8)
    with pytest.raises(G.RegionError):
        RegionSpec("Nowhere")
    assert RegionSpec("Annulus_AR", R=1).contains(0.0, 1.9)
    assert RegionSpec("Annulus_AR", R=4).contains(0.0, 4.0)
    assert not RegionSpec("Annulus_AR", R=4).contains(0.0, 8.0)


def test_back_cone_membership_matches_null_coordinates():
    rng = np.random.default_rng(1)
    t, r = 30.0, 12.0
    reg = RegionSpec("BackCone_Dtr", apex=(t, r))
    s = rng.uniform(0, 45, 5000)
    rho = rng.uniform(0, 45, 5000)
    a, b = s + rho, s - rho
    expect = (a >= abs(t - r)) & (a <= t + r) & (b >= -(t + r)) & (b <= t - r)
    assert np.array_equal(reg.contains(s, rho), expect)
    dy = RegionSpec("BackConeDyad_DtrR", R=4, apex=(t, r))
    assert np.array_equal(dy.contains(s, rho), expect & (rho > 4) & (rho < 8))


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 31 - 1))
def test_cone_slabs_cover_CT(k, seed):
    T = 2.0 ** k
    rng = np.random.default_rng(seed)
    t = rng.uniform(T, 2 * T, 2000) if T > 1 else rng.uniform(0, 2, 2000)
    r = rng.uniform(0, 1, 2000) * t
    count = np.zeros(2000, int)
    for R in G.dyadic_R(2 * T):
        count += RegionSpec("ConeSlab_CTR", T=T, R=R).contains(t, r)
    # dyadic boundaries have measure zero, so random points are covered once
    assert np.all(count >= 1) and np.all(count <= 2)


def test_u_levels():
    lv = G.u_levels(64, base=2.5)
    assert lv[0] == 1.0 and lv[-1] == pytest.approx(24.0)
    assert all(b / a == pytest.approx(2.5) for a, b in zip(lv[1:-1], lv[2:]))


# --- LE family -------------------------------------------------------------

def test_le_zero():
    F = synth(lambda t, r: 0 * t)
    assert G.le_norm(F, 0, 1).value == 0
    assert G.le_star_norm(F, 0, 1).value == 0


def test_le_unit_ball_indicator():
    F = synth(lambda t, r: (r <= 2.0).astype(float), dr=1e-3, r_max=6.0, nt=11)
    rep = G.le_norm(F, 0, 1)
    f = lambda r: (r * np.sqrt(1 + r * r) - np.arcsinh(r)) / 2
    oracle = np.sqrt(4 * np.pi * f(2.0))
    assert rep.value == pytest.approx(oracle, rel=1e-6)


def test_le_star_single_annulus():
    bump = lambda t, r: np.exp(1 - 1 / np.maximum(1 - ((r - 6) / 1.5) ** 2, 1e-300)) * (np.abs(r - 6) < 1.5)
    F = synth(bump, dr=1e-3, r_max=20.0, nt=11)
    star = G.le_star_norm(F, 0, 1).value
    inner = lambda r: br(r) * bump(0, r) ** 2 * 4 * np.pi * r * r
    oracle = np.sqrt(quad(inner, 4.5, 7.5, epsabs=1e-13)[0])
    assert star == pytest.approx(oracle, rel=1e-6)
    assert star >= G.le_norm(F, 0, 1).value


def test_le_envelope_against_quadrature():
    T = 16.0
    fn = lambda t, r: 1 / (br(r) * np.sqrt(br(t - r)))
    F = synth(fn, T, 2 * T, nt=801, dr=1e-2, r_max=64.0)
    rep = G.le_norm(F, T, 2 * T)
    best = 0.0
    for R in G.dyadic_R(64.0):
        lo, hi = (0.0, 2.0) if R == 1 else (R, min(2 * R, 64.0))
        g = lambda r, t: 4 * np.pi * r * r / br(r) * fn(t, r) ** 2
        val = dblquad(g, T, 2 * T, lo, hi, epsabs=1e-12, epsrel=1e-10)[0]
        best = max(best, np.sqrt(val))
    assert rep.value == pytest.approx(best, rel=1e-4)
    assert rep.err_est < 1e-3 * rep.value


def test_span_out_of_range():
    F = synth(lambda t, r: 0 * t)
    with pytest.raises(G.SpanOutOfRange):
        G.le_norm(F, 0, 2)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 0.4), st.floats(0.05, 0.3), st.floats(0.05, 0.3))
def test_norms_monotone_in_span(t0, d1, d2):
    F = synth(lambda t, r: np.cos(3 * t) * np.exp(-(r - 3) ** 2), dr=2e-2)
    for fn in (G.le_norm, G.le_star_norm):
        a = fn(F, t0, t0 + d1).value
        b = fn(F, t0, t0 + d1 + d2).value
        assert b >= a * (1 - 1e-9)


def test_quadrature_refinement_under_one_percent():
    fn = lambda t, r: np.cos(2 * t) * np.exp(-((r - 4 - t) / 1.5) ** 2)
    coarse = synth(fn, 0, 2, nt=41, dr=0.04, r_max=20.0)
    fine = synth(fn, 0, 2, nt=81, dr=0.02, r_max=20.0)
    for f in (G.le_norm, G.le_star_norm, G.strichartz_norm):
        a, b = f(coarse, 0, 2).value, f(fine, 0, 2).value
        assert abs(a - b) < 0.01 * b


# --- Strichartz ---------------------------------------------------------------

def test_strichartz_separable_oracle():
    a = lambda t: 1 + 0.5 * np.sin(t)
    b = lambda r: np.exp(-((r - 3) / 0.8) ** 2)
    F = synth(lambda t, r: a(t) * b(r), 0, 4, nt=801, dr=2e-3, r_max=8.0)
    val = G.strichartz_norm(F, 0, 4).value
    time_part = quad(lambda t: a(t) ** 5, 0, 4)[0]
    space = np.sqrt(4 * np.pi * quad(lambda r: b(r) ** 10 * r * r, 0, 8, epsabs=1e-14)[0])
    oracle = (time_part * space) ** 0.2
    assert val == pytest.approx(oracle, rel=1e-3)


def test_strichartz_zero_and_sparse():
    assert G.strichartz_norm(synth(lambda t, r: 0 * t), 0, 1).value == 0
    F = synth(lambda t, r: np.cos(40 * t) + 0 * r, 0, 1, nt=9)
    with pytest.raises(G.TooSparse):
        G.strichartz_norm(F, 0, 1)


# --- r^gamma ----------------------------------------------------------------

def test_egamma_static_oracle():
    gam, rmax, dr = 0.5, 20.0, 1e-3
    r = dr * np.arange(int(rmax / dr) + 1)
    phi = 1 / br(r)
    rep = G.rgamma_energy((r, phi, np.zeros_like(r)), gam)
    good = lambda x: x ** gam * (-x / br(x) ** 3 + 1 / (2 * x * br(x))) ** 2 * 4 * np.pi * x * x
    plain = lambda x: x ** gam / (x * br(x)) ** 2 * 4 * np.pi * x * x
    oracle = (np.sqrt(quad(good, 0, rmax, limit=200)[0]) + np.sqrt(quad(plain, 0, rmax, limit=200)[0])) ** 2
    assert rep.value == pytest.approx(oracle, rel=1e-4)


def test_gamma_range_and_zero():
    r = np.linspace(0, 5, 101)
    with pytest.raises(G.GammaOutOfRange):
        G.rgamma_energy((r, 0 * r, 0 * r), 1.0)
    assert G.rgamma_energy((r, 0 * r, 0 * r), 0.3).value == 0


def test_running_integral():
    t = np.linspace(0, 1, 11)
    assert G.running_integral(t, np.ones(11))[-1] == pytest.approx(1.0)


# --- cone integrals ------------------------------------------------------

def cone_oracle(t, r, R, fn=lambda s, rho: (1 + (s + rho) ** 2) ** -1):
    u, v = t - r, t + r
    lo_r, hi_r = (0.0, np.inf) if R is None else ((0.0, 2.0) if R == 1 else (R, 2.0 * R))
    lo = lambda rho: max(0.0, abs(u) - rho, rho - v)
    hi = lambda rho: max(lo(rho), min(u + rho, v - rho))
    return dblquad(fn, lo_r, min(hi_r, v), lo, hi, epsabs=1e-13, epsrel=1e-11)[0]


@pytest.mark.parametrize("apex,R", [((300.0, 220.0), 1), ((300.0, 220.0), 16), ((300.0, 220.0), 128),
                                    ((50.0, 80.0), 8), ((40.0, 5.0), None), ((12.0, 3.0), 2)])
def test_cone_integral_against_dblquad(apex, R):
    val = G.cone_integral(None, apex, G.v_plus_weight(-2), R=R)
    assert val == pytest.approx(cone_oracle(*apex, R), rel=1e-9)


def test_cone_integral_general_weight():
    w = lambda s, rho: rho * np.exp(-s / 10) * br(s - rho) ** -1.5
    val = G.cone_integral(None, (25.0, 9.0), w, R=4)
    assert val == pytest.approx(cone_oracle(25.0, 9.0, 4, w), rel=1e-8)


def test_cone_zero_and_apex_guard():
    assert G.cone_integral(None, (10.0, 3.0), lambda s, rho: 0 * s) == 0
    tr = E.evolve(E.decay_data(1e-3), K.flat(), 2.0, E.ObsPlan(k_store=8), dr=1 / 16)
    with pytest.raises(G.ApexOutOfRange):
        G.cone_integral(tr, (5.0, 1.0), G.v_plus_weight(-2))


def test_cone_integral_with_trace_field():
    # phi constant in the trace reproduces the pure weight integral
    dr = 1 / 16
    times = np.linspace(0, 10, 41)
    r = dr * np.arange(400)
    psi = np.tile(r, (41, 1))
    tr = E.SpacetimeTrace(dr, times, psi, 0 * psi, {}, {})
    val = G.cone_integral(tr, (8.0, 3.0), G.v_plus_weight(-2), field_fn=lambda f, s, rho: f)
    assert val == pytest.approx(G.cone_integral(None, (8.0, 3.0), G.v_plus_weight(-2)), rel=1e-10)


def test_R1_bound_uniform():
    for t, r in ((400.0, 100.0), (1600.0, 400.0), (6400.0, 1600.0)):
        u = t - r
        vals = [G.v_plus_norm((t, r), R) for R in G.dyadic_R(u / 8) if R < u / 8]
        assert max(vals) < 1.0


# --- Hardy and Sobolev harnesses ----------------------------------------------

def test_hardy_zero_and_constant():
    t, dr = 20.0, 1 / 32
    r = dr * np.arange(int(2 * t / dr) + 1)
    assert G.hardy_check(0 * r, t, r) == (0.0, 0.0, 0.0)
    lhs, rhs, ratio = G.hardy_check(np.ones_like(r), t, r)
    oracle_l = quad(lambda x: 4 * np.pi * x * x / (1 + (t - x) ** 2), t / 2, 3 * t / 2, points=[t])[0]
    oracle_r = 4 * np.pi / (3 * t * t) * ((t / 2) ** 3 - (t / 4) ** 3 + (7 * t / 4) ** 3 - (3 * t / 2) ** 3)
    assert lhs == pytest.approx(oracle_l, rel=1e-4)
    assert rhs == pytest.approx(oracle_r, rel=1e-4)


def test_hardy_family_constant_bounds_probe():
    t, dr = 40.0, 1 / 32
    fam = G.hardy_family(t)
    assert len(fam) == 50
    C = G.hardy_constant(t, dr, fam)
    r = dr * np.arange(int(2 * t / dr) + 1)
    for w in (1.0, 3.0, 8.0):
        probe = br(t - r) * np.exp(-((r - t) / w) ** 2)
        lhs, rhs, _ = G.hardy_check(probe, t, r)
        assert lhs <= C * rhs


def test_hardy_ratio_of_constant_grows_with_t():
    # the inequality's constant is not scale invariant: f = 1 gives a ratio ~ t
    dr = 1 / 16
    ratios = []
    for t in (20.0, 40.0, 80.0):
        r = dr * np.arange(int(2 * t / dr) + 1)
        ratios.append(G.hardy_check(np.ones_like(r), t, r)[2])
    assert 1.8 < ratios[1] / ratios[0] < 2.2 and 1.8 < ratios[2] / ratios[1] < 2.2


def test_sobolev_trivial_cases():
    reg = RegionSpec("ConeSlab_CTR", T=32, R=4)
    assert G.region_sobolev_check(lambda t, r: 0 * t, reg) == (0.0, 0.0, 0.0)
    lhs, rhs, ratio = G.region_sobolev_check(lambda t, r: np.ones_like(t), reg)
    assert lhs == 1.0 and rhs == pytest.approx(1.0, rel=1e-9)
    with pytest.raises(G.RegionUnsupported):
        G.region_sobolev_check(lambda t, r: 0 * t, RegionSpec("Annulus_AR", R=4))
    with pytest.raises(G.RegionUnsupported):
        G.region_sobolev_check(lambda t, r: 0 * t, RegionSpec("ConeSlab_CTR", T=8, R=4))


def test_sobolev_traveling_bump_stable_under_T_doubling():
    consts = []
    for T in (32.0, 64.0):
        reg = RegionSpec("ConeDist_CTU", T=T, U=T / 8)
        consts.append(G.sobolev_constant(reg, G.sobolev_family(reg, n=20), n=101))
    assert max(consts) / min(consts) < 1.5


# --- harness on a solver trace ------------------------------------------------

@pytest.fixture(scope="module")
def free_trace():
    data = E.CauchyData(amplitude=0.1, radius=2.0, phi0="bump", phi1="zero")
    return E.evolve(data, K.flat(), 64.0, E.ObsPlan(k_store=4), dr=1 / 16)


def test_le1_stabilises_for_free_wave(free_trace):
    a = G.le1_norm(free_trace, 0, 32).value
    b = G.le1_norm(free_trace, 0, 64).value
    assert b >= a and (b - a) / b < 0.05


def test_uv_decay_ratio_bounded(free_trace):
    rows = G.uv_decay_ratios(free_trace, [1, 2, 4, 8, 16])
    ratios = [x[3] for x in rows]
    assert len(ratios) == 5 and max(ratios) / min(ratios) < 10


def test_region_sobolev_on_trace(free_trace):
    reg = RegionSpec("ConeDist_CTU", T=16, U=4)
    lhs, rhs, ratio = G.region_sobolev_check(free_trace, reg)
    assert 0 < ratio < 2
